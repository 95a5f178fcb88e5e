#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>
#include <zlib.h>

#include "visage/common.hpp"

namespace visage {

// H x W x C raster of reals in [0,1], row-major (y, x, channel); 1 or 3
// channels. Values are clamped on write through set().
struct ImageBuffer {
    int width = 0, height = 0, channels = 0;
    std::vector<double> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * h * c, fill) {
        if (w <= 0 || h <= 0 || (c != 1 && c != 3))
            throw ShapeError("image: dimensions must be positive with 1 or 3 channels");
    }

    std::size_t index(int y, int x, int c) const {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double at(int y, int x, int c) const { return data[index(y, x, c)]; }
    void set(int y, int x, int c, double v) {
        data[index(y, x, c)] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }

    bool same_shape(const ImageBuffer& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

inline double mean_abs_diff(const ImageBuffer& a, const ImageBuffer& b) {
    if (!a.same_shape(b)) throw ShapeError("mean_abs_diff: image shapes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::fabs(a.data[i] - b.data[i]);
    return a.data.empty() ? 0.0 : s / static_cast<double>(a.data.size());
}

// ---- PNG (8-bit grayscale / RGB, non-interlaced) ----

namespace pngio {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

inline void write_chunk(std::vector<unsigned char>& out, const char type[4],
                        const std::vector<unsigned char>& payload) {
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    const std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uLong crc = ::crc32(::crc32(0L, nullptr, 0), out.data() + crc_start,
                              static_cast<uInt>(out.size() - crc_start));
    put_u32(out, static_cast<std::uint32_t>(crc));
}

inline unsigned char paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
    if (pb <= pc) return static_cast<unsigned char>(b);
    return static_cast<unsigned char>(c);
}

}  // namespace pngio

inline unsigned char to_u8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 1.0) return 255;
    return static_cast<unsigned char>(std::lround(v * 255.0));
}

inline std::vector<unsigned char> encode_png(const ImageBuffer& img) {
    if (img.width <= 0 || img.height <= 0 || (img.channels != 1 && img.channels != 3))
        throw ShapeError("encode_png: unsupported image shape");
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    std::vector<unsigned char> raw((stride + 1) * img.height);
    std::size_t pos = 0;
    for (int y = 0; y < img.height; ++y) {
        raw[pos++] = 0;  // filter: None
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) raw[pos++] = to_u8(img.at(y, x, c));
    }

    uLongf bound = ::compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(bound);
    if (::compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) !=
        Z_OK)
        throw Error("encode_png: deflate failed");
    compressed.resize(bound);

    std::vector<unsigned char> out = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<unsigned char> ihdr;
    pngio::put_u32(ihdr, static_cast<std::uint32_t>(img.width));
    pngio::put_u32(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);                                      // bit depth
    ihdr.push_back(img.channels == 1 ? 0 : 2);              // gray / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    pngio::write_chunk(out, "IHDR", ihdr);
    pngio::write_chunk(out, "IDAT", compressed);
    pngio::write_chunk(out, "IEND", {});
    return out;
}

inline ImageBuffer decode_png(const std::vector<unsigned char>& bytes) {
    static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    if (bytes.size() < 8 || std::memcmp(bytes.data(), sig, 8) != 0)
        throw ParseError("decode_png: not a PNG file");
    std::size_t pos = 8;
    int width = 0, height = 0, channels = 0;
    bool seen_ihdr = false;
    std::vector<unsigned char> idat;
    while (pos + 8 <= bytes.size()) {
        const std::uint32_t len = pngio::get_u32(bytes.data() + pos);
        if (pos + 12 + len > bytes.size()) throw ParseError("decode_png: truncated chunk");
        const char* type = reinterpret_cast<const char*>(bytes.data() + pos + 4);
        const unsigned char* payload = bytes.data() + pos + 8;
        const uLong crc = ::crc32(::crc32(0L, nullptr, 0), bytes.data() + pos + 4, 4 + len);
        if (static_cast<std::uint32_t>(crc) != pngio::get_u32(payload + len))
            throw ParseError("decode_png: chunk CRC mismatch");
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw ParseError("decode_png: bad IHDR length");
            width = static_cast<int>(pngio::get_u32(payload));
            height = static_cast<int>(pngio::get_u32(payload + 4));
            const int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8) throw ParseError("decode_png: only 8-bit depth supported");
            if (color == 0)
                channels = 1;
            else if (color == 2)
                channels = 3;
            else
                throw ParseError("decode_png: only grayscale and RGB supported");
            if (interlace != 0) throw ParseError("decode_png: interlacing not supported");
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || width <= 0 || height <= 0) throw ParseError("decode_png: missing IHDR");

    const std::size_t stride = static_cast<std::size_t>(width) * channels;
    std::vector<unsigned char> raw((stride + 1) * height);
    uLongf raw_size = static_cast<uLongf>(raw.size());
    const int zrc = ::uncompress(raw.data(), &raw_size, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_size != raw.size())
        throw ParseError("decode_png: inflate failed or size mismatch");

    // Undo per-row filtering.
    const int bpp = channels;
    std::vector<unsigned char> prev(stride, 0), cur(stride, 0);
    ImageBuffer img(width, height, channels);
    for (int y = 0; y < height; ++y) {
        const unsigned char* row = raw.data() + static_cast<std::size_t>(y) * (stride + 1);
        const unsigned char filter = row[0];
        for (std::size_t i = 0; i < stride; ++i) {
            const int x = row[1 + i];
            const int a = i >= static_cast<std::size_t>(bpp) ? cur[i - bpp] : 0;
            const int b = prev[i];
            const int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
            int v = 0;
            switch (filter) {
                case 0: v = x; break;
                case 1: v = x + a; break;
                case 2: v = x + b; break;
                case 3: v = x + (a + b) / 2; break;
                case 4: v = x + pngio::paeth(a, b, c); break;
                default: throw ParseError("decode_png: unknown filter type");
            }
            cur[i] = static_cast<unsigned char>(v & 0xff);
        }
        for (int x = 0; x < width; ++x)
            for (int ch = 0; ch < channels; ++ch)
                img.data[img.index(y, x, ch)] =
                    cur[static_cast<std::size_t>(x) * channels + ch] / 255.0;
        std::swap(prev, cur);
    }
    return img;
}

inline void write_png(const std::string& path, const ImageBuffer& img) {
    const auto bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("write_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write_png: write failed for " + path);
}

inline ImageBuffer read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("read_png: cannot open " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace visage
