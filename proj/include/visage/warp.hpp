#pragma once

#include "visage/geometry.hpp"
#include "visage/image.hpp"

namespace visage {

// Bilinear sample with clamp-to-edge semantics.
inline double bilinear_sample(const ImageBuffer& img, double sx, double sy, int c) {
    sx = std::min(std::max(sx, 0.0), static_cast<double>(img.width - 1));
    sy = std::min(std::max(sy, 0.0), static_cast<double>(img.height - 1));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = sx - x0, fy = sy - y0;
    const double top = img.at(y0, x0, c) * (1.0 - fx) + img.at(y0, x1, c) * fx;
    const double bot = img.at(y1, x0, c) * (1.0 - fx) + img.at(y1, x1, c) * fx;
    return top * (1.0 - fy) + bot * fy;
}

struct CropBox {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;
};

// Crop and bilinearly resample to a square output (224 by default).
// Output pixel (ox, oy) samples source (x + (ox+0.5)*w/out - 0.5,
//                                       y + (oy+0.5)*h/out - 0.5).
inline ImageBuffer normalize_face(const ImageBuffer& img, const CropBox& box, int out_size = 224) {
    if (!(box.w > 0.0) || !(box.h > 0.0)) throw DegenerateInput("normalize_face: empty crop box");
    if (box.x < 0.0 || box.y < 0.0 || box.x + box.w > img.width || box.y + box.h > img.height)
        throw DegenerateInput("normalize_face: crop box outside image");
    ImageBuffer out(out_size, out_size, img.channels);
    const double sx_scale = box.w / out_size, sy_scale = box.h / out_size;
    for (int oy = 0; oy < out_size; ++oy) {
        const double sy = box.y + (oy + 0.5) * sy_scale - 0.5;
        for (int ox = 0; ox < out_size; ++ox) {
            const double sx = box.x + (ox + 0.5) * sx_scale - 0.5;
            for (int c = 0; c < img.channels; ++c)
                out.data[out.index(oy, ox, c)] = bilinear_sample(img, sx, sy, c);
        }
    }
    return out;
}

// Piecewise-affine warp: for every destination-mesh triangle, pixels inside
// it are pulled from the source triangle through the inverse affine map
// (barycentric transfer) with bilinear sampling. Pixels outside all
// destination triangles are copied through from the source. Membership ties
// on shared edges go to the first triangle in list order.
inline ImageBuffer warp_face(const ImageBuffer& img, const LandmarkSet& src,
                             const LandmarkSet& dst, const FaceMesh& mesh,
                             std::vector<std::string>* warnings = nullptr) {
    if (src.size() != dst.size())
        throw ShapeError("warp_face: source and destination landmark counts differ");
    for (const auto& t : mesh.triangles)
        for (std::size_t v : t)
            if (v >= src.size()) throw ShapeError("warp_face: mesh references missing landmark");

    ImageBuffer out = img;
    std::vector<char> claimed(static_cast<std::size_t>(img.width) * img.height, 0);

    for (std::size_t ti = 0; ti < mesh.triangles.size(); ++ti) {
        const auto& t = mesh.triangles[ti];
        const Point2 a = dst.points[t[0]], b = dst.points[t[1]], c = dst.points[t[2]];
        const Point2 sa = src.points[t[0]], sb = src.points[t[1]], sc = src.points[t[2]];
        const double area2 = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if (std::fabs(area2) < 1e-12) {
            if (warnings)
                warnings->push_back("degenerate destination triangle " + std::to_string(ti) +
                                    "; pixels fall through to neighbors/source");
            continue;
        }
        const int x_lo = std::max(0, static_cast<int>(std::floor(std::min({a.x, b.x, c.x}))));
        const int x_hi = std::min(img.width - 1, static_cast<int>(std::ceil(std::max({a.x, b.x, c.x}))));
        const int y_lo = std::max(0, static_cast<int>(std::floor(std::min({a.y, b.y, c.y}))));
        const int y_hi = std::min(img.height - 1, static_cast<int>(std::ceil(std::max({a.y, b.y, c.y}))));
        for (int py = y_lo; py <= y_hi; ++py) {
            for (int px = x_lo; px <= x_hi; ++px) {
                const std::size_t flat = static_cast<std::size_t>(py) * img.width + px;
                if (claimed[flat]) continue;
                const double vx = static_cast<double>(px), vy = static_cast<double>(py);
                const double w0 = ((b.x - vx) * (c.y - vy) - (b.y - vy) * (c.x - vx)) / area2;
                const double w1 = ((c.x - vx) * (a.y - vy) - (c.y - vy) * (a.x - vx)) / area2;
                const double w2 = 1.0 - w0 - w1;
                if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
                claimed[flat] = 1;
                const double sx = w0 * sa.x + w1 * sb.x + w2 * sc.x;
                const double sy = w0 * sa.y + w1 * sb.y + w2 * sc.y;
                for (int ch = 0; ch < img.channels; ++ch)
                    out.data[out.index(py, px, ch)] = bilinear_sample(img, sx, sy, ch);
            }
        }
    }
    return out;
}

}  // namespace visage
