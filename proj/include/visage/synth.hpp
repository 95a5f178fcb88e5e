#pragma once

#include "visage/delaunay.hpp"
#include "visage/image.hpp"
#include "visage/pca.hpp"

namespace visage {

// Parametric frontal-face layout on the 224x224 canvas. The 27 boundary
// landmarks (17 chin + 2x5 eyebrows) sit exactly on a strictly convex
// ellipse, so they are the convex hull; with the 33 interior landmarks the
// Delaunay triangulation of the 60 points has 3*60 - 3 - 27 = 150 edges.
struct FaceParams {
    double cheek_width = 80.0;   // face ellipse x-radius
    double face_height = 90.0;   // face ellipse y-radius
    double eye_size = 1.0;       // eye outline scale
    double eye_spacing = 34.0;   // eye center offset from the midline
    double mouth_width = 26.0;
    double mouth_curve = 1.5;    // lip-corner lift (smile)
    double nose_length = 38.0;
    double nose_width = 11.0;
};

struct ParamStats {
    FaceParams mean, sigma;
};

// Class-conditional parameter distributions. The attractive class has
// strictly smaller mean cheek width and larger mean eye size.
inline ParamStats attractive_param_stats() {
    ParamStats s;
    s.mean = {74.0, 90.0, 1.12, 34.0, 26.0, 3.0, 36.0, 10.5};
    s.sigma = {3.0, 2.5, 0.05, 1.5, 1.5, 0.5, 2.0, 0.8};
    return s;
}

inline ParamStats unattractive_param_stats() {
    ParamStats s;
    s.mean = {86.0, 90.0, 0.92, 34.0, 26.0, 0.8, 38.0, 11.0};
    s.sigma = {3.0, 2.5, 0.05, 1.5, 1.5, 0.5, 2.0, 0.8};
    return s;
}

inline FaceParams reference_params() { return FaceParams{}; }

namespace detail {

inline double clamp(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace detail

inline FaceParams sample_params(const ParamStats& stats, Rng& rng) {
    FaceParams p;
    p.cheek_width = detail::clamp(rng.normal(stats.mean.cheek_width, stats.sigma.cheek_width), 60.0, 96.0);
    p.face_height = detail::clamp(rng.normal(stats.mean.face_height, stats.sigma.face_height), 80.0, 100.0);
    p.eye_size = detail::clamp(rng.normal(stats.mean.eye_size, stats.sigma.eye_size), 0.75, 1.35);
    p.eye_spacing = detail::clamp(rng.normal(stats.mean.eye_spacing, stats.sigma.eye_spacing), 28.0, 40.0);
    p.mouth_width = detail::clamp(rng.normal(stats.mean.mouth_width, stats.sigma.mouth_width), 20.0, 32.0);
    p.mouth_curve = detail::clamp(rng.normal(stats.mean.mouth_curve, stats.sigma.mouth_curve), -1.0, 5.0);
    p.nose_length = detail::clamp(rng.normal(stats.mean.nose_length, stats.sigma.nose_length), 30.0, 46.0);
    p.nose_width = detail::clamp(rng.normal(stats.mean.nose_width, stats.sigma.nose_width), 8.0, 14.0);
    return p;
}

// Landmark group index ranges (fixed layout):
//   chin 0..16, left_eyebrow 17..21, right_eyebrow 22..26,
//   left_eye 27..32, right_eye 33..38, nose_bridge 39..42,
//   nose_tip 43..47, top_lip 48..54, bottom_lip 55..59.
inline LandmarkSet layout_landmarks(const FaceParams& p, double jitter_sigma = 0.0,
                                    Rng* rng = nullptr) {
    const double cx = 112.0, cy = 118.0;
    const double rx = p.cheek_width, ry = p.face_height;
    const double deg = 3.14159265358979323846 / 180.0;

    LandmarkSet lms;
    lms.points.reserve(60);
    auto on_ellipse = [&](double theta_deg) {
        double theta = theta_deg * deg;
        if (rng && jitter_sigma > 0.0) theta += rng->normal(0.0, jitter_sigma / rx);
        return Point2{cx + rx * std::cos(theta), cy - ry * std::sin(theta)};
    };
    auto interior = [&](double x, double y) {
        if (rng && jitter_sigma > 0.0) {
            x += rng->normal(0.0, jitter_sigma);
            y += rng->normal(0.0, jitter_sigma);
        }
        return Point2{x, y};
    };

    // Chin: lower ellipse arc, left cheek to right cheek.
    for (int k = 0; k < 17; ++k) lms.points.push_back(on_ellipse(187.5 + 10.3125 * k));
    // Eyebrows: upper ellipse arcs.
    for (int k = 0; k < 5; ++k) lms.points.push_back(on_ellipse(110.0 + 10.0 * k));
    for (int k = 0; k < 5; ++k) lms.points.push_back(on_ellipse(30.0 + 10.0 * k));

    // Eyes: 6-point outlines around (cx +- eye_spacing, eye level).
    const double ey = cy - 0.28 * ry;
    const double rex = 10.0 * p.eye_size, rey = 6.0 * p.eye_size;
    for (int side = 0; side < 2; ++side) {
        const double ecx = side == 0 ? cx - p.eye_spacing : cx + p.eye_spacing;
        for (int k = 0; k < 6; ++k) {
            const double a = 60.0 * k * deg;
            lms.points.push_back(interior(ecx + rex * std::cos(a), ey - rey * std::sin(a)));
        }
    }

    // Nose bridge: vertical run from eye level downward.
    const double bridge_top = ey + 4.0;
    for (int k = 0; k < 4; ++k)
        lms.points.push_back(interior(cx, bridge_top + p.nose_length * (k + 1) / 4.0));
    // Nose tip arc under the bridge.
    const double ny = bridge_top + p.nose_length + 4.0;
    lms.points.push_back(interior(cx - p.nose_width, ny));
    lms.points.push_back(interior(cx - 0.5 * p.nose_width, ny + 2.5));
    lms.points.push_back(interior(cx, ny + 3.5));
    lms.points.push_back(interior(cx + 0.5 * p.nose_width, ny + 2.5));
    lms.points.push_back(interior(cx + p.nose_width, ny));

    // Lips around the mouth line.
    const double my = cy + 0.52 * ry;
    const double mw = p.mouth_width;
    lms.points.push_back(interior(cx - mw, my - p.mouth_curve));
    lms.points.push_back(interior(cx - 0.55 * mw, my - 4.2));
    lms.points.push_back(interior(cx - 0.20 * mw, my - 3.2));
    lms.points.push_back(interior(cx, my - 3.8));
    lms.points.push_back(interior(cx + 0.20 * mw, my - 3.2));
    lms.points.push_back(interior(cx + 0.55 * mw, my - 4.2));
    lms.points.push_back(interior(cx + mw, my - p.mouth_curve));
    lms.points.push_back(interior(cx - 0.62 * mw, my + 1.8));
    lms.points.push_back(interior(cx - 0.26 * mw, my + 4.8));
    lms.points.push_back(interior(cx, my + 6.0));
    lms.points.push_back(interior(cx + 0.26 * mw, my + 4.8));
    lms.points.push_back(interior(cx + 0.62 * mw, my + 1.8));

    auto range = [](std::size_t a, std::size_t b) {
        std::vector<std::size_t> v;
        for (std::size_t i = a; i <= b; ++i) v.push_back(i);
        return v;
    };
    lms.groups["chin"] = range(0, 16);
    lms.groups["left_eyebrow"] = range(17, 21);
    lms.groups["right_eyebrow"] = range(22, 26);
    lms.groups["left_eye"] = range(27, 32);
    lms.groups["right_eye"] = range(33, 38);
    lms.groups["nose_bridge"] = range(39, 42);
    lms.groups["nose_tip"] = range(43, 47);
    lms.groups["top_lip"] = range(48, 54);
    lms.groups["bottom_lip"] = range(55, 59);
    lms.validate();
    return lms;
}

// The bundled reference fixture: default parameters, no jitter.
inline LandmarkSet reference_landmarks() { return layout_landmarks(reference_params()); }

// Cheek width statistic: distance between the chin arc endpoints (the two
// cheek-level boundary landmarks). Proportional to the cheek_width parameter
// on unjittered layouts.
inline double cheek_width_measure(const LandmarkSet& lms) {
    return dist(lms.points.at(0), lms.points.at(16));
}

// ---- Rendering ----
// Filled polygonal render driven purely by the landmark positions, so pixel
// content and geometry code stay consistent by construction.

namespace detail {

struct Rgb {
    double r, g, b;
};

inline void fill_polygon(ImageBuffer& img, const std::vector<Point2>& poly, Rgb color,
                         double scale) {
    if (poly.size() < 3) return;
    double ylo = poly[0].y, yhi = poly[0].y, xlo = poly[0].x, xhi = poly[0].x;
    for (const Point2& p : poly) {
        ylo = std::min(ylo, p.y);
        yhi = std::max(yhi, p.y);
        xlo = std::min(xlo, p.x);
        xhi = std::max(xhi, p.x);
    }
    const int y0 = std::max(0, static_cast<int>(std::floor(ylo * scale)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(yhi * scale)));
    const int x0 = std::max(0, static_cast<int>(std::floor(xlo * scale)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(xhi * scale)));
    for (int py = y0; py <= y1; ++py) {
        const double sy = (py + 0.5) / scale;
        for (int px = x0; px <= x1; ++px) {
            const double sx = (px + 0.5) / scale;
            bool inside = false;  // even-odd crossing rule
            for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
                const Point2& a = poly[i];
                const Point2& b = poly[j];
                if ((a.y > sy) != (b.y > sy) &&
                    sx < (b.x - a.x) * (sy - a.y) / (b.y - a.y) + a.x)
                    inside = !inside;
            }
            if (inside) {
                img.set(py, px, 0, color.r);
                img.set(py, px, 1, color.g);
                img.set(py, px, 2, color.b);
            }
        }
    }
}

inline void stroke_polyline(ImageBuffer& img, const std::vector<Point2>& pts, Rgb color,
                            double thickness, double scale) {
    const double t = thickness * scale * 0.5;
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
        const Point2 a{pts[s].x * scale, pts[s].y * scale};
        const Point2 b{pts[s + 1].x * scale, pts[s + 1].y * scale};
        const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x, b.x) - t)));
        const int x1 = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(a.x, b.x) + t)));
        const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y, b.y) - t)));
        const int y1 = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(a.y, b.y) + t)));
        const double abx = b.x - a.x, aby = b.y - a.y;
        const double len2 = abx * abx + aby * aby;
        for (int py = y0; py <= y1; ++py)
            for (int px = x0; px <= x1; ++px) {
                const double qx = px + 0.5, qy = py + 0.5;
                double u = len2 > 0.0 ? ((qx - a.x) * abx + (qy - a.y) * aby) / len2 : 0.0;
                u = clamp(u, 0.0, 1.0);
                const double dx = qx - (a.x + u * abx), dy = qy - (a.y + u * aby);
                if (dx * dx + dy * dy <= t * t) {
                    img.set(py, px, 0, color.r);
                    img.set(py, px, 1, color.g);
                    img.set(py, px, 2, color.b);
                }
            }
    }
}

inline std::vector<Point2> gather(const LandmarkSet& lms, const std::vector<std::size_t>& idx) {
    std::vector<Point2> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(lms.points.at(i));
    return out;
}

}  // namespace detail

inline ImageBuffer render_face(const LandmarkSet& lms, int resolution) {
    if (lms.size() != 60) throw ShapeError("render_face: expected the 60-landmark layout");
    ImageBuffer img(resolution, resolution, 3);
    const double scale = resolution / 224.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            img.set(y, x, 0, 0.14);
            img.set(y, x, 1, 0.13);
            img.set(y, x, 2, 0.15);
        }

    // Face region: boundary landmarks in ascending ellipse angle.
    std::vector<Point2> boundary;
    for (std::size_t i = 22; i <= 26; ++i) boundary.push_back(lms.points[i]);  // right brow
    for (std::size_t i = 17; i <= 21; ++i) boundary.push_back(lms.points[i]);  // left brow
    for (std::size_t i = 0; i <= 16; ++i) boundary.push_back(lms.points[i]);   // chin
    detail::fill_polygon(img, boundary, {0.87, 0.72, 0.60}, scale);

    // Eyebrows.
    detail::stroke_polyline(img, detail::gather(lms, lms.groups.at("left_eyebrow")),
                            {0.25, 0.18, 0.12}, 2.6, scale);
    detail::stroke_polyline(img, detail::gather(lms, lms.groups.at("right_eyebrow")),
                            {0.25, 0.18, 0.12}, 2.6, scale);

    // Eyes: white outline polygon plus an iris disc sized from the outline.
    for (const char* eye : {"left_eye", "right_eye"}) {
        const auto poly = detail::gather(lms, lms.groups.at(eye));
        detail::fill_polygon(img, poly, {0.95, 0.95, 0.95}, scale);
        Point2 c{0.0, 0.0};
        for (const Point2& p : poly) {
            c.x += p.x / poly.size();
            c.y += p.y / poly.size();
        }
        double rad = 0.0;
        for (const Point2& p : poly) rad += dist(c, p) / poly.size();
        std::vector<Point2> iris;
        for (int k = 0; k < 10; ++k) {
            const double a = 2.0 * 3.14159265358979323846 * k / 10.0;
            iris.push_back({c.x + 0.55 * rad * std::cos(a), c.y + 0.55 * rad * std::sin(a)});
        }
        detail::fill_polygon(img, iris, {0.15, 0.13, 0.25}, scale);
    }

    // Nose.
    detail::stroke_polyline(img, detail::gather(lms, lms.groups.at("nose_bridge")),
                            {0.62, 0.48, 0.38}, 1.8, scale);
    detail::stroke_polyline(img, detail::gather(lms, lms.groups.at("nose_tip")),
                            {0.62, 0.48, 0.38}, 1.8, scale);

    // Mouth: top lip left-to-right, bottom lip right-to-left.
    std::vector<Point2> mouth = detail::gather(lms, lms.groups.at("top_lip"));
    {
        const auto bottom = detail::gather(lms, lms.groups.at("bottom_lip"));
        mouth.insert(mouth.end(), bottom.rbegin(), bottom.rend());
    }
    detail::fill_polygon(img, mouth, {0.72, 0.30, 0.32}, scale);
    return img;
}

// ---- Dataset generation ----

struct SynthSpec {
    std::uint64_t seed = 1;
    int render_resolution = 56;
    double jitter_sigma = 0.5;
    std::size_t pca_k = 32;
    ParamStats attractive = attractive_param_stats();
    ParamStats unattractive = unattractive_param_stats();
};

struct SynthSample {
    std::string id;
    bool attractive = false;
    FaceParams params;
    LandmarkSet landmarks;
};

struct SynthDataset {
    std::vector<SynthSample> samples;
    FaceMesh mesh;           // triangulation of the mean landmark layout
    PcaModel pca;            // fitted on all sample distance vectors
    std::vector<GeometryCode> codes;  // aligned with samples
};

inline std::vector<SynthSample> generate_samples(const SynthSpec& spec, std::size_t n_attractive,
                                                 std::size_t n_unattractive) {
    Rng rng(spec.seed);
    std::vector<SynthSample> out;
    out.reserve(n_attractive + n_unattractive);
    char name[32];
    for (std::size_t i = 0; i < n_attractive + n_unattractive; ++i) {
        SynthSample s;
        s.attractive = i < n_attractive;
        std::snprintf(name, sizeof name, "%s%05zu", s.attractive ? "attr" : "unattr",
                      s.attractive ? i : i - n_attractive);
        s.id = name;
        s.params = sample_params(s.attractive ? spec.attractive : spec.unattractive, rng);
        s.landmarks = layout_landmarks(s.params, spec.jitter_sigma, &rng);
        out.push_back(std::move(s));
    }
    return out;
}

inline LandmarkSet mean_landmarks(const std::vector<SynthSample>& samples) {
    if (samples.empty()) throw DegenerateInput("mean_landmarks: no samples");
    LandmarkSet mean = samples[0].landmarks;
    for (Point2& p : mean.points) p = {0.0, 0.0};
    for (const SynthSample& s : samples)
        for (std::size_t i = 0; i < mean.points.size(); ++i) {
            mean.points[i].x += s.landmarks.points[i].x / samples.size();
            mean.points[i].y += s.landmarks.points[i].y / samples.size();
        }
    return mean;
}

inline SynthDataset build_dataset(const SynthSpec& spec, std::size_t n_attractive,
                                  std::size_t n_unattractive) {
    SynthDataset ds;
    ds.samples = generate_samples(spec, n_attractive, n_unattractive);
    ds.mesh = triangulate(mean_landmarks(ds.samples));
    std::vector<DistanceVector> dists;
    dists.reserve(ds.samples.size());
    for (const SynthSample& s : ds.samples) dists.push_back(extract_distances(s.landmarks, ds.mesh));
    ds.pca = pca_fit(dists, spec.pca_k);
    ds.codes.reserve(dists.size());
    for (const auto& d : dists) ds.codes.push_back(pca_encode(ds.pca, d));
    return ds;
}

}  // namespace visage
