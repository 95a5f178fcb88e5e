#pragma once

#include <functional>
#include <memory>

#include "visage/image.hpp"
#include "visage/network.hpp"
#include "visage/pca.hpp"

namespace visage {

// Eq-style least-squares adversarial losses operate on discriminator scores;
// the full-scale appearance discriminator itself is pluggable and out of the
// desk-scale build, so the losses stay extractor-agnostic.

inline double mean_sq(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// L_D = E[D(G(x))^2] + E[D(x)^2] + E[(1 - D(y))^2]
inline double adv_d_loss(const std::vector<double>& d_fake, const std::vector<double>& d_x,
                         const std::vector<double>& d_y,
                         std::vector<double>* grad_fake = nullptr,
                         std::vector<double>* grad_x = nullptr,
                         std::vector<double>* grad_y = nullptr) {
    if (d_fake.empty() || d_x.empty() || d_y.empty())
        throw DegenerateInput("adv_d_loss: empty score batch");
    double loss = mean_sq(d_fake) + mean_sq(d_x);
    double s = 0.0;
    for (double y : d_y) s += (1.0 - y) * (1.0 - y);
    loss += s / static_cast<double>(d_y.size());
    if (grad_fake) {
        grad_fake->resize(d_fake.size());
        for (std::size_t i = 0; i < d_fake.size(); ++i)
            (*grad_fake)[i] = 2.0 * d_fake[i] / static_cast<double>(d_fake.size());
    }
    if (grad_x) {
        grad_x->resize(d_x.size());
        for (std::size_t i = 0; i < d_x.size(); ++i)
            (*grad_x)[i] = 2.0 * d_x[i] / static_cast<double>(d_x.size());
    }
    if (grad_y) {
        grad_y->resize(d_y.size());
        for (std::size_t i = 0; i < d_y.size(); ++i)
            (*grad_y)[i] = -2.0 * (1.0 - d_y[i]) / static_cast<double>(d_y.size());
    }
    return loss;
}

// L_G = E[(1 - D(G(x)))^2]
inline double adv_g_loss(const std::vector<double>& d_fake,
                         std::vector<double>* grad_fake = nullptr) {
    if (d_fake.empty()) throw DegenerateInput("adv_g_loss: empty score batch");
    double s = 0.0;
    for (double v : d_fake) s += (1.0 - v) * (1.0 - v);
    if (grad_fake) {
        grad_fake->resize(d_fake.size());
        for (std::size_t i = 0; i < d_fake.size(); ++i)
            (*grad_fake)[i] = -2.0 * (1.0 - d_fake[i]) / static_cast<double>(d_fake.size());
    }
    return s / static_cast<double>(d_fake.size());
}

// Mean absolute pixel difference, (1/WHC) * sum |x - xhat|.
inline double pixel_loss(const ImageBuffer& x, const ImageBuffer& xhat,
                         ImageBuffer* grad_xhat = nullptr) {
    if (!x.same_shape(xhat)) throw ShapeError("pixel_loss: image shapes differ");
    const double inv = 1.0 / static_cast<double>(x.data.size());
    double s = 0.0;
    if (grad_xhat) *grad_xhat = ImageBuffer(x.width, x.height, x.channels);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const double d = xhat.data[i] - x.data[i];
        s += std::fabs(d);
        if (grad_xhat) grad_xhat->data[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
    }
    return s * inv;
}

// Anisotropic total variation: mean over the contributing neighbor pairs of
// |xhat[y+1,x] - xhat[y,x]| and |xhat[y,x+1] - xhat[y,x]|. The normalizer is
// the number of summed terms, C * ((H-1)*W + H*(W-1)).
inline double tv_loss(const ImageBuffer& img, ImageBuffer* grad = nullptr) {
    const std::size_t terms = static_cast<std::size_t>(img.channels) *
                              (static_cast<std::size_t>(img.height - 1) * img.width +
                               static_cast<std::size_t>(img.height) * (img.width - 1));
    if (terms == 0) return 0.0;
    const double inv = 1.0 / static_cast<double>(terms);
    if (grad) *grad = ImageBuffer(img.width, img.height, img.channels);
    double s = 0.0;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                if (y + 1 < img.height) {
                    const double d = img.at(y + 1, x, c) - img.at(y, x, c);
                    s += std::fabs(d);
                    if (grad && d != 0.0) {
                        const double g = d > 0.0 ? inv : -inv;
                        grad->data[grad->index(y + 1, x, c)] += g;
                        grad->data[grad->index(y, x, c)] -= g;
                    }
                }
                if (x + 1 < img.width) {
                    const double d = img.at(y, x + 1, c) - img.at(y, x, c);
                    s += std::fabs(d);
                    if (grad && d != 0.0) {
                        const double g = d > 0.0 ? inv : -inv;
                        grad->data[grad->index(y, x + 1, c)] += g;
                        grad->data[grad->index(y, x, c)] -= g;
                    }
                }
            }
    return s * inv;
}

// Face-identity embedding interface. The bundled stand-in is a flattened
// grayscale downsample, L2-normalized; any external descriptor (e.g. a real
// face recognition network) can be dropped in behind the same interface.
class IdentityDescriptor {
public:
    virtual ~IdentityDescriptor() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> describe(const ImageBuffer& img) const = 0;
    virtual bool differentiable() const { return false; }
    // Pull a descriptor-space gradient back to image space.
    virtual ImageBuffer pullback(const ImageBuffer&, const std::vector<double>&) const {
        throw Error("identity descriptor: gradient not available");
    }
};

class PoolingIdentityDescriptor final : public IdentityDescriptor {
public:
    explicit PoolingIdentityDescriptor(int grid = 16) : grid_(grid) {}

    std::size_t dimension() const override { return static_cast<std::size_t>(grid_) * grid_; }

    std::vector<double> describe(const ImageBuffer& img) const override {
        const auto pooled = pool(img);
        return normalize(pooled).first;
    }

    bool differentiable() const override { return true; }

    ImageBuffer pullback(const ImageBuffer& img, const std::vector<double>& ddesc) const override {
        const auto pooled = pool(img);
        auto [unit, norm] = normalize(pooled);
        // d(z/|z|) = (I - uu^T)/|z|
        std::vector<double> dp(pooled.size(), 0.0);
        if (norm > 1e-12) {
            double dot = 0.0;
            for (std::size_t i = 0; i < pooled.size(); ++i) dot += ddesc[i] * unit[i];
            for (std::size_t i = 0; i < pooled.size(); ++i)
                dp[i] = (ddesc[i] - dot * unit[i]) / norm;
        }
        ImageBuffer grad(img.width, img.height, img.channels);
        const double cinv = 1.0 / img.channels;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                const std::size_t bin = bin_index(img, x, y);
                const double w = dp[bin] * cinv / bin_size(img, x, y);
                for (int c = 0; c < img.channels; ++c)
                    grad.data[grad.index(y, x, c)] = w;
            }
        return grad;
    }

private:
    int grid_;

    std::size_t bin_index(const ImageBuffer& img, int x, int y) const {
        const int bx = std::min(grid_ - 1, x * grid_ / img.width);
        const int by = std::min(grid_ - 1, y * grid_ / img.height);
        return static_cast<std::size_t>(by) * grid_ + bx;
    }

    double bin_size(const ImageBuffer& img, int x, int y) const {
        const int bx = std::min(grid_ - 1, x * grid_ / img.width);
        const int by = std::min(grid_ - 1, y * grid_ / img.height);
        const int x0 = (bx * img.width + grid_ - 1) / grid_, x1 = ((bx + 1) * img.width + grid_ - 1) / grid_;
        const int y0 = (by * img.height + grid_ - 1) / grid_, y1 = ((by + 1) * img.height + grid_ - 1) / grid_;
        return static_cast<double>(std::max(1, x1 - x0)) * std::max(1, y1 - y0);
    }

    std::vector<double> pool(const ImageBuffer& img) const {
        std::vector<double> sums(dimension(), 0.0), counts(dimension(), 0.0);
        const double cinv = 1.0 / img.channels;
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double lum = 0.0;
                for (int c = 0; c < img.channels; ++c) lum += img.at(y, x, c);
                const std::size_t bin = bin_index(img, x, y);
                sums[bin] += lum * cinv;
                counts[bin] += 1.0;
            }
        for (std::size_t i = 0; i < sums.size(); ++i)
            if (counts[i] > 0.0) sums[i] /= counts[i];
        return sums;
    }

    static std::pair<std::vector<double>, double> normalize(const std::vector<double>& v) {
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        std::vector<double> unit(v.size(), 0.0);
        if (norm > 1e-12)
            for (std::size_t i = 0; i < v.size(); ++i) unit[i] = v[i] / norm;
        return {unit, norm};
    }
};

// L_id = ||psi(x) - psi(xhat)||_2
inline double identity_loss(const IdentityDescriptor& psi, const ImageBuffer& x,
                            const ImageBuffer& xhat, ImageBuffer* grad_xhat = nullptr) {
    const auto u = psi.describe(x);
    const auto v = psi.describe(xhat);
    if (u.size() != v.size()) throw ShapeError("identity_loss: descriptor dimensions differ");
    double sq = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) sq += (u[i] - v[i]) * (u[i] - v[i]);
    const double loss = std::sqrt(sq);
    if (grad_xhat) {
        std::vector<double> dv(v.size(), 0.0);
        if (loss > 1e-12)
            for (std::size_t i = 0; i < v.size(); ++i) dv[i] = (v[i] - u[i]) / loss;
        *grad_xhat = psi.pullback(xhat, dv);
    }
    return loss;
}

// Multi-layer feature interface for pyramid-style discriminators; the
// bundled implementation reads tapped activations from a tensorcore network.
class FeatureExtractor {
public:
    virtual ~FeatureExtractor() = default;
    virtual std::vector<Tensor> features(const Tensor& input) const = 0;
};

class NetworkFeatureExtractor final : public FeatureExtractor {
public:
    NetworkFeatureExtractor(Network net, std::vector<std::size_t> taps)
        : net_(std::move(net)), taps_(std::move(taps)) {}

    std::vector<Tensor> features(const Tensor& input) const override {
        ForwardTrace trace;
        forward(net_, input, &trace, Phase::Infer);
        std::vector<Tensor> out;
        for (std::size_t t : taps_) out.push_back(trace.acts.at(t));
        return out;
    }

    const Network& network() const { return net_; }

private:
    Network net_;
    std::vector<std::size_t> taps_;
};

inline double l2_distance(const GeometryCode& a, const GeometryCode& b) {
    if (a.size() != b.size()) throw ShapeError("l2_distance: code dimensions differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

// Consistency energy between two geometry codes, ||c1 - c2||_2.
inline double code_consistency(const GeometryCode& a, const GeometryCode& b) {
    return l2_distance(a, b);
}

inline Tensor image_to_tensor(const ImageBuffer& img) {
    Tensor t({1, static_cast<std::size_t>(img.channels), static_cast<std::size_t>(img.height),
              static_cast<std::size_t>(img.width)});
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                t.at4(0, static_cast<std::size_t>(c), static_cast<std::size_t>(y),
                      static_cast<std::size_t>(x)) = img.at(y, x, c);
    return t;
}

inline ImageBuffer tensor_to_image(const Tensor& t) {
    if (t.rank() != 4 || t.shape[0] != 1) throw ShapeError("tensor_to_image: expected [1,C,H,W]");
    ImageBuffer img(static_cast<int>(t.shape[3]), static_cast<int>(t.shape[2]),
                    static_cast<int>(t.shape[1]));
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x)
                img.data[img.index(y, x, c)] = t.at4(0, static_cast<std::size_t>(c),
                                                     static_cast<std::size_t>(y),
                                                     static_cast<std::size_t>(x));
    return img;
}

// L_gec = ||g_geo_out - E(xhat)||_2, the geometry-consistency loss tying the
// appearance output's extracted code to the geometry branch's prediction.
inline double gec_loss(const GeometryCode& g_geo_out, const Network& extractor,
                       const ImageBuffer& xhat, ImageBuffer* grad_xhat = nullptr) {
    const Tensor input = image_to_tensor(xhat);
    ForwardTrace trace;
    const Tensor out = forward(extractor, input, &trace, Phase::Infer);
    if (out.rank() != 2 || out.shape[0] != 1 || out.shape[1] != g_geo_out.size())
        throw ShapeError("gec_loss: extractor output does not match code dimension");
    double sq = 0.0;
    for (std::size_t i = 0; i < g_geo_out.size(); ++i) {
        const double d = out.data[i] - g_geo_out[i];
        sq += d * d;
    }
    const double loss = std::sqrt(sq);
    if (grad_xhat) {
        Tensor up({1, g_geo_out.size()});
        if (loss > 1e-12)
            for (std::size_t i = 0; i < g_geo_out.size(); ++i)
                up.data[i] = (out.data[i] - g_geo_out[i]) / loss;
        Gradients g = backward(extractor, trace, up);
        *grad_xhat = tensor_to_image(g.input);
    }
    return loss;
}

// Trade-off weights lambda_1..lambda_5 for the combined generator loss.
struct LossWeights {
    double adv = 10.0;   // lambda_1, adversarial
    double id = 1.0;     // lambda_2, identity
    double px = 5.0;     // lambda_3, pixel
    double tv = 1e-5;    // lambda_4, total variation
    double gec = 1e3;    // lambda_5, geometry consistency

    void validate() const {
        if (adv < 0 || id < 0 || px < 0 || tv < 0 || gec < 0)
            throw DegenerateInput("loss weights must be nonnegative");
    }
};

struct LossComponents {
    double adv_g = 0.0, id = 0.0, px = 0.0, tv = 0.0, gec = 0.0;
};

// L = l1*L_adv_G + l2*L_id + l3*L_px + l4*L_tv + l5*L_gec
inline double total_g_loss(const LossComponents& c, const LossWeights& w) {
    w.validate();
    return w.adv * c.adv_g + w.id * c.id + w.px * c.px + w.tv * c.tv + w.gec * c.gec;
}

}  // namespace visage
