#pragma once

#include <optional>
#include <string>
#include <vector>

#include "visage/tensor.hpp"

namespace visage {

enum class LayerKind { FullyConnected, ReLU, Conv2d, BatchNorm };

inline std::string to_string(LayerKind k) {
    switch (k) {
        case LayerKind::FullyConnected: return "FullyConnected";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Conv2d: return "Conv2d";
        case LayerKind::BatchNorm: return "BatchNorm";
    }
    return "?";
}

inline LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "FullyConnected") return LayerKind::FullyConnected;
    if (s == "ReLU") return LayerKind::ReLU;
    if (s == "Conv2d") return LayerKind::Conv2d;
    if (s == "BatchNorm") return LayerKind::BatchNorm;
    throw ParseError("unknown layer kind: " + s);
}

enum class Phase { Train, Infer };

// One layer of the four supported kinds. Parameter conventions:
//   FullyConnected: weight [in, out], bias [out]; input [N, in].
//   Conv2d:         weight [oc, ic, k, k], bias [oc]; input [N, ic, H, W].
//   BatchNorm:      weight = gamma [f], bias = beta [f], running_mean/var [f];
//                   input [N, f] or [N, f, H, W] (per-channel statistics).
//   ReLU:           parameter-free, any shape.
struct Layer {
    LayerKind kind = LayerKind::ReLU;
    Tensor weight, bias;
    Tensor running_mean, running_var;
    int stride = 1;
    int pad = 0;
    double eps = 1e-5;
    double momentum = 0.1;

    static Layer fully_connected(std::size_t in, std::size_t out, Rng& rng) {
        Layer l;
        l.kind = LayerKind::FullyConnected;
        const double a = std::sqrt(6.0 / static_cast<double>(in + out));
        l.weight = Tensor::uniform({in, out}, -a, a, rng);
        l.bias = Tensor::zeros({out});
        return l;
    }

    static Layer relu() {
        Layer l;
        l.kind = LayerKind::ReLU;
        return l;
    }

    static Layer conv2d(std::size_t in_c, std::size_t out_c, std::size_t kernel, int stride,
                        int pad, Rng& rng) {
        if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
        Layer l;
        l.kind = LayerKind::Conv2d;
        l.stride = stride;
        l.pad = pad;
        const std::size_t fan_in = in_c * kernel * kernel;
        const std::size_t fan_out = out_c * kernel * kernel;
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        l.weight = Tensor::uniform({out_c, in_c, kernel, kernel}, -a, a, rng);
        l.bias = Tensor::zeros({out_c});
        return l;
    }

    static Layer batch_norm(std::size_t features, double eps = 1e-5, double momentum = 0.1) {
        Layer l;
        l.kind = LayerKind::BatchNorm;
        l.eps = eps;
        l.momentum = momentum;
        l.weight = Tensor::full({features}, 1.0);
        l.bias = Tensor::zeros({features});
        l.running_mean = Tensor::zeros({features});
        l.running_var = Tensor::full({features}, 1.0);
        return l;
    }

    bool has_params() const { return kind != LayerKind::ReLU; }
};

struct LayerGrads {
    Tensor weight, bias;
};

// Per-layer cache written by the forward pass and consumed by backward.
struct BatchNormCache {
    Tensor mean, var, inv_std;  // per feature, training-mode statistics
};

namespace detail {

inline std::size_t conv_out_dim(std::size_t in, std::size_t kernel, int stride, int pad) {
    const std::size_t padded = in + 2 * static_cast<std::size_t>(pad);
    if (kernel > padded)
        throw ShapeError("conv2d: kernel larger than padded input (" + std::to_string(kernel) +
                         " > " + std::to_string(padded) + ")");
    return (padded - kernel) / static_cast<std::size_t>(stride) + 1;
}

// Unpacks one sample [C,H,W] into a [C*K*K, OH*OW] patch matrix.
inline void im2col(const double* x, std::size_t C, std::size_t H, std::size_t W, std::size_t K,
                   int stride, int pad, std::size_t OH, std::size_t OW, double* col) {
    const std::size_t plane = OH * OW;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ky = 0; ky < K; ++ky) {
            for (std::size_t kx = 0; kx < K; ++kx) {
                double* row = col + ((c * K + ky) * K + kx) * plane;
                for (std::size_t oy = 0; oy < OH; ++oy) {
                    const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
                    if (iy < 0 || iy >= static_cast<long>(H)) {
                        for (std::size_t ox = 0; ox < OW; ++ox) row[oy * OW + ox] = 0.0;
                        continue;
                    }
                    const double* src = x + (c * H + static_cast<std::size_t>(iy)) * W;
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
                        row[oy * OW + ox] =
                            (ix < 0 || ix >= static_cast<long>(W)) ? 0.0 : src[ix];
                    }
                }
            }
        }
    }
}

// Scatter-add of a patch matrix back into a sample gradient [C,H,W].
inline void col2im_add(const double* col, std::size_t C, std::size_t H, std::size_t W,
                       std::size_t K, int stride, int pad, std::size_t OH, std::size_t OW,
                       double* dx) {
    const std::size_t plane = OH * OW;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t ky = 0; ky < K; ++ky) {
            for (std::size_t kx = 0; kx < K; ++kx) {
                const double* row = col + ((c * K + ky) * K + kx) * plane;
                for (std::size_t oy = 0; oy < OH; ++oy) {
                    const long iy = static_cast<long>(oy) * stride + static_cast<long>(ky) - pad;
                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                    double* dst = dx + (c * H + static_cast<std::size_t>(iy)) * W;
                    for (std::size_t ox = 0; ox < OW; ++ox) {
                        const long ix = static_cast<long>(ox) * stride + static_cast<long>(kx) - pad;
                        if (ix < 0 || ix >= static_cast<long>(W)) continue;
                        dst[ix] += row[oy * OW + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---- FullyConnected ----

// Rank-4 inputs are flattened to [N, C*H*W], so a FullyConnected layer can
// directly follow a convolution stack.
inline Tensor fc_forward(const Layer& l, const Tensor& x) {
    if (x.rank() < 2 || x.numel() / x.shape[0] != l.weight.shape[0])
        throw ShapeError("fully connected: expected input [N," +
                         std::to_string(l.weight.shape[0]) + "], got " + x.shape_str());
    const std::size_t n = x.shape[0], out = l.weight.shape[1];
    Tensor y({n, out});
    y.mat().noalias() = x.mat() * l.weight.mat();
    y.mat().rowwise() += l.bias.vec().transpose();
    return y;
}

inline Tensor fc_backward(const Layer& l, const Tensor& x, const Tensor& dy, LayerGrads& g) {
    g.weight = Tensor::zeros(l.weight.shape);
    g.bias = Tensor::zeros(l.bias.shape);
    g.weight.mat().noalias() = x.mat().transpose() * dy.mat();
    g.bias.vec() = dy.mat().colwise().sum();
    Tensor dx(x.shape);  // gradient keeps the (possibly rank-4) input shape
    dx.mat().noalias() = dy.mat() * l.weight.mat().transpose();
    return dx;
}

// ---- ReLU ----

inline Tensor relu_forward(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& dy) {
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.numel(); ++i)
        if (x.data[i] <= 0.0) dx.data[i] = 0.0;
    return dx;
}

// ---- Conv2d (im2col + GEMM) ----

inline Tensor conv2d_forward(const Layer& l, const Tensor& x) {
    if (x.rank() != 4) throw ShapeError("conv2d: expected input [N,C,H,W], got " + x.shape_str());
    const std::size_t OC = l.weight.shape[0], IC = l.weight.shape[1], K = l.weight.shape[2];
    if (x.shape[1] != IC)
        throw ShapeError("conv2d: input has " + std::to_string(x.shape[1]) +
                         " channels, kernel expects " + std::to_string(IC));
    const std::size_t N = x.shape[0], H = x.shape[2], W = x.shape[3];
    const std::size_t OH = detail::conv_out_dim(H, K, l.stride, l.pad);
    const std::size_t OW = detail::conv_out_dim(W, K, l.stride, l.pad);
    const std::size_t ckk = IC * K * K, plane = OH * OW;

    Tensor y({N, OC, OH, OW});
    std::vector<double> col(ckk * plane);
    ConstMatMap wmat(l.weight.data.data(), static_cast<Eigen::Index>(OC),
                     static_cast<Eigen::Index>(ckk));
    for (std::size_t n = 0; n < N; ++n) {
        detail::im2col(x.data.data() + n * IC * H * W, IC, H, W, K, l.stride, l.pad, OH, OW,
                       col.data());
        ConstMatMap cmat(col.data(), static_cast<Eigen::Index>(ckk),
                         static_cast<Eigen::Index>(plane));
        MatMap ymat(y.data.data() + n * OC * plane, static_cast<Eigen::Index>(OC),
                    static_cast<Eigen::Index>(plane));
        ymat.noalias() = wmat * cmat;
        for (std::size_t oc = 0; oc < OC; ++oc)
            ymat.row(static_cast<Eigen::Index>(oc)).array() += l.bias.data[oc];
    }
    return y;
}

inline Tensor conv2d_backward(const Layer& l, const Tensor& x, const Tensor& dy, LayerGrads& g) {
    const std::size_t OC = l.weight.shape[0], IC = l.weight.shape[1], K = l.weight.shape[2];
    const std::size_t N = x.shape[0], H = x.shape[2], W = x.shape[3];
    const std::size_t OH = dy.shape[2], OW = dy.shape[3];
    const std::size_t ckk = IC * K * K, plane = OH * OW;

    g.weight = Tensor::zeros(l.weight.shape);
    g.bias = Tensor::zeros(l.bias.shape);
    Tensor dx = Tensor::zeros(x.shape);

    std::vector<double> col(ckk * plane), dcol(ckk * plane);
    ConstMatMap wmat(l.weight.data.data(), static_cast<Eigen::Index>(OC),
                     static_cast<Eigen::Index>(ckk));
    MatMap gwmat(g.weight.data.data(), static_cast<Eigen::Index>(OC),
                 static_cast<Eigen::Index>(ckk));
    for (std::size_t n = 0; n < N; ++n) {
        detail::im2col(x.data.data() + n * IC * H * W, IC, H, W, K, l.stride, l.pad, OH, OW,
                       col.data());
        ConstMatMap cmat(col.data(), static_cast<Eigen::Index>(ckk),
                         static_cast<Eigen::Index>(plane));
        ConstMatMap dymat(dy.data.data() + n * OC * plane, static_cast<Eigen::Index>(OC),
                          static_cast<Eigen::Index>(plane));
        gwmat.noalias() += dymat * cmat.transpose();
        for (std::size_t oc = 0; oc < OC; ++oc)
            g.bias.data[oc] += dymat.row(static_cast<Eigen::Index>(oc)).sum();
        MatMap dcmat(dcol.data(), static_cast<Eigen::Index>(ckk),
                     static_cast<Eigen::Index>(plane));
        dcmat.noalias() = wmat.transpose() * dymat;
        detail::col2im_add(dcol.data(), IC, H, W, K, l.stride, l.pad, OH, OW,
                           dx.data.data() + n * IC * H * W);
    }
    return dx;
}

// ---- BatchNorm ----

namespace detail {

struct BnLayout {
    std::size_t n, f, spatial;  // reduction count = n * spatial
};

inline BnLayout bn_layout(const Layer& l, const Tensor& x) {
    const std::size_t f = l.weight.shape[0];
    if (x.rank() == 2) {
        if (x.shape[1] != f) throw ShapeError("batchnorm: feature mismatch " + x.shape_str());
        return {x.shape[0], f, 1};
    }
    if (x.rank() == 4) {
        if (x.shape[1] != f) throw ShapeError("batchnorm: channel mismatch " + x.shape_str());
        return {x.shape[0], f, x.shape[2] * x.shape[3]};
    }
    throw ShapeError("batchnorm: expected rank-2 or rank-4 input, got " + x.shape_str());
}

template <typename Fn>
inline void bn_visit(const BnLayout& lo, Fn&& fn) {
    for (std::size_t n = 0; n < lo.n; ++n)
        for (std::size_t f = 0; f < lo.f; ++f) {
            const std::size_t base = (n * lo.f + f) * lo.spatial;
            for (std::size_t s = 0; s < lo.spatial; ++s) fn(f, base + s);
        }
}

}  // namespace detail

// Training mode normalizes with batch statistics (biased variance, +eps).
// Inference divides by sqrt(max(running_var, 1e-12)) so that unit running
// variance, zero mean, unit gain and zero shift reproduce the input exactly.
inline Tensor batchnorm_forward(const Layer& l, const Tensor& x, Phase phase,
                                BatchNormCache* cache) {
    const auto lo = detail::bn_layout(l, x);
    Tensor y(x.shape);
    if (phase == Phase::Train) {
        const double count = static_cast<double>(lo.n * lo.spatial);
        if (lo.n < 2 && lo.spatial < 2)
            throw ShapeError("batchnorm: training mode needs more than one value per feature");
        Tensor mean = Tensor::zeros({lo.f}), var = Tensor::zeros({lo.f});
        detail::bn_visit(lo, [&](std::size_t f, std::size_t i) { mean.data[f] += x.data[i]; });
        for (double& m : mean.data) m /= count;
        detail::bn_visit(lo, [&](std::size_t f, std::size_t i) {
            const double d = x.data[i] - mean.data[f];
            var.data[f] += d * d;
        });
        for (double& v : var.data) v /= count;
        Tensor inv({lo.f});
        for (std::size_t f = 0; f < lo.f; ++f) inv.data[f] = 1.0 / std::sqrt(var.data[f] + l.eps);
        detail::bn_visit(lo, [&](std::size_t f, std::size_t i) {
            y.data[i] = l.weight.data[f] * (x.data[i] - mean.data[f]) * inv.data[f] +
                        l.bias.data[f];
        });
        if (cache) *cache = BatchNormCache{mean, var, inv};
    } else {
        Tensor inv({lo.f});
        for (std::size_t f = 0; f < lo.f; ++f)
            inv.data[f] = 1.0 / std::sqrt(std::max(l.running_var.data[f], 1e-12));
        detail::bn_visit(lo, [&](std::size_t f, std::size_t i) {
            y.data[i] = l.weight.data[f] * (x.data[i] - l.running_mean.data[f]) * inv.data[f] +
                        l.bias.data[f];
        });
    }
    return y;
}

inline Tensor batchnorm_backward(const Layer& l, const Tensor& x, const Tensor& dy,
                                 const BatchNormCache& cache, LayerGrads& g) {
    const auto lo = detail::bn_layout(l, x);
    const double count = static_cast<double>(lo.n * lo.spatial);
    g.weight = Tensor::zeros(l.weight.shape);
    g.bias = Tensor::zeros(l.bias.shape);
    Tensor dvar = Tensor::zeros({lo.f}), dmean = Tensor::zeros({lo.f});
    detail::bn_visit(lo, [&](std::size_t f, std::size_t i) {
        const double xc = x.data[i] - cache.mean.data[f];
        const double xhat = xc * cache.inv_std.data[f];
        g.weight.data[f] += dy.data[i] * xhat;
        g.bias.data[f] += dy.data[i];
        const double dxhat = dy.data[i] * l.weight.data[f];
        dvar.data[f] += dxhat * xc;
        dmean.data[f] += dxhat;
    });
    for (std::size_t f = 0; f < lo.f; ++f) {
        const double inv = cache.inv_std.data[f];
        dvar.data[f] *= -0.5 * inv * inv * inv;
        dmean.data[f] *= -inv;
    }
    Tensor xsum = Tensor::zeros({lo.f});
    detail::bn_visit(lo, [&](std::size_t f, std::size_t i) {
        xsum.data[f] += x.data[i] - cache.mean.data[f];
    });
    for (std::size_t f = 0; f < lo.f; ++f)
        dmean.data[f] += dvar.data[f] * (-2.0 / count) * xsum.data[f];
    Tensor dx(x.shape);
    detail::bn_visit(lo, [&](std::size_t f, std::size_t i) {
        const double xc = x.data[i] - cache.mean.data[f];
        dx.data[i] = dy.data[i] * l.weight.data[f] * cache.inv_std.data[f] +
                     dvar.data[f] * 2.0 * xc / count + dmean.data[f] / count;
    });
    return dx;
}

// Inference-mode backward: the layer is a fixed per-feature affine map in the
// running statistics, so the chain rule needs no batch coupling.
inline Tensor batchnorm_backward_infer(const Layer& l, const Tensor& x, const Tensor& dy,
                                       LayerGrads& g) {
    const auto lo = detail::bn_layout(l, x);
    g.weight = Tensor::zeros(l.weight.shape);
    g.bias = Tensor::zeros(l.bias.shape);
    Tensor inv({lo.f});
    for (std::size_t f = 0; f < lo.f; ++f)
        inv.data[f] = 1.0 / std::sqrt(std::max(l.running_var.data[f], 1e-12));
    Tensor dx(x.shape);
    detail::bn_visit(lo, [&](std::size_t f, std::size_t i) {
        const double xhat = (x.data[i] - l.running_mean.data[f]) * inv.data[f];
        g.weight.data[f] += dy.data[i] * xhat;
        g.bias.data[f] += dy.data[i];
        dx.data[i] = dy.data[i] * l.weight.data[f] * inv.data[f];
    });
    return dx;
}

// Momentum update of running statistics; called explicitly by training loops
// so that forward itself stays pure.
inline void batchnorm_update_running(Layer& l, const BatchNormCache& cache) {
    const double m = l.momentum;
    for (std::size_t f = 0; f < l.running_mean.numel(); ++f) {
        l.running_mean.data[f] = (1.0 - m) * l.running_mean.data[f] + m * cache.mean.data[f];
        l.running_var.data[f] = (1.0 - m) * l.running_var.data[f] + m * cache.var.data[f];
    }
}

}  // namespace visage
