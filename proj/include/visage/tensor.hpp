#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <vector>

#include "visage/common.hpp"

namespace visage {

using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<MatrixRM>;
using ConstMatMap = Eigen::Map<const MatrixRM>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

// Dense row-major tensor of 64-bit reals. Everything in the library runs in
// doubles; gradient-check tolerances drive that choice.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s)
        : shape(std::move(s)), data(numel_of(shape), 0.0) {}
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel_of(shape))
            throw ShapeError("tensor data length does not match shape product");
    }

    static std::size_t numel_of(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<std::size_t> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor uniform(std::vector<std::size_t> s, double lo, double hi, Rng& rng) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = rng.uniform(lo, hi);
        return t;
    }

    static Tensor gaussian(std::vector<std::size_t> s, double mean, double sigma, Rng& rng) {
        Tensor t(std::move(s));
        for (double& v : t.data) v = rng.normal(mean, sigma);
        return t;
    }

    std::size_t numel() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    double& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    double at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    // 2-D Eigen views (rows = shape[0], cols = numel/shape[0]).
    MatMap mat() {
        return MatMap(data.data(), static_cast<Eigen::Index>(shape[0]),
                      static_cast<Eigen::Index>(numel() / shape[0]));
    }
    ConstMatMap mat() const {
        return ConstMatMap(data.data(), static_cast<Eigen::Index>(shape[0]),
                           static_cast<Eigen::Index>(numel() / shape[0]));
    }
    VecMap vec() { return VecMap(data.data(), static_cast<Eigen::Index>(numel())); }
    ConstVecMap vec() const {
        return ConstVecMap(data.data(), static_cast<Eigen::Index>(numel()));
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << "]";
        return os.str();
    }
};

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("tensor add: shape mismatch");
    Tensor r = a;
    for (std::size_t i = 0; i < r.numel(); ++i) r.data[i] += b.data[i];
    return r;
}

inline void accumulate(Tensor& into, const Tensor& g) {
    if (into.numel() == 0) {
        into = g;
        return;
    }
    if (!into.same_shape(g)) throw ShapeError("tensor accumulate: shape mismatch");
    for (std::size_t i = 0; i < into.numel(); ++i) into.data[i] += g.data[i];
}

}  // namespace visage
