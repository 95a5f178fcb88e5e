#pragma once

#include <vector>

#include "visage/network.hpp"

namespace visage {

// Adam optimizer state. Defaults: lr 1e-4, beta1 0.9, beta2 0.999, eps 1e-8.
struct AdamState {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<Tensor> m, v;

    static AdamState for_params(const std::vector<Tensor*>& params, double lr = 1e-4) {
        AdamState s;
        s.lr = lr;
        for (const Tensor* p : params) {
            s.m.push_back(Tensor::zeros(p->shape));
            s.v.push_back(Tensor::zeros(p->shape));
        }
        return s;
    }
};

// One bias-corrected Adam update. Rejects non-finite gradients so training
// loops can halt with their last good checkpoint.
inline void adam_step(AdamState& state, const std::vector<Tensor*>& params,
                      const std::vector<const Tensor*>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw ShapeError("adam_step: parameter/gradient/state count mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!grads[i]->same_shape(*params[i]))
            throw ShapeError("adam_step: gradient shape mismatch at parameter " +
                             std::to_string(i));
        if (!grads[i]->all_finite())
            throw NumericError("adam_step: non-finite gradient at parameter " +
                               std::to_string(i) + " (step " + std::to_string(state.step) + ")");
    }
    state.step += 1;
    const double b1t = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double b2t = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        for (std::size_t k = 0; k < p.numel(); ++k) {
            m.data[k] = state.beta1 * m.data[k] + (1.0 - state.beta1) * g.data[k];
            v.data[k] = state.beta2 * v.data[k] + (1.0 - state.beta2) * g.data[k] * g.data[k];
            const double mhat = m.data[k] / b1t;
            const double vhat = v.data[k] / b2t;
            p.data[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace visage
