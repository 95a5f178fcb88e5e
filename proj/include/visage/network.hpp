#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "visage/layers.hpp"

namespace visage {

// Ordered layer stack. Networks are immutable values during forward/backward;
// training loops own their copy exclusively.
struct Network {
    std::string name;
    std::vector<Layer> layers;

    Network() = default;
    explicit Network(std::string n) : name(std::move(n)) {}

    Network& add(Layer l) {
        layers.push_back(std::move(l));
        return *this;
    }
};

// Activations of one forward pass: acts[0] is the input, acts[i+1] the output
// of layer i. Feature losses index into acts directly.
struct ForwardTrace {
    Phase phase = Phase::Infer;
    std::vector<Tensor> acts;
    std::map<std::size_t, BatchNormCache> bn;

    const Tensor& output() const { return acts.back(); }
    bool valid() const { return !acts.empty(); }
};

inline Tensor forward(const Network& net, const Tensor& x, ForwardTrace* trace = nullptr,
                      Phase phase = Phase::Infer) {
    if (trace) {
        trace->phase = phase;
        trace->acts.clear();
        trace->bn.clear();
        trace->acts.reserve(net.layers.size() + 1);
        trace->acts.push_back(x);
    }
    Tensor cur = x;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const Layer& l = net.layers[i];
        try {
            switch (l.kind) {
                case LayerKind::FullyConnected: cur = fc_forward(l, cur); break;
                case LayerKind::ReLU: cur = relu_forward(cur); break;
                case LayerKind::Conv2d: cur = conv2d_forward(l, cur); break;
                case LayerKind::BatchNorm: {
                    BatchNormCache cache;
                    cur = batchnorm_forward(l, cur, phase, trace ? &cache : nullptr);
                    if (trace && phase == Phase::Train) trace->bn[i] = std::move(cache);
                    break;
                }
            }
        } catch (const ShapeError& e) {
            throw ShapeError("layer " + std::to_string(i) + " (" + to_string(l.kind) +
                             "): " + e.what());
        }
        if (trace) trace->acts.push_back(cur);
    }
    return cur;
}

struct Gradients {
    std::vector<LayerGrads> layers;
    Tensor input;  // gradient with respect to the network input
};

// Backward pass with gradients injected at arbitrary activations.
// upstream_at[i] (if non-empty) is dLoss/d(acts[i]); entries beyond the ones
// used may be left default-constructed. Requires a Train-phase trace for
// networks containing BatchNorm.
inline Gradients backward_multi(const Network& net, const ForwardTrace& trace,
                                const std::vector<Tensor>& upstream_at) {
    if (!trace.valid() || trace.acts.size() != net.layers.size() + 1)
        throw ShapeError("backward: forward cache missing or stale");
    if (upstream_at.size() != trace.acts.size())
        throw ShapeError("backward: upstream list must match activation count");

    Gradients grads;
    grads.layers.resize(net.layers.size());
    Tensor g;  // running gradient w.r.t. acts[i+1]
    for (std::size_t ri = net.layers.size(); ri-- > 0;) {
        const Tensor& inject = upstream_at[ri + 1];
        if (inject.numel() > 0) {
            if (!inject.same_shape(trace.acts[ri + 1]))
                throw ShapeError("backward: upstream gradient shape mismatch at activation " +
                                 std::to_string(ri + 1));
            accumulate(g, inject);
        }
        if (g.numel() == 0) g = Tensor::zeros(trace.acts[ri + 1].shape);
        const Layer& l = net.layers[ri];
        const Tensor& x = trace.acts[ri];
        switch (l.kind) {
            case LayerKind::FullyConnected: g = fc_backward(l, x, g, grads.layers[ri]); break;
            case LayerKind::ReLU: g = relu_backward(x, g); break;
            case LayerKind::Conv2d: g = conv2d_backward(l, x, g, grads.layers[ri]); break;
            case LayerKind::BatchNorm: {
                if (trace.phase == Phase::Train) {
                    auto it = trace.bn.find(ri);
                    if (it == trace.bn.end())
                        throw ShapeError("backward: batchnorm cache missing");
                    g = batchnorm_backward(l, x, g, it->second, grads.layers[ri]);
                } else {
                    g = batchnorm_backward_infer(l, x, g, grads.layers[ri]);
                }
                break;
            }
        }
    }
    if (upstream_at[0].numel() > 0) accumulate(g, upstream_at[0]);
    grads.input = std::move(g);
    return grads;
}

inline Gradients backward(const Network& net, const ForwardTrace& trace, const Tensor& upstream) {
    if (!trace.valid() || trace.acts.size() != net.layers.size() + 1)
        throw ShapeError("backward: forward cache missing or stale");
    std::vector<Tensor> ups(trace.acts.size());
    ups.back() = upstream;
    return backward_multi(net, trace, ups);
}

// Parameters in a stable order (weight then bias per parametric layer);
// BatchNorm running statistics are state, not parameters.
inline std::vector<Tensor*> collect_parameters(Network& net) {
    std::vector<Tensor*> ps;
    for (Layer& l : net.layers) {
        if (!l.has_params()) continue;
        ps.push_back(&l.weight);
        ps.push_back(&l.bias);
    }
    return ps;
}

inline std::vector<const Tensor*> collect_gradients(const Network& net, const Gradients& g) {
    std::vector<const Tensor*> gs;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (!net.layers[i].has_params()) continue;
        gs.push_back(&g.layers[i].weight);
        gs.push_back(&g.layers[i].bias);
    }
    return gs;
}

inline void apply_batchnorm_updates(Network& net, const ForwardTrace& trace) {
    for (auto& [idx, cache] : trace.bn) batchnorm_update_running(net.layers[idx], cache);
}

// ---- Serialization ----
// Versioned JSON: {version, name, layers:[{kind, hyper, shape, data}]} where
// shape lists each parameter tensor's shape and data is the concatenation of
// all parameter values in declaration order, full round-trip precision.

namespace detail {

inline std::vector<const Tensor*> layer_tensors(const Layer& l) {
    switch (l.kind) {
        case LayerKind::FullyConnected:
        case LayerKind::Conv2d: return {&l.weight, &l.bias};
        case LayerKind::BatchNorm: return {&l.weight, &l.bias, &l.running_mean, &l.running_var};
        case LayerKind::ReLU: return {};
    }
    return {};
}

inline std::vector<Tensor*> layer_tensors(Layer& l) {
    std::vector<Tensor*> out;
    for (const Tensor* t : layer_tensors(static_cast<const Layer&>(l)))
        out.push_back(const_cast<Tensor*>(t));
    return out;
}

}  // namespace detail

inline nlohmann::json network_to_json(const Network& net) {
    nlohmann::json j;
    j["version"] = 1;
    j["name"] = net.name;
    j["layers"] = nlohmann::json::array();
    for (const Layer& l : net.layers) {
        nlohmann::json lj;
        lj["kind"] = to_string(l.kind);
        nlohmann::json hyper = nlohmann::json::object();
        if (l.kind == LayerKind::FullyConnected) {
            hyper["in"] = l.weight.shape[0];
            hyper["out"] = l.weight.shape[1];
        } else if (l.kind == LayerKind::Conv2d) {
            hyper["out_channels"] = l.weight.shape[0];
            hyper["in_channels"] = l.weight.shape[1];
            hyper["kernel"] = l.weight.shape[2];
            hyper["stride"] = l.stride;
            hyper["pad"] = l.pad;
        } else if (l.kind == LayerKind::BatchNorm) {
            hyper["features"] = l.weight.shape[0];
            hyper["eps"] = l.eps;
            hyper["momentum"] = l.momentum;
        }
        lj["hyper"] = hyper;
        auto shapes = nlohmann::json::array();
        auto data = nlohmann::json::array();
        for (const Tensor* t : detail::layer_tensors(l)) {
            shapes.push_back(t->shape);
            for (double v : t->data) data.push_back(v);
        }
        lj["shape"] = shapes;
        lj["data"] = data;
        j["layers"].push_back(lj);
    }
    return j;
}

inline std::string serialize_network(const Network& net) { return network_to_json(net).dump(); }

inline Network network_from_json(const nlohmann::json& j) {
    if (!j.contains("version") || !j["version"].is_number())
        throw ParseError("network file: missing version");
    if (j["version"].get<int>() != 1)
        throw ParseError("network file: unsupported version " + j["version"].dump());
    Network net(j.value("name", std::string{}));
    if (!j.contains("layers") || !j["layers"].is_array())
        throw ParseError("network file: missing layers array");
    for (const auto& lj : j["layers"]) {
        Layer l;
        l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
        const auto& hyper = lj.at("hyper");
        if (l.kind == LayerKind::Conv2d) {
            l.stride = hyper.at("stride").get<int>();
            l.pad = hyper.at("pad").get<int>();
        } else if (l.kind == LayerKind::BatchNorm) {
            l.eps = hyper.at("eps").get<double>();
            l.momentum = hyper.at("momentum").get<double>();
        }
        const auto& shapes = lj.at("shape");
        const auto& data = lj.at("data");
        // Allocate the declared tensors, then slice the flat data array.
        std::vector<Tensor> tensors;
        std::size_t total = 0;
        for (const auto& sj : shapes) {
            std::vector<std::size_t> shape = sj.get<std::vector<std::size_t>>();
            tensors.emplace_back(shape);
            total += tensors.back().numel();
        }
        if (!data.is_array() || data.size() != total)
            throw ParseError("network file: layer data length " + std::to_string(data.size()) +
                             " does not match declared shapes (want " + std::to_string(total) +
                             ")");
        std::size_t cursor = 0;
        for (Tensor& t : tensors)
            for (double& v : t.data) v = data[cursor++].get<double>();
        switch (l.kind) {
            case LayerKind::FullyConnected:
            case LayerKind::Conv2d:
                if (tensors.size() != 2) throw ParseError("network file: expected 2 tensors");
                l.weight = std::move(tensors[0]);
                l.bias = std::move(tensors[1]);
                break;
            case LayerKind::BatchNorm:
                if (tensors.size() != 4) throw ParseError("network file: expected 4 tensors");
                l.weight = std::move(tensors[0]);
                l.bias = std::move(tensors[1]);
                l.running_mean = std::move(tensors[2]);
                l.running_var = std::move(tensors[3]);
                break;
            case LayerKind::ReLU:
                if (!tensors.empty()) throw ParseError("network file: ReLU carries no tensors");
                break;
        }
        net.layers.push_back(std::move(l));
    }
    return net;
}

inline Network deserialize_network(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("network file: ") + e.what());
    }
    try {
        return network_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("network file: ") + e.what());
    }
}

}  // namespace visage
