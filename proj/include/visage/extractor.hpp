#pragma once

#include "visage/adam.hpp"
#include "visage/network.hpp"
#include "visage/pca.hpp"

namespace visage {

// Distance-feature extractor: nine convolutions (each followed by BatchNorm
// and ReLU) and three fully connected layers regressing the 32-dim geometry
// code. At 3x224x224 input the activation sizes are
//   32x224x224, 64x112x112, 128x56x56, 128x56x56 x3, 64x28x28, 32x14x14,
//   16x7x7, then FC 784, 512, 32.
// The conv stack is resolution-independent; the first FC layer adapts to the
// flattened conv output at the chosen training resolution.
struct ConvSpec {
    std::size_t out_c, kernel;
    int stride, pad;
};

inline const std::vector<ConvSpec>& extractor_conv_specs() {
    static const std::vector<ConvSpec> specs = {
        {32, 9, 1, 4}, {64, 3, 2, 1},  {128, 3, 2, 1}, {128, 3, 1, 1}, {128, 3, 1, 1},
        {128, 3, 1, 1}, {64, 3, 2, 1}, {32, 3, 2, 1},  {16, 3, 2, 1},
    };
    return specs;
}

inline Network build_geometry_extractor(std::size_t resolution, Rng& rng,
                                        std::size_t code_dim = 32) {
    Network net("geometry_extractor");
    std::size_t channels = 3, h = resolution, w = resolution;
    for (const ConvSpec& cs : extractor_conv_specs()) {
        net.add(Layer::conv2d(channels, cs.out_c, cs.kernel, cs.stride, cs.pad, rng));
        net.add(Layer::batch_norm(cs.out_c));
        net.add(Layer::relu());
        h = detail::conv_out_dim(h, cs.kernel, cs.stride, cs.pad);
        w = detail::conv_out_dim(w, cs.kernel, cs.stride, cs.pad);
        channels = cs.out_c;
    }
    const std::size_t flat = channels * h * w;
    net.add(Layer::fully_connected(flat, 784, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(784, 512, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(512, code_dim, rng));
    return net;
}

// Activation shapes per layer without running data through the network.
inline std::vector<std::vector<std::size_t>> activation_shapes(
    const Network& net, std::vector<std::size_t> input_shape) {
    std::vector<std::vector<std::size_t>> shapes;
    shapes.push_back(input_shape);
    std::vector<std::size_t> cur = std::move(input_shape);
    for (const Layer& l : net.layers) {
        switch (l.kind) {
            case LayerKind::FullyConnected:
                cur = {cur[0], l.weight.shape[1]};
                break;
            case LayerKind::Conv2d: {
                const std::size_t k = l.weight.shape[2];
                cur = {cur[0], l.weight.shape[0],
                       detail::conv_out_dim(cur[2], k, l.stride, l.pad),
                       detail::conv_out_dim(cur[3], k, l.stride, l.pad)};
                break;
            }
            case LayerKind::ReLU:
            case LayerKind::BatchNorm:
                break;
        }
        shapes.push_back(cur);
    }
    return shapes;
}

struct ExtractorTrainConfig {
    std::size_t epochs = 12;
    std::size_t batch_size = 8;
    double lr = 1e-3;
    std::uint64_t seed = 0;
};

struct ExtractorTrainResult {
    Network extractor;
    std::vector<double> epoch_mse;  // mean training MSE per epoch
    bool diverged = false;
};

inline Tensor stack_images(const std::vector<Tensor>& images,
                           const std::vector<std::size_t>& idx) {
    const Tensor& first = images.at(idx.at(0));
    Tensor batch({idx.size(), first.shape[1], first.shape[2], first.shape[3]});
    const std::size_t per = first.numel() / first.shape[0];
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const Tensor& img = images[idx[r]];
        if (img.numel() / img.shape[0] != per)
            throw ShapeError("stack_images: inconsistent image shapes");
        std::copy(img.data.begin(), img.data.end(), batch.data.begin() + static_cast<long>(r * per));
    }
    return batch;
}

inline double extractor_mse(const Network& net, const std::vector<Tensor>& images,
                            const std::vector<GeometryCode>& codes) {
    if (images.size() != codes.size() || images.empty())
        throw DegenerateInput("extractor_mse: dataset empty or mismatched");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < images.size(); ++i) {
        const Tensor out = forward(net, images[i]);
        for (std::size_t j = 0; j < codes[i].size(); ++j) {
            const double d = out.data[j] - codes[i][j];
            total += d * d;
            ++count;
        }
    }
    return total / static_cast<double>(count);
}

// L2 regression of the extractor output onto paired geometry codes, Adam
// optimizer, shuffled mini-batches, batch statistics folded into the running
// averages after every step. Single-threaded and deterministic given seed.
inline ExtractorTrainResult train_geometry_extractor(const std::vector<Tensor>& images,
                                                     const std::vector<GeometryCode>& codes,
                                                     std::size_t resolution,
                                                     const ExtractorTrainConfig& cfg = {}) {
    if (images.size() != codes.size() || images.empty())
        throw DegenerateInput("train_geometry_extractor: dataset empty or mismatched");
    const std::size_t code_dim = codes[0].size();
    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(1);

    ExtractorTrainResult res;
    res.extractor = build_geometry_extractor(resolution, init_rng, code_dim);
    auto params = collect_parameters(res.extractor);
    AdamState adam = AdamState::for_params(params, cfg.lr);

    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the run's own stream.
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.index(i)]);

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            if (end - start < 2) continue;  // batchnorm needs batch statistics
            std::vector<std::size_t> idx(order.begin() + static_cast<long>(start),
                                         order.begin() + static_cast<long>(end));
            const Tensor batch = stack_images(images, idx);
            Tensor target({idx.size(), code_dim});
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < code_dim; ++j)
                    target.at2(r, j) = codes[idx[r]][j];

            ForwardTrace trace;
            const Tensor out = forward(res.extractor, batch, &trace, Phase::Train);
            double loss = 0.0;
            Tensor up(out.shape);
            const double inv = 1.0 / static_cast<double>(out.numel());
            for (std::size_t i = 0; i < out.numel(); ++i) {
                const double d = out.data[i] - target.data[i];
                loss += d * d * inv;
                up.data[i] = 2.0 * d * inv;
            }
            if (!std::isfinite(loss)) {
                res.diverged = true;
                throw NumericError("train_geometry_extractor: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " + std::to_string(batches));
            }
            const Gradients grads = backward(res.extractor, trace, up);
            adam_step(adam, params, collect_gradients(res.extractor, grads));
            apply_batchnorm_updates(res.extractor, trace);
            epoch_loss += loss;
            ++batches;
        }
        res.epoch_mse.push_back(batches ? epoch_loss / static_cast<double>(batches) : 0.0);
    }
    return res;
}

}  // namespace visage
