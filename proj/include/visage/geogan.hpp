#pragma once

#include <functional>

#include "visage/adam.hpp"
#include "visage/network.hpp"
#include "visage/pca.hpp"

namespace visage {

// Geometry enhancement branch: a 32 -> 64 x4 -> 32 fully connected generator
// and a discriminator with the same trunk ending in a scalar score, trained
// with least-squares adversarial losses plus feature matching over the four
// hidden FC-ReLU activations.

struct GeoGanConfig {
    double lr = 1e-4;
    std::size_t batch_size = 8;
    std::size_t iterations = 15000;
    std::uint64_t seed = 0;
    std::array<std::size_t, 4> feature_layers = {1, 2, 3, 4};
    // Feature-matching source: discriminator activations by default; the
    // generator's own activations are available as the literal reading of
    // the loss definition.
    bool features_from_generator = false;
    // Third loss term: batch-mean matching by default (unpaired data);
    // per-sample pairing of the sampled batches otherwise.
    bool paired_output_term = false;
    std::size_t checkpoint_interval = 1500;

    void validate() const {
        if (batch_size < 2) throw DegenerateInput("geo gan: batch_size must be >= 2");
        if (iterations < 1) throw DegenerateInput("geo gan: iterations must be >= 1");
        if (lr <= 0.0) throw DegenerateInput("geo gan: lr must be positive");
    }
};

struct GeoGanModel {
    Network generator;
    Network discriminator;
};

inline Network build_geo_generator(Rng& rng, std::size_t code_dim = 32) {
    Network net("geo_generator");
    net.add(Layer::fully_connected(code_dim, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, code_dim, rng));
    return net;
}

inline Network build_geo_discriminator(Rng& rng, std::size_t code_dim = 32) {
    Network net("geo_discriminator");
    net.add(Layer::fully_connected(code_dim, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, 64, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(64, 1, rng));
    return net;
}

inline GeoGanModel build_geo_gan(std::uint64_t seed, std::size_t code_dim = 32) {
    Rng rng(seed);
    Rng grng = rng.fork(1), drng = rng.fork(2);
    return {build_geo_generator(grng, code_dim), build_geo_discriminator(drng, code_dim)};
}

namespace detail {

// acts[0] is the input; the i-th FC-ReLU feature lives at acts[2i].
inline std::size_t feature_act_index(std::size_t i) { return 2 * i; }

inline Tensor batch_from_codes(const std::vector<GeometryCode>& codes,
                               const std::vector<std::size_t>& idx) {
    if (codes.empty()) throw DegenerateInput("geo gan: empty code set");
    const std::size_t dim = codes[0].size();
    Tensor t({idx.size(), dim});
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const GeometryCode& c = codes[idx[r]];
        if (c.size() != dim) throw ShapeError("geo gan: inconsistent code dimension");
        for (std::size_t j = 0; j < dim; ++j) t.at2(r, j) = c[j];
    }
    return t;
}

inline std::vector<double> column_mean(const Tensor& t) {
    std::vector<double> m(t.shape[1], 0.0);
    for (std::size_t r = 0; r < t.shape[0]; ++r)
        for (std::size_t j = 0; j < t.shape[1]; ++j) m[j] += t.at2(r, j);
    for (double& v : m) v /= static_cast<double>(t.shape[0]);
    return m;
}

inline void add_layer_grads(std::vector<LayerGrads>& into, const Gradients& g) {
    if (into.empty()) into.resize(g.layers.size());
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        if (g.layers[i].weight.numel()) accumulate(into[i].weight, g.layers[i].weight);
        if (g.layers[i].bias.numel()) accumulate(into[i].bias, g.layers[i].bias);
    }
}

}  // namespace detail

// Discriminator loss (least-squares GAN with the unattractive and generated
// samples both negative):
//   mean D(G(x))^2 + mean D(x)^2 + mean (1 - D(y))^2
inline double geo_d_loss(const GeoGanModel& model, const Tensor& batch_x, const Tensor& batch_y,
                         Gradients* d_grads = nullptr) {
    if (batch_x.shape[0] == 0 || batch_y.shape[0] == 0)
        throw DegenerateInput("geo_d_loss: empty batch");
    const Tensor fake = forward(model.generator, batch_x);

    ForwardTrace tf, tx, ty;
    const Tensor sf = forward(model.discriminator, fake, &tf);
    const Tensor sx = forward(model.discriminator, batch_x, &tx);
    const Tensor sy = forward(model.discriminator, batch_y, &ty);
    if (!sf.all_finite() || !sx.all_finite() || !sy.all_finite())
        throw NumericError("geo_d_loss: non-finite discriminator activations");

    const double nf = static_cast<double>(sf.shape[0]);
    const double nx = static_cast<double>(sx.shape[0]);
    const double ny = static_cast<double>(sy.shape[0]);
    double loss = 0.0;
    for (std::size_t i = 0; i < sf.numel(); ++i) loss += sf.data[i] * sf.data[i] / nf;
    for (std::size_t i = 0; i < sx.numel(); ++i) loss += sx.data[i] * sx.data[i] / nx;
    for (std::size_t i = 0; i < sy.numel(); ++i)
        loss += (1.0 - sy.data[i]) * (1.0 - sy.data[i]) / ny;

    if (d_grads) {
        Tensor uf(sf.shape), ux(sx.shape), uy(sy.shape);
        for (std::size_t i = 0; i < sf.numel(); ++i) uf.data[i] = 2.0 * sf.data[i] / nf;
        for (std::size_t i = 0; i < sx.numel(); ++i) ux.data[i] = 2.0 * sx.data[i] / nx;
        for (std::size_t i = 0; i < sy.numel(); ++i) uy.data[i] = -2.0 * (1.0 - sy.data[i]) / ny;
        d_grads->layers.clear();
        std::vector<LayerGrads> acc;
        detail::add_layer_grads(acc, backward(model.discriminator, tf, uf));
        detail::add_layer_grads(acc, backward(model.discriminator, tx, ux));
        detail::add_layer_grads(acc, backward(model.discriminator, ty, uy));
        d_grads->layers = std::move(acc);
    }
    return loss;
}

// Generator loss: adversarial term plus feature matching of the four hidden
// activations and of the output itself. With unpaired batches the feature and
// output terms match batch means; a per-sample paired variant is available.
//   mean (1 - D(G(x)))^2
//   + sum_i || mean feat_i(G(x)) - mean feat_i(y) ||_2
//   + || mean G(x) - mean y ||_2
inline double geo_g_loss(const GeoGanModel& model, const Tensor& batch_x, const Tensor& batch_y,
                         const GeoGanConfig& cfg = {}, Gradients* g_grads = nullptr) {
    if (batch_x.shape[0] == 0 || batch_y.shape[0] == 0)
        throw DegenerateInput("geo_g_loss: empty batch");
    const double bf = static_cast<double>(batch_x.shape[0]);
    const double br = static_cast<double>(batch_y.shape[0]);

    ForwardTrace tg;
    const Tensor fake = forward(model.generator, batch_x, &tg);
    ForwardTrace td_fake;
    const Tensor sf = forward(model.discriminator, fake, &td_fake);
    if (!fake.all_finite() || !sf.all_finite())
        throw NumericError("geo_g_loss: non-finite activations");

    double loss = 0.0;
    for (std::size_t i = 0; i < sf.numel(); ++i)
        loss += (1.0 - sf.data[i]) * (1.0 - sf.data[i]) / bf;

    // Feature traces for the fake and real batches through the feature net.
    const bool from_g = cfg.features_from_generator;
    ForwardTrace t_feat_real;
    if (from_g)
        forward(model.generator, batch_y, &t_feat_real);
    else
        forward(model.discriminator, batch_y, &t_feat_real);
    const ForwardTrace& t_feat_fake = from_g ? tg : td_fake;

    struct FeatTerm {
        std::size_t act;
        std::vector<double> diff;
        double norm;
    };
    std::vector<FeatTerm> terms;
    for (std::size_t i : cfg.feature_layers) {
        const std::size_t act = detail::feature_act_index(i);
        if (act >= t_feat_fake.acts.size() || act >= t_feat_real.acts.size())
            throw ShapeError("geo_g_loss: feature layer index out of range");
        const auto mf = detail::column_mean(t_feat_fake.acts[act]);
        const auto mr = detail::column_mean(t_feat_real.acts[act]);
        FeatTerm term;
        term.act = act;
        term.diff.resize(mf.size());
        double sq = 0.0;
        for (std::size_t j = 0; j < mf.size(); ++j) {
            term.diff[j] = mf[j] - mr[j];
            sq += term.diff[j] * term.diff[j];
        }
        term.norm = std::sqrt(sq);
        loss += term.norm;
        terms.push_back(std::move(term));
    }

    // Output-matching term.
    std::vector<double> out_diff(fake.shape[1], 0.0);
    double out_norm = 0.0;
    std::vector<double> paired_norms;
    if (cfg.paired_output_term) {
        if (batch_y.shape[0] != batch_x.shape[0])
            throw ShapeError("geo_g_loss: paired output term needs equal batch sizes");
        paired_norms.resize(batch_x.shape[0]);
        for (std::size_t r = 0; r < fake.shape[0]; ++r) {
            double sq = 0.0;
            for (std::size_t j = 0; j < fake.shape[1]; ++j) {
                const double d = fake.at2(r, j) - batch_y.at2(r, j);
                sq += d * d;
            }
            paired_norms[r] = std::sqrt(sq);
            loss += paired_norms[r] / bf;
        }
    } else {
        const auto mf = detail::column_mean(fake);
        const auto mr = detail::column_mean(batch_y);
        double sq = 0.0;
        for (std::size_t j = 0; j < out_diff.size(); ++j) {
            out_diff[j] = mf[j] - mr[j];
            sq += out_diff[j] * out_diff[j];
        }
        out_norm = std::sqrt(sq);
        loss += out_norm;
    }

    if (g_grads) {
        // Gradients flow into G through the discriminator score, through the
        // feature activations, and directly through the output term. The
        // discriminator itself is held fixed.
        std::vector<Tensor> ups_d(td_fake.acts.size());
        Tensor us(sf.shape);
        for (std::size_t i = 0; i < sf.numel(); ++i) us.data[i] = -2.0 * (1.0 - sf.data[i]) / bf;
        ups_d.back() = us;

        std::vector<Tensor> ups_g(tg.acts.size());
        std::vector<Tensor> ups_feat_real(t_feat_real.acts.size());
        for (const FeatTerm& term : terms) {
            if (term.norm < 1e-12) continue;
            const Tensor& fact = t_feat_fake.acts[term.act];
            Tensor uf(fact.shape);
            for (std::size_t r = 0; r < fact.shape[0]; ++r)
                for (std::size_t j = 0; j < fact.shape[1]; ++j)
                    uf.at2(r, j) = term.diff[j] / (term.norm * static_cast<double>(fact.shape[0]));
            if (from_g)
                accumulate(ups_g[term.act], uf);
            else
                accumulate(ups_d[term.act], uf);
            // Real-side features also depend on G when it is the feature net.
            if (from_g) {
                const Tensor& ract = t_feat_real.acts[term.act];
                Tensor ur(ract.shape);
                for (std::size_t r = 0; r < ract.shape[0]; ++r)
                    for (std::size_t j = 0; j < ract.shape[1]; ++j)
                        ur.at2(r, j) =
                            -term.diff[j] / (term.norm * static_cast<double>(ract.shape[0]));
                accumulate(ups_feat_real[term.act], ur);
            }
        }

        Gradients gd = backward_multi(model.discriminator, td_fake, ups_d);
        Tensor d_fake = gd.input;  // dLoss/dG(x) via discriminator paths

        if (cfg.paired_output_term) {
            for (std::size_t r = 0; r < fake.shape[0]; ++r) {
                if (paired_norms[r] < 1e-12) continue;
                for (std::size_t j = 0; j < fake.shape[1]; ++j)
                    d_fake.at2(r, j) += (fake.at2(r, j) - batch_y.at2(r, j)) /
                                        (paired_norms[r] * bf);
            }
        } else if (out_norm > 1e-12) {
            for (std::size_t r = 0; r < fake.shape[0]; ++r)
                for (std::size_t j = 0; j < fake.shape[1]; ++j)
                    d_fake.at2(r, j) += out_diff[j] / (out_norm * bf);
        }

        accumulate(ups_g[ups_g.size() - 1], d_fake);
        Gradients gg = backward_multi(model.generator, tg, ups_g);
        std::vector<LayerGrads> acc;
        detail::add_layer_grads(acc, gg);
        if (from_g) {
            bool any = false;
            for (const Tensor& u : ups_feat_real) any = any || u.numel() > 0;
            if (any)
                detail::add_layer_grads(acc,
                                        backward_multi(model.generator, t_feat_real, ups_feat_real));
        }
        g_grads->layers = std::move(acc);
        g_grads->input = Tensor{};
    }
    return loss;
}

inline GeometryCode enhance_code(const GeoGanModel& model, const GeometryCode& code) {
    Tensor x({1, code.size()});
    for (std::size_t i = 0; i < code.size(); ++i) x.data[i] = code[i];
    const Tensor y = forward(model.generator, x);
    return GeometryCode(y.data.begin(), y.data.end());
}

struct GeoLossRecord {
    std::size_t iteration;
    double d_loss;
    double g_loss;
};

struct GeoCheckpointStat {
    std::size_t iteration;
    double score_real;   // mean D over all attractive codes
    double score_fake;   // mean D over all generated codes
    double mean_shift;   // || mean G(X) - mean Y ||
};

struct GeoGanTrainResult {
    GeoGanModel model;
    std::vector<GeoLossRecord> history;
    std::vector<GeoCheckpointStat> checkpoints;
    bool diverged = false;
    std::size_t completed_iterations = 0;
};

using GeoCheckpointHook =
    std::function<void(const GeoGanModel&, const GeoCheckpointStat&)>;

namespace detail {

inline GeoCheckpointStat geo_eval_stat(const GeoGanModel& model,
                                       const std::vector<GeometryCode>& codes_x,
                                       const std::vector<GeometryCode>& codes_y,
                                       std::size_t iteration) {
    std::vector<std::size_t> all_x(codes_x.size()), all_y(codes_y.size());
    for (std::size_t i = 0; i < all_x.size(); ++i) all_x[i] = i;
    for (std::size_t i = 0; i < all_y.size(); ++i) all_y[i] = i;
    const Tensor tx = batch_from_codes(codes_x, all_x);
    const Tensor ty = batch_from_codes(codes_y, all_y);
    const Tensor fake = forward(model.generator, tx);
    const Tensor sf = forward(model.discriminator, fake);
    const Tensor sy = forward(model.discriminator, ty);
    GeoCheckpointStat st;
    st.iteration = iteration;
    st.score_real = sy.vec().mean();
    st.score_fake = sf.vec().mean();
    const auto mf = column_mean(fake);
    const auto mr = column_mean(ty);
    double sq = 0.0;
    for (std::size_t j = 0; j < mf.size(); ++j) sq += (mf[j] - mr[j]) * (mf[j] - mr[j]);
    st.mean_shift = std::sqrt(sq);
    return st;
}

}  // namespace detail

// Alternating 1:1 D-step / G-step training with Adam. Deterministic given
// the seed. On divergence (non-finite loss or gradient) training halts and
// the last checkpointed model is returned with the diverged flag set.
inline GeoGanTrainResult train_geometry_gan(const GeoGanConfig& cfg,
                                            const std::vector<GeometryCode>& codes_x,
                                            const std::vector<GeometryCode>& codes_y,
                                            const GeoCheckpointHook& on_checkpoint = {}) {
    cfg.validate();
    if (codes_x.empty() || codes_y.empty())
        throw DegenerateInput("train_geometry_gan: both code sets must be nonempty");
    const std::size_t code_dim = codes_x[0].size();

    GeoGanTrainResult res;
    res.model = build_geo_gan(cfg.seed, code_dim);
    Rng rng = Rng(cfg.seed).fork(3);

    auto g_params = collect_parameters(res.model.generator);
    auto d_params = collect_parameters(res.model.discriminator);
    AdamState g_adam = AdamState::for_params(g_params, cfg.lr);
    AdamState d_adam = AdamState::for_params(d_params, cfg.lr);

    GeoGanModel last_checkpoint = res.model;
    res.history.reserve(cfg.iterations);

    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        std::vector<std::size_t> ix(cfg.batch_size), iy(cfg.batch_size);
        for (auto& v : ix) v = rng.index(codes_x.size());
        for (auto& v : iy) v = rng.index(codes_y.size());
        const Tensor bx = detail::batch_from_codes(codes_x, ix);
        const Tensor by = detail::batch_from_codes(codes_y, iy);

        double dl = 0.0, gl = 0.0;
        try {
            Gradients dg;
            dl = geo_d_loss(res.model, bx, by, &dg);
            adam_step(d_adam, d_params, collect_gradients(res.model.discriminator, dg));

            Gradients gg;
            gl = geo_g_loss(res.model, bx, by, cfg, &gg);
            adam_step(g_adam, g_params, collect_gradients(res.model.generator, gg));
        } catch (const NumericError&) {
            res.diverged = true;
            res.model = last_checkpoint;
            break;
        }
        if (!std::isfinite(dl) || !std::isfinite(gl)) {
            res.diverged = true;
            res.model = last_checkpoint;
            break;
        }
        res.history.push_back({it, dl, gl});
        res.completed_iterations = it;

        if (it % cfg.checkpoint_interval == 0 || it == cfg.iterations) {
            last_checkpoint = res.model;
            GeoCheckpointStat st = detail::geo_eval_stat(res.model, codes_x, codes_y, it);
            res.checkpoints.push_back(st);
            if (on_checkpoint) on_checkpoint(res.model, st);
        }
    }
    return res;
}

inline std::string loss_history_csv(const std::vector<GeoLossRecord>& history) {
    std::string csv = "iteration,d_loss,g_loss\n";
    char buf[96];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", rec.iteration, rec.d_loss, rec.g_loss);
        csv += buf;
    }
    return csv;
}

}  // namespace visage
