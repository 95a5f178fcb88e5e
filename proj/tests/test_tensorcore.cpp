#include <catch2/catch_amalgamated.hpp>
#include <visage/visage.hpp>

#include "oracles.hpp"

using namespace visage;

namespace {

// Scalar loss for gradient checks: fixed random projection of the output.
double projected_loss(const Network& net, const Tensor& x, const Tensor& proj, Phase phase,
                      ForwardTrace* trace = nullptr) {
    ForwardTrace local;
    ForwardTrace* t = trace ? trace : &local;
    const Tensor y = forward(net, x, t, phase);
    double s = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y.data[i] * proj.data[i];
    return s;
}

// True when no ReLU pre-activation sits in the finite-difference window.
bool relu_safe(const Network& net, const ForwardTrace& trace, double margin = 1e-4) {
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].kind == LayerKind::ReLU)
            for (double v : trace.acts[i].data)
                if (std::fabs(v) < margin) return false;
    return true;
}

double check_network_grads(Network& net, Tensor x, Phase phase, Rng& rng) {
    const auto out_shape = activation_shapes(net, x.shape).back();
    const Tensor proj = Tensor::gaussian(out_shape, 0.0, 1.0, rng);
    ForwardTrace trace;
    projected_loss(net, x, proj, phase, &trace);
    Gradients grads = backward(net, trace, proj);

    auto f = [&]() { return projected_loss(net, x, proj, phase); };
    double worst = 0.0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
        if (!net.layers[li].has_params()) continue;
        worst = std::max(worst, oracles::max_grad_err(f, net.layers[li].weight,
                                                      grads.layers[li].weight));
        worst = std::max(worst, oracles::max_grad_err(f, net.layers[li].bias,
                                                      grads.layers[li].bias));
    }
    worst = std::max(worst, oracles::max_grad_err(f, x, grads.input));
    return worst;
}

}  // namespace

TEST_CASE("generator architecture maps 32 to 32") {
    Rng rng(7);
    Network g = build_geo_generator(rng);
    Tensor x = Tensor::gaussian({1, 32}, 0.0, 1.0, rng);
    const Tensor y = forward(g, x);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 32});
}

TEST_CASE("zero network maps any input to zero") {
    Rng rng(3);
    Network net("zero");
    net.add(Layer::fully_connected(5, 4, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(4, 3, rng));
    for (Layer& l : net.layers) {
        for (double& v : l.weight.data) v = 0.0;
        for (double& v : l.bias.data) v = 0.0;
    }
    const Tensor y = forward(net, Tensor::gaussian({2, 5}, 0.0, 2.0, rng));
    for (double v : y.data) REQUIRE(v == 0.0);
}

TEST_CASE("single FC layer matches the dense-algebra oracle") {
    Rng rng(11);
    Network net("fc");
    net.add(Layer::fully_connected(3, 2, rng));
    Tensor x = Tensor::gaussian({1, 3}, 0.0, 1.0, rng);
    const Tensor y = forward(net, x);
    const Layer& l = net.layers[0];
    for (std::size_t o = 0; o < 2; ++o) {
        double want = l.bias.data[o];
        for (std::size_t i = 0; i < 3; ++i) want += x.data[i] * l.weight.at2(i, o);
        REQUIRE(y.data[o] == Catch::Approx(want).margin(0.0));
    }
}

TEST_CASE("forward is pure: identical runs give bit-identical output") {
    Rng rng(5);
    Network net("pure");
    net.add(Layer::conv2d(2, 3, 3, 1, 1, rng)).add(Layer::relu());
    net.add(Layer::fully_connected(3 * 6 * 6, 4, rng));
    const Tensor x = Tensor::gaussian({1, 2, 6, 6}, 0.0, 1.0, rng);
    const Tensor y1 = forward(net, x);
    const Tensor y2 = forward(net, x);
    REQUIRE(y1.data == y2.data);
}

TEST_CASE("forward rejects shape mismatch naming the layer") {
    Rng rng(9);
    Network net("mismatch");
    net.add(Layer::fully_connected(4, 4, rng));
    net.add(Layer::fully_connected(5, 2, rng));  // wrong on purpose
    try {
        forward(net, Tensor::zeros({1, 4}));
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        REQUIRE(std::string(e.what()).find("layer 1") != std::string::npos);
    }
}

TEST_CASE("backward without a forward cache is rejected") {
    Rng rng(2);
    Network net("nocache");
    net.add(Layer::fully_connected(3, 3, rng));
    ForwardTrace empty;
    REQUIRE_THROWS_AS(backward(net, empty, Tensor::zeros({1, 3})), ShapeError);
}

TEST_CASE("ReLU passes zero gradient through negative pre-activations") {
    Network net("relu");
    net.add(Layer::relu());
    Tensor x({1, 4}, {-2.0, -0.5, 0.5, 2.0});
    ForwardTrace trace;
    forward(net, x, &trace);
    Gradients g = backward(net, trace, Tensor::full({1, 4}, 1.0));
    REQUIRE(g.input.data[0] == 0.0);
    REQUIRE(g.input.data[1] == 0.0);
    REQUIRE(g.input.data[2] == 1.0);
    REQUIRE(g.input.data[3] == 1.0);
}

TEST_CASE("32-64-1 network gradients match finite differences") {
    Rng rng(21);
    for (int trial = 0; trial < 3; ++trial) {
        Network net("mlp");
        net.add(Layer::fully_connected(32, 64, rng)).add(Layer::relu());
        net.add(Layer::fully_connected(64, 1, rng));
        Tensor x = Tensor::gaussian({2, 32}, 0.0, 1.0, rng);
        ForwardTrace trace;
        forward(net, x, &trace);
        if (!relu_safe(net, trace)) continue;
        REQUIRE(check_network_grads(net, x, Phase::Infer, rng) < 1e-4);
        break;
    }
}

TEST_CASE("conv2d gradient check on 3x8x8 with 4 kernels") {
    Rng rng(22);
    Network net("conv");
    net.add(Layer::conv2d(3, 4, 3, 1, 0, rng));
    Tensor x = Tensor::gaussian({1, 3, 8, 8}, 0.0, 1.0, rng);
    REQUIRE(check_network_grads(net, x, Phase::Infer, rng) < 1e-4);
}

TEST_CASE("batchnorm training-mode gradient check") {
    Rng rng(23);
    Network net("bn");
    net.add(Layer::batch_norm(3));
    Tensor x = Tensor::gaussian({4, 3}, 0.5, 1.5, rng);
    REQUIRE(check_network_grads(net, x, Phase::Train, rng) < 1e-4);

    Network net4("bn4");
    net4.add(Layer::batch_norm(2));
    Tensor x4 = Tensor::gaussian({2, 2, 3, 3}, 0.0, 1.0, rng);
    REQUIRE(check_network_grads(net4, x4, Phase::Train, rng) < 1e-4);
}

TEST_CASE("conv2d spatial size follows the stride/padding formula") {
    Rng rng(31);
    Layer big = Layer::conv2d(3, 32, 9, 1, 4, rng);
    Tensor x = Tensor::zeros({1, 3, 224, 224});
    const Tensor y = conv2d_forward(big, x);
    REQUIRE(y.shape == std::vector<std::size_t>{1, 32, 224, 224});
}

TEST_CASE("1x1 delta kernel reproduces the input channel") {
    Rng rng(32);
    Layer l = Layer::conv2d(1, 1, 1, 1, 0, rng);
    l.weight.data[0] = 1.0;
    l.bias.data[0] = 0.0;
    Tensor x = Tensor::gaussian({1, 1, 5, 7}, 0.0, 1.0, rng);
    const Tensor y = conv2d_forward(l, x);
    REQUIRE(y.data == x.data);
}

TEST_CASE("conv2d equals the naive loop oracle exactly") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        const int stride = 1 + static_cast<int>(rng.index(2));
        const int pad = static_cast<int>(rng.index(3));
        const std::size_t k = 1 + rng.index(3);
        Layer l = Layer::conv2d(2, 3, k, stride, pad, rng);
        Tensor x = Tensor::gaussian({2, 2, 5, 5}, 0.0, 1.0, rng);
        if (k > 5 + 2 * static_cast<std::size_t>(pad)) continue;
        const Tensor got = conv2d_forward(l, x);
        const Tensor want = oracles::naive_conv2d(x, l.weight, l.bias, stride, pad);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.numel(); ++i) REQUIRE(got.data[i] == want.data[i]);
    }
}

TEST_CASE("conv2d rejects invalid geometry") {
    Rng rng(34);
    REQUIRE_THROWS_AS(Layer::conv2d(1, 1, 3, 0, 0, rng), ShapeError);
    Layer l = Layer::conv2d(1, 1, 7, 1, 0, rng);
    REQUIRE_THROWS_AS(conv2d_forward(l, Tensor::zeros({1, 1, 4, 4})), ShapeError);
    Layer ok = Layer::conv2d(2, 1, 3, 1, 0, rng);
    REQUIRE_THROWS_AS(conv2d_forward(ok, Tensor::zeros({1, 3, 8, 8})), ShapeError);
}

TEST_CASE("batchnorm inference with identity statistics is the identity map") {
    Rng rng(40);
    Network net("bn_id");
    net.add(Layer::batch_norm(3));
    Tensor x = Tensor::gaussian({4, 3}, 0.7, 2.0, rng);
    const Tensor y = forward(net, x, nullptr, Phase::Infer);
    REQUIRE(y.data == x.data);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged, increments step") {
    Rng rng(41);
    Network net("adam0");
    net.add(Layer::fully_connected(3, 2, rng));
    auto params = collect_parameters(net);
    AdamState st = AdamState::for_params(params, 1e-4);
    REQUIRE(st.lr == 1e-4);  // paper default
    const std::vector<double> before = net.layers[0].weight.data;
    Tensor zw = Tensor::zeros(net.layers[0].weight.shape);
    Tensor zb = Tensor::zeros(net.layers[0].bias.shape);
    adam_step(st, params, {&zw, &zb});
    REQUIRE(st.step == 1);
    REQUIRE(net.layers[0].weight.data == before);
}

TEST_CASE("adam: constant gradient approaches lr-sized steps (scalar oracle)") {
    AdamState st;
    st.lr = 1e-3;
    st.m.push_back(Tensor::zeros({1}));
    st.v.push_back(Tensor::zeros({1}));
    Tensor p = Tensor::full({1}, 5.0);
    Tensor g = Tensor::full({1}, 0.37);

    // Independent scalar recurrence.
    double m = 0.0, v = 0.0, prev = 5.0, expect_step = 0.0;
    double last_update = 0.0;
    for (int k = 1; k <= 300; ++k) {
        adam_step(st, {&p}, {&g});
        m = 0.9 * m + 0.1 * 0.37;
        v = 0.999 * v + 0.001 * 0.37 * 0.37;
        const double mh = m / (1.0 - std::pow(0.9, k));
        const double vh = v / (1.0 - std::pow(0.999, k));
        expect_step = st.lr * mh / (std::sqrt(vh) + st.eps);
        REQUIRE(p.data[0] == Catch::Approx(prev - expect_step).margin(1e-15));
        last_update = prev - p.data[0];
        prev = p.data[0];
    }
    REQUIRE(std::fabs(last_update) == Catch::Approx(st.lr).epsilon(0.02));
}

TEST_CASE("adam rejects non-finite gradients") {
    Rng rng(42);
    Network net("adamnan");
    net.add(Layer::fully_connected(2, 2, rng));
    auto params = collect_parameters(net);
    AdamState st = AdamState::for_params(params);
    Tensor gw = Tensor::full(net.layers[0].weight.shape, std::nan(""));
    Tensor gb = Tensor::zeros(net.layers[0].bias.shape);
    REQUIRE_THROWS_AS(adam_step(st, params, {&gw, &gb}), NumericError);
}

TEST_CASE("network serialization round-trips bit-exactly") {
    Rng rng(50);
    Network g = build_geo_generator(rng);
    const std::string text1 = serialize_network(g);
    Network back = deserialize_network(text1);
    const std::string text2 = serialize_network(back);
    REQUIRE(text1 == text2);
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
        REQUIRE(back.layers[i].weight.data == g.layers[i].weight.data);
        REQUIRE(back.layers[i].bias.data == g.layers[i].bias.data);
    }
}

TEST_CASE("generator file declares the documented layer sizes") {
    Rng rng(51);
    const auto j = network_to_json(build_geo_generator(rng));
    std::vector<std::size_t> sizes;
    sizes.push_back(j["layers"][0]["hyper"]["in"].get<std::size_t>());
    for (const auto& lj : j["layers"])
        if (lj["kind"] == "FullyConnected") sizes.push_back(lj["hyper"]["out"].get<std::size_t>());
    REQUIRE(sizes == std::vector<std::size_t>{32, 64, 64, 64, 64, 32});
}

TEST_CASE("corrupted data length is an explicit parse error") {
    Rng rng(52);
    Network net("bad");
    net.add(Layer::fully_connected(2, 2, rng));
    auto j = network_to_json(net);
    j["layers"][0]["data"].erase(0);  // drop one value
    REQUIRE_THROWS_AS(network_from_json(j), ParseError);
    auto j2 = network_to_json(net);
    j2["version"] = 99;
    REQUIRE_THROWS_AS(network_from_json(j2), ParseError);
    REQUIRE_THROWS_AS(deserialize_network("{not json"), ParseError);
}

TEST_CASE("randomized gradient suite across layer kinds") {
    Rng rng(60);
    int done = 0;
    for (int trial = 0; trial < 40 && done < 20; ++trial) {
        Network net("mix");
        net.add(Layer::conv2d(2, 3, 3, 1, 1, rng));
        net.add(Layer::batch_norm(3));
        net.add(Layer::relu());
        net.add(Layer::fully_connected(3 * 4 * 4, 5, rng));
        Tensor x = Tensor::gaussian({3, 2, 4, 4}, 0.0, 1.0, rng);
        ForwardTrace trace;
        forward(net, x, &trace, Phase::Train);
        if (!relu_safe(net, trace)) continue;
        REQUIRE(check_network_grads(net, x, Phase::Train, rng) < 1e-4);
        ++done;
    }
    REQUIRE(done >= 10);
}
