#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ltdd/errors.hpp"
#include "ltdd/losses.hpp"
#include "ltdd/models.hpp"
#include "ltdd/training.hpp"
#include "support.hpp"

using namespace ltdd;
using ltdd::testing::random_tensor;

namespace {

ParamSet hand_net() {
    ParamSet p;
    p.layers.push_back({Tensor::matrix(2, 2, {1, 0, 0, 1}), Tensor::vector({0.0, 0.5})});
    p.layers.push_back({Tensor::matrix(2, 2, {1, 2, 3, 4}), Tensor::vector({0.1, -0.1})});
    p.classifier_boundary = 1;
    return p;
}

}  // namespace

TEST_CASE("spec validation") {
    CHECK_NOTHROW((MlpSpec{{4, 8, 3}}.validate()));
    CHECK_THROWS_AS((MlpSpec{{4, 3}}.validate()), ValidationError);
    CHECK_THROWS_AS((MlpSpec{{4, 0, 3}}.validate()), ValidationError);
    CHECK_THROWS_AS((MlpSpec{{4, 8, 1}}.validate()), ValidationError);
}

TEST_CASE("init is He normal with zero biases") {
    const ParamSet p = init_params(MlpSpec{{64, 160, 3}}, 12);
    for (const Layer& l : p.layers) {
        for (double b : l.bias.data()) CHECK(b == 0.0);
    }
    const auto w = p.layers[0].weight.data();
    double sum = 0.0, sq = 0.0;
    for (double v : w) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(w.size());
    const double var = sq / n - (sum / n) * (sum / n);
    CHECK(std::abs(var - 2.0 / 64.0) < 0.1 * 2.0 / 64.0);
    CHECK(init_params(MlpSpec{{64, 160, 3}}, 12) == p);
    CHECK_FALSE(init_params(MlpSpec{{64, 160, 3}}, 13) == p);
    CHECK(p.classifier_boundary == 1);
    CHECK((p.spec() == MlpSpec{{64, 160, 3}}));
}

TEST_CASE("forward on hand fixture") {
    const Tensor logits = predict_logits(hand_net(), Tensor::matrix(1, 2, {1.0, 0.0}));
    CHECK(logits(0, 0) == doctest::Approx(2.1));
    CHECK(logits(0, 1) == doctest::Approx(4.9));
    CHECK(predict_labels(hand_net(), Tensor::matrix(1, 2, {1.0, 0.0})) == std::vector<int>{1});
}

TEST_CASE("zero network gives zero logits") {
    ParamSet p = init_params(MlpSpec{{3, 5, 4}}, 0);
    for (Layer& l : p.layers) {
        for (double& v : l.weight.data()) v = 0.0;
    }
    Rng rng(1);
    const Tensor logits = predict_logits(p, random_tensor({6, 3}, rng));
    CHECK(logits == Tensor::zeros({6, 4}));
    CHECK(predict_labels(p, random_tensor({6, 3}, rng)) == std::vector<int>(6, 0));
}

TEST_CASE("argmax ties go to the lower class") {
    CHECK(argmax_rows(Tensor::matrix(2, 3, {1, 3, 3, 2, 2, 2})) == std::vector<int>{1, 0});
}

TEST_CASE("forward rejects wrong input width") {
    CHECK_THROWS_AS(predict_logits(hand_net(), Tensor::matrix(1, 3, {1, 2, 3})), ShapeError);
}

TEST_CASE("flatten sizes and partition") {
    const MlpSpec spec{{4, 8, 3}};
    CHECK(flat_size(spec) == 67);
    const ParamSet p = init_params(spec, 3);
    CHECK(flatten(p).size() == 67);
    CHECK(flatten(p, ParamSubset::backbone).size() + flatten(p, ParamSubset::classifier).size() == 67);
    CHECK(flat_size(spec, ParamSubset::classifier) == 27);
    auto whole = flatten(p);
    auto back = flatten(p, ParamSubset::backbone);
    auto head = flatten(p, ParamSubset::classifier);
    back.insert(back.end(), head.begin(), head.end());
    CHECK(back == whole);
}

TEST_CASE("flatten unflatten round trip is bitwise") {
    const MlpSpec spec{{5, 7, 6, 3}};
    ParamSet p = init_params(spec, 9);
    Rng rng(2);
    for (Layer& l : p.layers) l.bias = random_tensor(l.bias.shape(), rng);
    const ParamSet q = unflatten(flatten(p), spec);
    CHECK(q == p);
    const Tensor x = random_tensor({4, 5}, rng);
    CHECK(predict_logits(q, x) == predict_logits(p, x));
    CHECK_THROWS_AS(unflatten(std::vector<double>(3), spec), ShapeError);
}

TEST_CASE("flatten order is weights row-major then bias") {
    const auto v = flatten(hand_net());
    CHECK((v == std::vector<double>{1, 0, 0, 1, 0.0, 0.5, 1, 2, 3, 4, 0.1, -0.1}));
}

TEST_CASE("sq_dist") {
    const std::vector<double> a{0, 0}, b{1, 1};
    CHECK(sq_dist(a, a) == 0.0);
    CHECK(sq_dist(a, b) == 2.0);
    CHECK_THROWS_AS(sq_dist(a, std::vector<double>{1}), ShapeError);
}

TEST_CASE("backprop_as_graph equals reverse-mode gradients") {
    Rng rng(4);
    const MlpSpec spec{{5, 7, 6, 3}};
    ParamSet p = init_params(spec, 4);
    for (Layer& l : p.layers) l.bias = random_tensor(l.bias.shape(), rng, 0.1);
    const Tensor x = random_tensor({8, 5}, rng);
    const Tensor t = one_hot(std::vector<int>{0, 1, 2, 0, 1, 2, 2, 1}, 3);

    Graph g;
    const auto layers = as_leaves(g, p);
    const NodeId xn = g.constant(x);
    const NodeId tn = g.constant(t);
    const ForwardTrace trace = forward_trace(g, layers, xn);
    const auto reference = g.backward(soft_cross_entropy(g, trace.logits, tn));

    const NodeId grad_logits = g.scale(g.sub(g.softmax(trace.logits), tn), 1.0 / 8.0);
    const auto grads = backprop_as_graph(g, layers, trace, grad_logits);
    REQUIRE(grads.size() == layers.size());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Tensor& w = g.value(grads[l].weight);
        const Tensor& b = g.value(grads[l].bias);
        const Tensor& rw = reference.at(layers[l].weight);
        const Tensor& rb = reference.at(layers[l].bias);
        REQUIRE(w.shape() == rw.shape());
        for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == doctest::Approx(rw[i]).epsilon(1e-12));
        for (std::size_t i = 0; i < b.size(); ++i) CHECK(b[i] == doctest::Approx(rb[i]).epsilon(1e-12));
    }

    const auto head = backprop_as_graph(g, layers, trace, grad_logits, 2);
    REQUIRE(head.size() == 1);
    CHECK(g.value(head[0].weight) == g.value(grads[2].weight));
}

TEST_CASE("backbone features feed the classifier") {
    Rng rng(8);
    const ParamSet p = init_params(MlpSpec{{4, 6, 5, 3}}, 8);
    const Tensor x = random_tensor({3, 4}, rng);
    const Tensor h = backbone_features(p, x);
    CHECK(h.cols() == 5);
    ParamSet head;
    head.layers.push_back(p.classifier());
    CHECK(predict_logits(head, h) == predict_logits(p, x));
}

TEST_CASE("from_nodes reads back values") {
    const ParamSet p = hand_net();
    Graph g;
    const auto nodes = as_constants(g, p);
    const ParamSet q = from_nodes(g, nodes);
    CHECK(q.layers == p.layers);
}
