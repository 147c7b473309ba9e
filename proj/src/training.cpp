#include "ltdd/training.hpp"

#include "ltdd/graph.hpp"
#include "ltdd/losses.hpp"

namespace ltdd {

void MomentumSgd::update(Tensor& param, Tensor& velocity, const Tensor& grad) const {
    auto p = param.data();
    auto v = velocity.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = momentum_ * v[i] + (g[i] + weight_decay_ * p[i]);
        p[i] -= step_size_ * v[i];
    }
}

double MomentumSgd::step(ParamSet& params, std::vector<Layer>& velocity, const Tensor& x, const Tensor& targets) const {
    Graph graph;
    const auto layers = as_leaves(graph, params);
    const NodeId logits = forward(graph, layers, graph.constant(x));
    const NodeId loss = soft_cross_entropy(graph, logits, graph.constant(targets));
    const auto grads = graph.backward(loss);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(params.layers[l].weight, velocity[l].weight, grads.at(layers[l].weight));
        update(params.layers[l].bias, velocity[l].bias, grads.at(layers[l].bias));
    }
    return graph.value(loss).item();
}

std::vector<Layer> zero_velocity(const ParamSet& params) {
    std::vector<Layer> v;
    for (const Layer& l : params.layers) v.push_back({Tensor::zeros(l.weight.shape()), Tensor::zeros(l.bias.shape())});
    return v;
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
    Tensor out = Tensor::zeros({labels.size(), num_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) out(i, static_cast<std::size_t>(labels[i])) = 1.0;
    return out;
}

Tensor gather(const Tensor& matrix, std::span<const std::size_t> rows) {
    const std::size_t cols = matrix.cols();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (std::size_t r : rows) {
        auto src = matrix.row(r);
        data.insert(data.end(), src.begin(), src.end());
    }
    return Tensor::matrix(rows.size(), cols, std::move(data));
}

}  // namespace ltdd
