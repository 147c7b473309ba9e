#include "ltdd/models.hpp"

#include <cmath>
#include <string>

#include "ltdd/errors.hpp"
#include "ltdd/rng.hpp"

namespace ltdd {

void MlpSpec::validate() const {
    if (widths.size() < 3) throw ValidationError("mlp: need input, at least one hidden layer, and output widths");
    for (std::size_t w : widths) {
        if (w == 0) throw ValidationError("mlp: layer widths must be positive");
    }
    if (widths.back() < 2) throw ValidationError("mlp: output width (class count) must be >= 2");
}

MlpSpec ParamSet::spec() const {
    MlpSpec spec;
    if (layers.empty()) return spec;
    spec.widths.push_back(layers.front().weight.cols());
    for (const Layer& layer : layers) spec.widths.push_back(layer.weight.rows());
    return spec;
}

std::pair<std::size_t, std::size_t> subset_layers(std::size_t num_layers, ParamSubset subset) {
    switch (subset) {
        case ParamSubset::backbone:
            return {0, num_layers - 1};
        case ParamSubset::classifier:
            return {num_layers - 1, num_layers};
        case ParamSubset::whole:
            break;
    }
    return {0, num_layers};
}

ParamSet init_params(const MlpSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed);
    ParamSet params;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t fan_in = spec.widths[l];
        const std::size_t fan_out = spec.widths[l + 1];
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        Tensor weight = Tensor::zeros({fan_out, fan_in});
        for (double& w : weight.data()) w = stddev * rng.normal();
        params.layers.push_back(Layer{std::move(weight), Tensor::zeros({fan_out})});
    }
    params.classifier_boundary = spec.num_layers() - 1;
    return params;
}

std::vector<LayerNodes> as_constants(Graph& graph, const ParamSet& params) {
    std::vector<LayerNodes> out;
    for (const Layer& layer : params.layers) out.push_back({graph.constant(layer.weight), graph.constant(layer.bias)});
    return out;
}

std::vector<LayerNodes> as_leaves(Graph& graph, const ParamSet& params) {
    std::vector<LayerNodes> out;
    for (const Layer& layer : params.layers) out.push_back({graph.leaf(layer.weight), graph.leaf(layer.bias)});
    return out;
}

ForwardTrace forward_trace(Graph& graph, std::span<const LayerNodes> layers, NodeId x) {
    if (layers.empty()) throw ShapeError("forward: no layers");
    const Tensor& xv = graph.value(x);
    const Tensor& w0 = graph.value(layers.front().weight);
    if (xv.rank() != 2 || xv.cols() != w0.cols()) {
        throw ShapeError("forward: input " + shape_to_string(xv.shape()) + " does not match first layer weight " +
                         shape_to_string(w0.shape()));
    }
    ForwardTrace trace;
    NodeId h = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        trace.inputs.push_back(h);
        const NodeId z = graph.add_rowvec(graph.matmul(h, graph.transpose(layers[l].weight)), layers[l].bias);
        trace.pre.push_back(z);
        if (l + 1 < layers.size()) h = graph.relu(z);
    }
    trace.logits = trace.pre.back();
    return trace;
}

NodeId forward(Graph& graph, std::span<const LayerNodes> layers, NodeId x) {
    return forward_trace(graph, layers, x).logits;
}

std::vector<LayerNodes> backprop_as_graph(Graph& graph, std::span<const LayerNodes> layers,
                                          const ForwardTrace& trace, NodeId grad_logits, std::size_t first_layer) {
    const std::size_t num_layers = layers.size();
    if (first_layer >= num_layers) throw ShapeError("backprop_as_graph: first_layer out of range");
    std::vector<LayerNodes> grads(num_layers - first_layer);
    NodeId grad_pre = grad_logits;
    for (std::size_t l = num_layers; l-- > first_layer;) {
        // dW = G^T H, db = column sums of G
        grads[l - first_layer].weight = graph.matmul(graph.transpose(grad_pre), trace.inputs[l]);
        grads[l - first_layer].bias = graph.sum_rows(grad_pre);
        if (l == first_layer) break;
        const NodeId grad_input = graph.matmul(grad_pre, layers[l].weight);
        grad_pre = graph.mul(grad_input, graph.relu_mask(trace.pre[l - 1]));
    }
    return grads;
}

Tensor predict_logits(const ParamSet& params, const Tensor& x) {
    Graph graph;
    const auto layers = as_constants(graph, params);
    return graph.value(forward(graph, layers, graph.constant(x)));
}

std::vector<int> argmax_rows(const Tensor& logits) {
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        auto row = logits.row(r);
        std::size_t best = 0;
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[best]) best = c;
        }
        out[r] = static_cast<int>(best);
    }
    return out;
}

std::vector<int> predict_labels(const ParamSet& params, const Tensor& x) {
    return argmax_rows(predict_logits(params, x));
}

Tensor backbone_features(const ParamSet& params, const Tensor& x) {
    Graph graph;
    const auto layers = as_constants(graph, params);
    const ForwardTrace trace = forward_trace(graph, layers, graph.constant(x));
    return graph.value(trace.inputs.back());
}

std::vector<double> flatten(const ParamSet& params, ParamSubset subset) {
    const auto [first, last] = subset_layers(params.layers.size(), subset);
    std::vector<double> out;
    for (std::size_t l = first; l < last; ++l) {
        const Layer& layer = params.layers[l];
        out.insert(out.end(), layer.weight.data().begin(), layer.weight.data().end());
        out.insert(out.end(), layer.bias.data().begin(), layer.bias.data().end());
    }
    return out;
}

std::size_t flat_size(const MlpSpec& spec, ParamSubset subset) {
    const auto [first, last] = subset_layers(spec.num_layers(), subset);
    std::size_t n = 0;
    for (std::size_t l = first; l < last; ++l) n += spec.widths[l + 1] * spec.widths[l] + spec.widths[l + 1];
    return n;
}

ParamSet unflatten(std::span<const double> values, const MlpSpec& spec) {
    spec.validate();
    if (values.size() != flat_size(spec)) {
        throw ShapeError("unflatten: expected " + std::to_string(flat_size(spec)) + " values, got " +
                         std::to_string(values.size()));
    }
    ParamSet params;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
        auto take = [&](std::size_t n) {
            std::vector<double> chunk(values.begin() + static_cast<std::ptrdiff_t>(offset),
                                      values.begin() + static_cast<std::ptrdiff_t>(offset + n));
            offset += n;
            return chunk;
        };
        Tensor weight = Tensor::matrix(out, in, take(out * in));
        Tensor bias = Tensor::vector(take(out));
        params.layers.push_back(Layer{std::move(weight), std::move(bias)});
    }
    params.classifier_boundary = spec.num_layers() - 1;
    return params;
}

double sq_dist(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("sq_dist: length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        total += diff * diff;
    }
    return total;
}

ParamSet from_nodes(const Graph& graph, std::span<const LayerNodes> layers) {
    ParamSet params;
    for (const LayerNodes& layer : layers) params.layers.push_back({graph.value(layer.weight), graph.value(layer.bias)});
    params.classifier_boundary = params.layers.empty() ? 0 : params.layers.size() - 1;
    return params;
}

}  // namespace ltdd
