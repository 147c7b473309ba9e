#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "ltdd/graph.hpp"
#include "ltdd/tensor.hpp"

namespace ltdd {

/// Layer widths from input to output: (d, hidden..., C). ReLU between
/// affine layers, none after the last.
struct MlpSpec {
    std::vector<std::size_t> widths;

    void validate() const;
    std::size_t input_dim() const { return widths.front(); }
    std::size_t num_classes() const { return widths.back(); }
    std::size_t num_layers() const { return widths.size() - 1; }

    friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// Weight is (out x in) so row c of the classifier weight belongs to class c.
struct Layer {
    Tensor weight;
    Tensor bias;

    friend bool operator==(const Layer&, const Layer&) = default;
};

/// Layers [0, classifier_boundary) form the backbone; the final affine
/// layer is the classifier.
struct ParamSet {
    std::vector<Layer> layers;
    std::size_t classifier_boundary = 0;

    MlpSpec spec() const;
    const Layer& classifier() const { return layers.back(); }
    Layer& classifier() { return layers.back(); }

    friend bool operator==(const ParamSet&, const ParamSet&) = default;
};

enum class ParamSubset { whole, backbone, classifier };

/// Half-open layer range [first, last) covered by a subset.
std::pair<std::size_t, std::size_t> subset_layers(std::size_t num_layers, ParamSubset subset);

/// He-normal weights (variance 2 / fan_in), zero biases.
ParamSet init_params(const MlpSpec& spec, std::uint64_t seed);

struct LayerNodes {
    NodeId weight;
    NodeId bias;
};

std::vector<LayerNodes> as_constants(Graph& graph, const ParamSet& params);
std::vector<LayerNodes> as_leaves(Graph& graph, const ParamSet& params);

/// Intermediates of one forward pass. inputs[l] feeds layer l (inputs[0] is
/// X); pre[l] is that layer's affine output; logits == pre.back().
struct ForwardTrace {
    std::vector<NodeId> inputs;
    std::vector<NodeId> pre;
    NodeId logits;
};

ForwardTrace forward_trace(Graph& graph, std::span<const LayerNodes> layers, NodeId x);
NodeId forward(Graph& graph, std::span<const LayerNodes> layers, NodeId x);

/// Backpropagation written with graph primitives: given dLoss/dLogits as a
/// node, records dLoss/dW and dLoss/db for layers [first_layer, L) and
/// returns them in layer order. The results are ordinary nodes, so a later
/// reverse pass can differentiate through them (and through any parameter
/// update built from them).
std::vector<LayerNodes> backprop_as_graph(Graph& graph, std::span<const LayerNodes> layers,
                                          const ForwardTrace& trace, NodeId grad_logits,
                                          std::size_t first_layer = 0);

/// Logits of a ParamSet on a feature matrix, evaluated outside any caller graph.
Tensor predict_logits(const ParamSet& params, const Tensor& x);

/// Row-wise argmax of the logits; ties go to the lower class index.
std::vector<int> predict_labels(const ParamSet& params, const Tensor& x);
std::vector<int> argmax_rows(const Tensor& logits);

/// Penultimate-layer features (input to the classifier).
Tensor backbone_features(const ParamSet& params, const Tensor& x);

/// Weights row-major then bias, layer by layer, over the chosen subset.
std::vector<double> flatten(const ParamSet& params, ParamSubset subset = ParamSubset::whole);
ParamSet unflatten(std::span<const double> values, const MlpSpec& spec);
std::size_t flat_size(const MlpSpec& spec, ParamSubset subset = ParamSubset::whole);

double sq_dist(std::span<const double> a, std::span<const double> b);

ParamSet from_nodes(const Graph& graph, std::span<const LayerNodes> layers);

}  // namespace ltdd
