#include "ltdd/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ltdd/errors.hpp"

namespace ltdd {
namespace {

void check_targets(const Graph& graph, NodeId logits, NodeId targets, const char* what) {
    const Tensor& l = graph.value(logits);
    const Tensor& t = graph.value(targets);
    if (l.rank() != 2 || l.shape() != t.shape()) {
        throw ShapeError(std::string(what) + ": logits " + shape_to_string(l.shape()) + " vs targets " +
                         shape_to_string(t.shape()));
    }
    for (std::size_t r = 0; r < t.rows(); ++r) {
        double total = 0.0;
        for (double v : t.row(r)) total += v;
        if (std::fabs(total - 1.0) > 1e-9) {
            throw ValidationError(std::string(what) + ": target row " + std::to_string(r) + " sums to " +
                                  std::to_string(total) + ", not 1");
        }
    }
}

void check_anchors(std::span<const int> anchors, std::size_t rows, std::size_t classes) {
    if (anchors.size() != rows) {
        throw ShapeError("lc_loss: " + std::to_string(anchors.size()) + " anchor classes for " + std::to_string(rows) +
                         " rows");
    }
    for (int a : anchors) {
        if (a < 0 || static_cast<std::size_t>(a) >= classes) {
            throw ValidationError("lc_loss: anchor class " + std::to_string(a) + " out of range");
        }
    }
}

// Logit offsets -lambda * ln(s_j), shifted so the largest class sits at 0.
// The shift cancels inside the softmax and keeps uniform counts exactly zero.
Tensor logit_offsets(const ClassCounts& counts, double lambda) {
    const double top = std::log(static_cast<double>(*std::max_element(counts.s.begin(), counts.s.end())));
    std::vector<double> offsets(counts.s.size());
    for (std::size_t j = 0; j < offsets.size(); ++j) {
        offsets[j] = -lambda * (std::log(static_cast<double>(counts.s[j])) - top);
    }
    return Tensor::vector(std::move(offsets));
}

// Per-row weight g(s_{a_i}) * scale broadcast over the row.
Tensor row_weights(const ClassCounts& counts, std::span<const int> anchors, std::size_t classes, double scale) {
    const auto g = counts.normalized_weights();
    Tensor w = Tensor::zeros({anchors.size(), classes});
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        auto row = w.row(i);
        std::fill(row.begin(), row.end(), g[static_cast<std::size_t>(anchors[i])] * scale);
    }
    return w;
}

std::vector<double> subset_flat(std::span<const LayerNodes> layers, const Graph& graph) {
    std::vector<double> out;
    for (const LayerNodes& l : layers) {
        const auto w = graph.value(l.weight).data();
        const auto b = graph.value(l.bias).data();
        out.insert(out.end(), w.begin(), w.end());
        out.insert(out.end(), b.begin(), b.end());
    }
    return out;
}

}  // namespace

void ClassCounts::validate() const {
    if (s.size() < 2) throw ValidationError("class counts: need at least 2 classes");
    for (std::size_t c = 0; c < s.size(); ++c) {
        if (s[c] == 0) {
            throw ValidationError("class counts: class " + std::to_string(c) + " has zero samples (log 0 undefined)");
        }
    }
}

bool ClassCounts::uniform() const noexcept {
    return std::adjacent_find(s.begin(), s.end(), std::not_equal_to<>()) == s.end();
}

std::vector<double> ClassCounts::normalized_weights() const {
    const double total = static_cast<double>(std::accumulate(s.begin(), s.end(), std::size_t{0}));
    const double classes = static_cast<double>(s.size());
    std::vector<double> g(s.size());
    for (std::size_t c = 0; c < s.size(); ++c) g[c] = classes * static_cast<double>(s[c]) / total;
    return g;
}

void LossWeights::validate() const {
    if (!(lambda_smooth >= 0.0)) throw ValidationError("lambda must be >= 0");
    if (!(lambda_rep >= 0.0)) throw ValidationError("lambda_rep must be >= 0");
    if (!(lambda_cls >= 0.0)) throw ValidationError("lambda_cls must be >= 0");
    if (!(lambda_rep + lambda_cls > 0.0)) throw ValidationError("lambda_rep + lambda_cls must be > 0");
}

NodeId soft_cross_entropy(Graph& graph, NodeId logits, NodeId targets) {
    check_targets(graph, logits, targets, "soft_cross_entropy");
    const double n = static_cast<double>(graph.value(logits).rows());
    const NodeId picked = graph.mul(targets, graph.log_softmax(logits));
    return graph.scale(graph.sum(picked), -1.0 / n);
}

NodeId lc_loss(Graph& graph, NodeId logits, NodeId targets, std::span<const int> anchors, const ClassCounts& counts,
               double lambda) {
    counts.validate();
    check_targets(graph, logits, targets, "lc_loss");
    const Tensor& l = graph.value(logits);
    if (l.cols() != counts.num_classes()) {
        throw ShapeError("lc_loss: " + std::to_string(l.cols()) + " logit columns for " +
                         std::to_string(counts.num_classes()) + " class counts");
    }
    check_anchors(anchors, l.rows(), l.cols());

    const double n = static_cast<double>(l.rows());
    const NodeId shifted = graph.add_rowvec(logits, graph.constant(logit_offsets(counts, lambda)));
    const NodeId picked = graph.mul(targets, graph.log_softmax(shifted));
    const NodeId weighted = graph.mul(picked, graph.constant(row_weights(counts, anchors, l.cols(), 1.0)));
    return graph.scale(graph.sum(weighted), -1.0 / n);
}

NodeId lc_loss_logit_grad(Graph& graph, NodeId logits, NodeId targets, std::span<const int> anchors,
                          const ClassCounts& counts, double lambda) {
    counts.validate();
    check_targets(graph, logits, targets, "lc_loss_logit_grad");
    const Tensor& l = graph.value(logits);
    check_anchors(anchors, l.rows(), l.cols());
    const double n = static_cast<double>(l.rows());

    const NodeId shifted = graph.add_rowvec(logits, graph.constant(logit_offsets(counts, lambda)));
    const NodeId diff = graph.sub(graph.softmax(shifted), targets);
    return graph.mul(diff, graph.constant(row_weights(counts, anchors, l.cols(), 1.0 / n)));
}

double match_loss(std::span<const double> student, std::span<const double> expert_end,
                  std::span<const double> expert_start) {
    if (student.size() != expert_end.size() || student.size() != expert_start.size()) {
        throw ShapeError("match_loss: vector lengths differ");
    }
    const double denom = sq_dist(expert_start, expert_end);
    if (!(denom > 0.0)) throw DegenerateSegmentError();
    return sq_dist(student, expert_end) / denom;
}

NodeId match_loss(Graph& graph, std::span<const LayerNodes> student, const ParamSet& expert_end,
                  const ParamSet& expert_start, ParamSubset subset) {
    const auto [first, last] = subset_layers(expert_end.layers.size(), subset);
    if (student.size() != last - first) {
        throw ShapeError("match_loss: student has " + std::to_string(student.size()) + " layers, subset needs " +
                         std::to_string(last - first));
    }
    const double denom = sq_dist(flatten(expert_start, subset), flatten(expert_end, subset));
    if (!(denom > 0.0)) throw DegenerateSegmentError();

    // Subset sizes are checked here so shape errors name match_loss.
    if (subset_flat(student, graph).size() != flatten(expert_end, subset).size()) {
        throw ShapeError("match_loss: student subset size differs from expert subset size");
    }

    NodeId total{};
    bool first_term = true;
    for (std::size_t k = 0; k < student.size(); ++k) {
        const Layer& target = expert_end.layers[first + k];
        for (auto [node, value] : {std::pair{student[k].weight, &target.weight}, std::pair{student[k].bias, &target.bias}}) {
            const NodeId diff = graph.sub(node, graph.constant(*value));
            const NodeId term = graph.sum(graph.mul(diff, diff));
            total = first_term ? term : graph.add(total, term);
            first_term = false;
        }
    }
    return graph.scale(total, 1.0 / denom);
}

double joint_loss(const ParamSet& student, ExpertSegment rep, ExpertSegment cls, const LossWeights& weights) {
    weights.validate();
    double total = 0.0;
    if (weights.lambda_rep > 0.0) {
        total += weights.lambda_rep * match_loss(flatten(student, ParamSubset::backbone),
                                                 flatten(rep.end, ParamSubset::backbone),
                                                 flatten(rep.start, ParamSubset::backbone));
    }
    if (weights.lambda_cls > 0.0) {
        total += weights.lambda_cls * match_loss(flatten(student, ParamSubset::classifier),
                                                 flatten(cls.end, ParamSubset::classifier),
                                                 flatten(cls.start, ParamSubset::classifier));
    }
    return total;
}

}  // namespace ltdd
