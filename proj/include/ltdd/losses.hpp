#pragma once

#include <span>
#include <vector>

#include "ltdd/graph.hpp"
#include "ltdd/models.hpp"

namespace ltdd {

/// Per-class sample counts of the long-tailed target set. All entries >= 1.
struct ClassCounts {
    std::vector<std::size_t> s;

    void validate() const;
    std::size_t num_classes() const noexcept { return s.size(); }
    bool uniform() const noexcept;
    // g(s_c) = C * s_c / sum_k s_k, so the weights average to one.
    std::vector<double> normalized_weights() const;

    static ClassCounts uniform_counts(std::size_t num_classes) { return {std::vector<std::size_t>(num_classes, 1)}; }
};

struct LossWeights {
    double lambda_smooth = 1.0;
    double lambda_rep = 1.0;
    double lambda_cls = 1.0;

    void validate() const;
};

/// -(1/n) sum_i sum_j T_ij log_softmax(L)_ij. Target rows must sum to 1.
NodeId soft_cross_entropy(Graph& graph, NodeId logits, NodeId targets);

/// Count-reweighted, count-offset softmax loss:
///   -(1/n) sum_i g(s_{a_i}) sum_j T_ij log P_ij,
///   P_ij = softmax_j(L_ij - lambda * ln s_j),
/// where a_i is the sample's anchor (assigned) class. With one-hot targets
/// this is the hard-label form; with uniform counts it equals
/// soft_cross_entropy.
NodeId lc_loss(Graph& graph, NodeId logits, NodeId targets, std::span<const int> anchors, const ClassCounts& counts,
               double lambda);

/// dLoss/dLogits of lc_loss written as graph nodes:
///   (g(s_{a_i}) / n) * (P_i - T_i).
/// Requires target rows to sum to one (true for softmax-produced targets).
NodeId lc_loss_logit_grad(Graph& graph, NodeId logits, NodeId targets, std::span<const int> anchors,
                          const ClassCounts& counts, double lambda);

/// Trajectory-matching distance ||student - end||^2 / ||start - end||^2.
double match_loss(std::span<const double> student, std::span<const double> expert_end,
                  std::span<const double> expert_start);

/// Same distance with the student given as graph nodes over one parameter
/// subset; the expert endpoints are constants.
NodeId match_loss(Graph& graph, std::span<const LayerNodes> student, const ParamSet& expert_end,
                  const ParamSet& expert_start, ParamSubset subset);

struct ExpertSegment {
    const ParamSet& start;
    const ParamSet& end;
};

/// lambda_rep * match(backbone) + lambda_cls * match(classifier).
double joint_loss(const ParamSet& student, ExpertSegment rep, ExpertSegment cls, const LossWeights& weights);

}  // namespace ltdd
