#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ltdd/datasets.hpp"
#include "ltdd/experts.hpp"
#include "ltdd/graph.hpp"
#include "ltdd/losses.hpp"
#include "ltdd/models.hpp"
#include "ltdd/rng.hpp"

namespace ltdd {

/// How a class with fewer real samples than its synthetic quota is filled.
enum class TailStrategy { inherent, oversample, noise };
/// Per-class composition of the synthetic set.
enum class DistilledDistribution { balanced, longtail };
/// Which expert produces the initial soft labels.
enum class LabelInit { classifier, representation };

const char* to_string(TailStrategy v);
const char* to_string(DistilledDistribution v);
const char* to_string(LabelInit v);
const char* to_string(ParamSubset v);

/// Admissible segment starts: t is drawn from [t_minus, cap] where cap grows
/// linearly from t_mid to t_plus over the outer steps.
struct SegmentBounds {
    std::size_t t_minus = 0;
    std::size_t t_mid = 0;
    std::size_t t_plus = 0;
};

struct DistillConfig {
    std::size_t ipc = 10;
    std::size_t outer_steps = 500;
    std::size_t n_rep = 20;
    std::size_t n_cls = 20;
    std::size_t m_rep = 2;
    std::size_t m_cls = 1;
    SegmentBounds rep_bounds{0, 10, 20};
    SegmentBounds cls_bounds{0, 1, 1};
    double lambda_smooth = 1.0;
    double lambda_rep = 1.0;
    double lambda_cls = 0.2;
    double lr_images = 1.0;
    double lr_labels = 1.0;
    double lr_inner = 1e-5;
    double inner_lr_init = 0.05;
    double outer_momentum = 0.5;
    double noise_logit = 6.0;
    TailStrategy tail_strategy = TailStrategy::oversample;
    DistilledDistribution distribution = DistilledDistribution::balanced;
    // Off = uniform counts inside the inner loss (plain soft cross-entropy).
    bool dam = true;
    LabelInit label_init = LabelInit::classifier;
    // Parameters compared against the representation expert.
    ParamSubset rep_match_subset = ParamSubset::backbone;
    std::uint64_t seed = 0;

    void validate() const;
    // Checks segment bounds against concrete trajectory lengths (in epochs).
    void validate_against(std::size_t rep_epochs, std::size_t cls_epochs) const;
};

/// Learnable images with per-sample soft-label logits and a shared inner
/// step size. assigned_class fixes each sample's class slot for good.
struct SyntheticSet {
    Tensor images;
    Tensor label_logits;
    std::vector<int> assigned_class;
    double inner_lr = 0.0;
    // Coreset selections train on one-hot targets of assigned_class.
    bool hard_labels = false;

    std::size_t size() const noexcept { return assigned_class.size(); }
    std::size_t num_classes() const { return label_logits.cols(); }
    /// softmax(label_logits) row-wise, or one-hot rows when hard_labels.
    Tensor targets() const;
    std::vector<std::size_t> class_composition() const;

    friend bool operator==(const SyntheticSet&, const SyntheticSet&) = default;
};

/// Per-class synthetic quota: IPC each when balanced; otherwise
/// proportional to the target counts (largest remainder, at least one) with
/// the same total of C * IPC.
std::vector<std::size_t> synthetic_quota(std::span<const std::size_t> target_counts, std::size_t ipc,
                                         DistilledDistribution distribution);

/// Picks real samples per class (filling deficits per the tail strategy) and
/// sets each label row to `label_expert`'s final logits on the chosen image.
SyntheticSet init_synthetic(const LabeledSet& d, const Trajectory& label_expert, const DistillConfig& cfg);

std::size_t segment_cap(const SegmentBounds& bounds, std::size_t outer_step_index, std::size_t outer_steps);

/// Independent start epochs (t_rep, t_cls) for one outer step.
std::pair<std::size_t, std::size_t> sample_segments(const DistillConfig& cfg, std::size_t outer_step_index, Rng& rng);

/// Leaves and targets shared by both inner unrolls.
struct InnerInputs {
    NodeId images;
    NodeId targets;
    NodeId inner_lr;
    std::span<const int> anchors;
    const ClassCounts& counts;
    double lambda_smooth;
};

/// N full-model gradient steps from `start` under the count-aware loss,
/// recorded so the result is differentiable w.r.t. the inner inputs.
std::vector<LayerNodes> inner_unroll_rep(Graph& graph, const ParamSet& start, const InnerInputs& in, std::size_t steps);

/// N classifier-only steps. The backbone of `start` is frozen and only
/// supplies features; returns the single classifier layer.
std::vector<LayerNodes> inner_unroll_cls(Graph& graph, const ParamSet& start, const InnerInputs& in, std::size_t steps);

/// One outer step's graph: both unrolls and the weighted matching loss.
struct MatchingGraph {
    Graph graph;
    NodeId images;
    NodeId label_logits;
    NodeId inner_lr;
    NodeId loss_rep;
    NodeId loss_cls;
    NodeId total;
};

struct ExpertWindow {
    const ParamSet& start;
    const ParamSet& end;
};

MatchingGraph build_matching_graph(const SyntheticSet& syn, ExpertWindow rep, ExpertWindow cls,
                                   const ClassCounts& counts, const DistillConfig& cfg);

struct OuterRecord {
    std::size_t outer_step = 0;
    std::size_t t_rep = 0;
    std::size_t t_cls = 0;
    double loss_rep = 0.0;
    double loss_cls = 0.0;
    double loss_total = 0.0;
    double inner_lr = 0.0;
};

/// Momentum buffers of the outer optimizer.
struct OuterState {
    Tensor images_velocity;
    Tensor labels_velocity;
    double inner_lr_velocity = 0.0;

    static OuterState zeros_like(const SyntheticSet& syn);
};

/// Samples segments, builds the matching graph, runs one reverse pass and
/// applies momentum SGD to images, label logits, and the inner step size.
OuterRecord outer_step(SyntheticSet& syn, OuterState& state, const Trajectory& rep, const Trajectory& cls,
                       const ClassCounts& counts, const DistillConfig& cfg, Rng& rng, std::size_t outer_step_index);

struct DistillResult {
    SyntheticSet synthetic;
    std::vector<OuterRecord> trace;
};

DistillResult distill(const LabeledSet& d, std::span<const Trajectory> rep_pool, std::span<const Trajectory> cls_pool,
                      const DistillConfig& cfg);

/// One row per outer step; config_fp repeats the run's config fingerprint.
std::string trace_csv(std::span<const OuterRecord> trace, const std::string& config_fingerprint = "");

void save_synthetic(const std::filesystem::path& path, const SyntheticSet& syn, const std::string& fingerprint = "");
SyntheticSet load_synthetic(const std::filesystem::path& path);

}  // namespace ltdd
