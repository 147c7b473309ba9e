#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ltdd/datasets.hpp"
#include "ltdd/models.hpp"

namespace ltdd {

struct TrainConfig {
    std::size_t epochs = 40;
    double step_size = 0.05;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct MaxNormConfig {
    double radius = 1.0;

    void validate() const;
};

enum class Stage { representation, classifier, synthetic };

const char* stage_name(Stage stage);
Stage parse_stage(const std::string& name);

/// Parameter snapshots of one expert, epoch 0 included.
struct Trajectory {
    Stage stage = Stage::representation;
    MlpSpec spec;
    std::vector<ParamSet> snapshots;
    std::string dataset_fingerprint;
    std::string config_fingerprint;
    std::uint64_t seed = 0;
    TrainConfig train;
    // Per-class recall of the final snapshot on its training set.
    std::vector<double> final_recall;

    std::size_t epochs() const noexcept { return snapshots.empty() ? 0 : snapshots.size() - 1; }
    const ParamSet& final_params() const { return snapshots.back(); }
};

/// Whole-model minibatch SGD (momentum, weight decay) on hard-label
/// cross-entropy over the long-tailed set, one snapshot per epoch.
Trajectory train_representation_expert(const LabeledSet& d, const MlpSpec& spec, const TrainConfig& cfg,
                                       const std::string& dataset_fingerprint = "");

/// Fine-tunes only the classifier of `rep`'s final snapshot on a balanced
/// set, projecting each classifier weight row into the L2 ball of radius
/// maxnorm.radius after every step. Snapshot 0 is rep's final snapshot.
Trajectory train_classifier_expert(const Trajectory& rep, const LabeledSet& balanced, const TrainConfig& cfg,
                                   const MaxNormConfig& maxnorm);

/// Scales every row of `weight` whose L2 norm exceeds radius back onto the sphere.
void project_rows_maxnorm(Tensor& weight, double radius);

/// Per class: mean over that class's samples of the max softmax probability.
/// Classes without samples are absent.
std::vector<std::optional<double>> confidence_profile(const ParamSet& params, const LabeledSet& d);

std::vector<double> per_class_recall(const ParamSet& params, const LabeledSet& d);

void save_trajectory(const std::filesystem::path& path, const Trajectory& trajectory);
Trajectory load_trajectory(const std::filesystem::path& path);

}  // namespace ltdd
