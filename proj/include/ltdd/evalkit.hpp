#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ltdd/datasets.hpp"
#include "ltdd/distill.hpp"
#include "ltdd/models.hpp"

namespace ltdd {

struct EvalConfig {
    std::size_t epochs = 300;
    double step_size = 0.01;
    double momentum = 0.9;
    std::size_t batch_size = 256;

    void validate() const;
};

struct MetricsRecord {
    std::string method;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
    std::vector<double> recall;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::vector<double> classifier_row_norms;
    std::string config_fingerprint;
};

/// Fresh network trained with SGD on the synthetic set's targets
/// (soft labels, or one-hot for coreset selections).
ParamSet train_on_synthetic(const SyntheticSet& syn, const MlpSpec& spec, const EvalConfig& cfg, std::uint64_t seed);

/// Argmax predictions (ties to the lower class). Precision of a class that
/// is never predicted counts as 0.
MetricsRecord evaluate(const ParamSet& params, const LabeledSet& test);

/// Same metrics from explicit predictions.
MetricsRecord metrics_from_predictions(std::span<const int> predicted, std::span<const int> truth,
                                       std::size_t num_classes);

/// Uniform per-class selection without replacement; classes smaller than
/// IPC are topped up by duplicating random members.
SyntheticSet random_coreset(const LabeledSet& d, std::size_t ipc, std::uint64_t seed);

/// Greedy farthest-point selection per class in raw feature space. The
/// first center is uniform; deficits are handled as in random_coreset.
SyntheticSet kcenter_coreset(const LabeledSet& d, std::size_t ipc, std::uint64_t seed);

/// Farthest-point order within one point set starting from `first`.
std::vector<std::size_t> kcenter_greedy(const Tensor& points, std::size_t k, std::size_t first);

std::vector<double> weight_norm_profile(const ParamSet& params);

/// Tab-aligned text table: one row per record plus a mean +/- std row per method.
std::string compare_report_text(std::span<const MetricsRecord> records);
/// CSV: header, one row per record, then per-method "mean" and "std" rows.
std::string compare_report_csv(std::span<const MetricsRecord> records);

/// Metrics CSV for one or more records:
/// method,seed,acc,recall_c0..recall_c{C-1},macro_p,macro_r,macro_f1,config_fp
std::string metrics_csv(std::span<const MetricsRecord> records);
std::vector<MetricsRecord> parse_metrics_csv(const std::string& text);

struct Aggregate {
    double mean = 0.0;
    double stddev = 0.0;  // population convention
};

Aggregate aggregate(std::span<const double> values);

}  // namespace ltdd
