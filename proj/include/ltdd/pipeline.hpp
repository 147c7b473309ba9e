#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ltdd/config.hpp"

namespace ltdd {

// Seed streams derived from RunConfig::seed.
inline constexpr std::uint64_t kDataStream = 101;
inline constexpr std::uint64_t kSubsampleStream = 102;
inline constexpr std::uint64_t kRepExpertStream = 200;
inline constexpr std::uint64_t kResampleStream = 300;
inline constexpr std::uint64_t kClsExpertStream = 400;
inline constexpr std::uint64_t kDistillStream = 500;
inline constexpr std::uint64_t kEvalStream = 600;
inline constexpr std::uint64_t kCoresetSeedStream = 700;

struct DataBundle {
    LabeledSet train;          // long-tailed
    LabeledSet test;           // balanced
    LabeledSet test_longtail;  // test resampled with the training profile
    std::string fingerprint;   // of train
};

std::string dataset_fingerprint(const LabeledSet& d);

/// Toy or IDX data per the config, with the long-tail subsample applied.
DataBundle build_data(const RunConfig& cfg);

struct ExpertPools {
    std::vector<Trajectory> rep;
    std::vector<Trajectory> cls;
};

ExpertPools train_expert_pools(const RunConfig& cfg, const DataBundle& data);

std::filesystem::path expert_path(const std::filesystem::path& out, Stage stage, std::size_t index);
void save_expert_pools(const std::filesystem::path& out, const ExpertPools& pools);
/// Loads num_experts of each kind and checks they were trained on `data`.
ExpertPools load_expert_pools(const std::filesystem::path& out, const RunConfig& cfg, const DataBundle& data);

DistillConfig seeded_distill_config(const RunConfig& cfg);
DistillResult run_distill(const RunConfig& cfg, const DataBundle& data, const ExpertPools& pools);

/// Trains a fresh network on `syn` and scores it on `test`.
MetricsRecord run_eval(const RunConfig& cfg, const SyntheticSet& syn, const LabeledSet& test, const std::string& method);

/// Random or k-center selection at the config's IPC, or the whole
/// long-tailed training set with hard labels.
SyntheticSet baseline_set(const RunConfig& cfg, const DataBundle& data);

/// Per class: training count, recall, mean confidence, and classifier row
/// norm of the first representation and classifier experts.
std::string diag_csv(const ExpertPools& pools, const DataBundle& data, const std::string& config_fingerprint);

}  // namespace ltdd
