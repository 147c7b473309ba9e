#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ltdd/tensor.hpp"

namespace ltdd {

/// Features (n x d) with integer labels in [0, C) and per-class counts.
class LabeledSet {
public:
    LabeledSet() = default;
    LabeledSet(Tensor features, std::vector<int> labels, std::size_t num_classes);

    const Tensor& features() const noexcept { return features_; }
    const std::vector<int>& labels() const noexcept { return labels_; }
    const std::vector<std::size_t>& class_counts() const noexcept { return counts_; }

    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t dim() const noexcept { return features_.cols(); }
    std::size_t num_classes() const noexcept { return counts_.size(); }

    // Row indices of every sample of class c, in storage order.
    std::vector<std::size_t> indices_of(int c) const;
    LabeledSet select(std::span<const std::size_t> rows) const;
    bool is_balanced() const noexcept;

private:
    Tensor features_;
    std::vector<int> labels_;
    std::vector<std::size_t> counts_;
};

struct LongTailSpec {
    double beta = 1.0;
    std::size_t num_classes = 10;
    std::size_t n_max = 500;
    std::size_t min_count = 1;

    void validate() const;
};

/// counts[c] = max(min_count, floor(n_max * beta^(-c/C))).
std::vector<std::size_t> longtail_counts(const LongTailSpec& spec);

/// Uniform per-class sampling without replacement.
LabeledSet subsample_longtail(const LabeledSet& full, std::span<const std::size_t> counts, std::uint64_t seed);

enum class ResampleMode { oversample, undersample };

/// Equalizes class counts: undersample to the smallest class without
/// replacement, or oversample every class to the largest by keeping all of
/// its items and drawing the remainder with replacement.
LabeledSet balanced_resample(const LabeledSet& d, ResampleMode mode, std::uint64_t seed);

enum class ToyKind { gaussian_blobs, concentric_rings };

struct ToySpec {
    ToyKind kind = ToyKind::gaussian_blobs;
    std::size_t num_classes = 5;
    std::size_t dim = 16;
    double separation = 4.0;
    double noise = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Class centers for the blob generator: separation * e_c while C <= d,
/// otherwise seeded random directions of length `separation`.
Tensor toy_centers(const ToySpec& spec);

/// Draws n_per_class samples per class. Different `stream` values give
/// independent draws from the same distribution (use one stream for the
/// training pool and another for the test set).
LabeledSet gen_toy(const ToySpec& spec, std::size_t n_per_class, std::uint64_t stream = 0);

/// Reads an IDX image/label pair (magic 2051 / 2049); pixels scaled by 1/255.
LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes an IDX pair; used for fixtures and round-trip tests.
void save_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
              std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels, std::uint32_t rows,
              std::uint32_t cols);

}  // namespace ltdd
