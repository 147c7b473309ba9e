#include "ltdd/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>

#include "ltdd/errors.hpp"
#include "ltdd/rng.hpp"

namespace ltdd {
namespace {

constexpr std::uint32_t kIdxImageMagic = 2051;
constexpr std::uint32_t kIdxLabelMagic = 2049;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(FormatError::Kind::io, "cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > bytes.size()) {
        throw FormatError(FormatError::Kind::truncated, "truncated IDX header in " + path.string());
    }
    return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
           (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char bytes[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                           static_cast<char>(v)};
    out.write(bytes, 4);
}

}  // namespace

LabeledSet::LabeledSet(Tensor features, std::vector<int> labels, std::size_t num_classes)
    : features_(std::move(features)), labels_(std::move(labels)), counts_(num_classes, 0) {
    if (num_classes < 2) throw ValidationError("labeled set: need at least 2 classes");
    if (features_.rank() != 2 || features_.cols() < 1) {
        throw ShapeError("labeled set: features must be an n x d matrix with d >= 1, got " +
                         shape_to_string(features_.shape()));
    }
    if (features_.rows() != labels_.size()) {
        throw ShapeError("labeled set: " + std::to_string(features_.rows()) + " feature rows but " +
                         std::to_string(labels_.size()) + " labels");
    }
    for (int y : labels_) {
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
            throw ValidationError("labeled set: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
        }
        ++counts_[static_cast<std::size_t>(y)];
    }
}

std::vector<std::size_t> LabeledSet::indices_of(int c) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i] == c) out.push_back(i);
    }
    return out;
}

LabeledSet LabeledSet::select(std::span<const std::size_t> rows) const {
    const std::size_t d = dim();
    std::vector<double> data;
    data.reserve(rows.size() * d);
    std::vector<int> labels;
    labels.reserve(rows.size());
    for (std::size_t r : rows) {
        auto src = features_.row(r);
        data.insert(data.end(), src.begin(), src.end());
        labels.push_back(labels_[r]);
    }
    return LabeledSet(Tensor::matrix(rows.size(), d, std::move(data)), std::move(labels), num_classes());
}

bool LabeledSet::is_balanced() const noexcept {
    return std::adjacent_find(counts_.begin(), counts_.end(), std::not_equal_to<>()) == counts_.end();
}

void LongTailSpec::validate() const {
    if (!(beta >= 1.0) || !std::isfinite(beta)) {
        throw ValidationError("beta must satisfy beta >= 1 (got " + std::to_string(beta) + ")");
    }
    if (num_classes < 2) throw ValidationError("num_classes must be >= 2");
    if (min_count < 1) throw ValidationError("min_count must be >= 1");
    if (n_max < min_count) throw ValidationError("n_max must be >= min_count");
}

std::vector<std::size_t> longtail_counts(const LongTailSpec& spec) {
    spec.validate();
    std::vector<std::size_t> counts(spec.num_classes);
    const long double n_max = static_cast<long double>(spec.n_max);
    const long double classes = static_cast<long double>(spec.num_classes);
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        const long double exact = n_max * std::pow(static_cast<long double>(spec.beta), -static_cast<long double>(c) / classes);
        // Values that are integers in exact arithmetic (e.g. 500 * 100^-1/2)
        // may land a few ulps below; snap them before flooring.
        const long double nearest = std::round(exact);
        const long double value = std::fabs(exact - nearest) <= 1e-12L * std::max(1.0L, exact) ? nearest : std::floor(exact);
        counts[c] = std::max(spec.min_count, static_cast<std::size_t>(value));
    }
    return counts;
}

LabeledSet subsample_longtail(const LabeledSet& full, std::span<const std::size_t> counts, std::uint64_t seed) {
    if (counts.size() != full.num_classes()) {
        throw ValidationError("subsample_longtail: " + std::to_string(counts.size()) + " counts for " +
                              std::to_string(full.num_classes()) + " classes");
    }
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        auto pool = full.indices_of(static_cast<int>(c));
        if (pool.size() < counts[c]) {
            throw ValidationError("subsample_longtail: class " + std::to_string(c) + " has " +
                                  std::to_string(pool.size()) + " items but " + std::to_string(counts[c]) +
                                  " were requested");
        }
        rng.shuffle(std::span<std::size_t>(pool));
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(counts[c]));
    }
    return full.select(chosen);
}

LabeledSet balanced_resample(const LabeledSet& d, ResampleMode mode, std::uint64_t seed) {
    const auto& counts = d.class_counts();
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] == 0) throw ValidationError("balanced_resample: class " + std::to_string(c) + " is empty");
    }
    const std::size_t target = mode == ResampleMode::undersample ? *std::min_element(counts.begin(), counts.end())
                                                                 : *std::max_element(counts.begin(), counts.end());
    Rng rng(seed);
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        auto pool = d.indices_of(static_cast<int>(c));
        if (mode == ResampleMode::undersample) {
            rng.shuffle(std::span<std::size_t>(pool));
            chosen.insert(chosen.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(target));
        } else {
            chosen.insert(chosen.end(), pool.begin(), pool.end());
            for (std::size_t k = pool.size(); k < target; ++k) chosen.push_back(pool[rng.index(pool.size())]);
        }
    }
    return d.select(chosen);
}

void ToySpec::validate() const {
    if (num_classes < 2) throw ValidationError("toy: num_classes must be >= 2");
    if (dim < 2) throw ValidationError("toy: feature dim must be >= 2");
    if (!(noise > 0.0)) throw ValidationError("toy: noise must be > 0");
    if (!(separation > 0.0)) throw ValidationError("toy: separation must be > 0");
}

Tensor toy_centers(const ToySpec& spec) {
    spec.validate();
    Tensor centers = Tensor::zeros({spec.num_classes, spec.dim});
    if (spec.num_classes <= spec.dim) {
        for (std::size_t c = 0; c < spec.num_classes; ++c) centers(c, c) = spec.separation;
        return centers;
    }
    Rng rng(derive_seed(spec.seed, 0xce47e5));
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        auto row = centers.row(c);
        double norm = 0.0;
        for (double& v : row) {
            v = rng.normal();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : row) v *= spec.separation / norm;
    }
    return centers;
}

LabeledSet gen_toy(const ToySpec& spec, std::size_t n_per_class, std::uint64_t stream) {
    spec.validate();
    const std::size_t n = spec.num_classes * n_per_class;
    Tensor features = Tensor::zeros({n, spec.dim});
    std::vector<int> labels(n);
    Rng rng(derive_seed(spec.seed, 1000 + stream));

    const Tensor centers = spec.kind == ToyKind::gaussian_blobs ? toy_centers(spec) : Tensor();
    std::size_t r = 0;
    for (std::size_t c = 0; c < spec.num_classes; ++c) {
        for (std::size_t k = 0; k < n_per_class; ++k, ++r) {
            auto row = features.row(r);
            labels[r] = static_cast<int>(c);
            if (spec.kind == ToyKind::gaussian_blobs) {
                auto center = centers.row(c);
                for (std::size_t j = 0; j < spec.dim; ++j) row[j] = center[j] + spec.noise * rng.normal();
            } else {
                const double radius = spec.separation * static_cast<double>(c + 1);
                const double angle = 2.0 * std::numbers::pi * rng.uniform();
                row[0] = radius * std::cos(angle);
                row[1] = radius * std::sin(angle);
                for (std::size_t j = 0; j < spec.dim; ++j) row[j] += spec.noise * rng.normal();
            }
        }
    }
    return LabeledSet(std::move(features), std::move(labels), spec.num_classes);
}

LabeledSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
    const auto images = read_file(images_path);
    const auto labels = read_file(labels_path);

    const std::uint32_t image_magic = read_be32(images, 0, images_path);
    if (image_magic != kIdxImageMagic) {
        throw FormatError(FormatError::Kind::bad_magic, "wrong magic " + std::to_string(image_magic) +
                                                            " in IDX images file " + images_path.string());
    }
    const std::uint32_t label_magic = read_be32(labels, 0, labels_path);
    if (label_magic != kIdxLabelMagic) {
        throw FormatError(FormatError::Kind::bad_magic, "wrong magic " + std::to_string(label_magic) +
                                                            " in IDX labels file " + labels_path.string());
    }

    const std::size_t n = read_be32(images, 4, images_path);
    const std::size_t rows = read_be32(images, 8, images_path);
    const std::size_t cols = read_be32(images, 12, images_path);
    const std::size_t n_labels = read_be32(labels, 4, labels_path);
    if (n != n_labels) {
        throw FormatError(FormatError::Kind::count_mismatch, "IDX count mismatch: " + std::to_string(n) +
                                                                 " images but " + std::to_string(n_labels) + " labels");
    }
    const std::size_t pixels = rows * cols;
    if (images.size() < 16 + n * pixels) {
        throw FormatError(FormatError::Kind::truncated, "truncated IDX images payload in " + images_path.string());
    }
    if (labels.size() < 8 + n) {
        throw FormatError(FormatError::Kind::truncated, "truncated IDX labels payload in " + labels_path.string());
    }

    std::vector<double> data(n * pixels);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<double>(images[16 + i]) / 255.0;
    std::vector<int> y(n);
    int max_label = 1;
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = labels[8 + i];
        max_label = std::max(max_label, y[i]);
    }
    return LabeledSet(Tensor::matrix(n, pixels, std::move(data)), std::move(y), static_cast<std::size_t>(max_label) + 1);
}

void save_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
              std::span<const std::uint8_t> pixels, std::span<const std::uint8_t> labels, std::uint32_t rows,
              std::uint32_t cols) {
    const auto n = static_cast<std::uint32_t>(labels.size());
    if (pixels.size() != static_cast<std::size_t>(n) * rows * cols) {
        throw ValidationError("save_idx: pixel count does not match labels x rows x cols");
    }
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lab(labels_path, std::ios::binary);
    if (!img || !lab) throw FormatError(FormatError::Kind::io, "cannot write IDX files");
    write_be32(img, kIdxImageMagic);
    write_be32(img, n);
    write_be32(img, rows);
    write_be32(img, cols);
    img.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
    write_be32(lab, kIdxLabelMagic);
    write_be32(lab, n);
    lab.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

}  // namespace ltdd
