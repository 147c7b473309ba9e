#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ltdd/datasets.hpp"
#include "ltdd/distill.hpp"
#include "ltdd/errors.hpp"
#include "ltdd/evalkit.hpp"
#include "ltdd/experts.hpp"
#include "ltdd/models.hpp"

namespace ltdd {

/// Unknown key, unparsable value, or unreadable config file.
class ConfigError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

enum class BaselineKind { random, kcenter, full };

/// Flat run configuration. Every field is reachable as a `key = value`
/// line; see config_keys() for names, defaults, and constraints.
struct RunConfig {
    ToySpec toy;
    LongTailSpec longtail{50.0, 5, 500, 1};
    std::size_t n_test = 200;
    std::string idx_train_images;
    std::string idx_train_labels;
    std::string idx_test_images;
    std::string idx_test_labels;

    std::vector<std::size_t> hidden{32, 32};

    std::size_t num_experts = 5;
    TrainConfig rep_train{40, 0.05, 0.9, 5e-4, 64, 0};
    TrainConfig cls_train{10, 0.05, 0.9, 5e-4, 64, 0};
    MaxNormConfig maxnorm;
    ResampleMode cls_resample = ResampleMode::undersample;

    DistillConfig distill;
    EvalConfig eval;
    std::string method = "ltdd";
    BaselineKind baseline = BaselineKind::random;

    std::uint64_t seed = 0;
    std::string out_dir = "out";

    bool uses_idx() const noexcept { return !idx_train_images.empty(); }
    /// Network widths: input dim, hidden widths, class count.
    MlpSpec mlp_spec(std::size_t input_dim, std::size_t num_classes) const;
    /// Runs every module-level validation plus cross-field checks.
    void validate() const;
};

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string constraint;
};

/// Every recognized key in canonical order.
std::vector<ConfigKey> config_keys();

/// Applies `key = value` lines (blank lines and `#` comments ignored).
void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin = "config");
void apply_override(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig load_config(const std::filesystem::path& path);

/// All keys except out_dir, one `key=value` per line with normalized values.
std::string canonical_text(const RunConfig& cfg);
/// 16 hex digits of FNV-1a 64 over canonical_text.
std::string config_fingerprint(const RunConfig& cfg);
std::string fnv1a_hex(const void* data, std::size_t size);

std::string help_text();

const char* to_string(BaselineKind v);

}  // namespace ltdd
