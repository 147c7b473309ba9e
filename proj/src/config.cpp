#include "ltdd/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace ltdd {
namespace {

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct KeyDef {
    const char* name;
    const char* constraint;
    Setter set;
    Getter get;
};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return "";
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

[[noreturn]] void type_error(const std::string& key, const char* expected, const std::string& value) {
    throw ConfigError("key '" + key + "': expected " + expected + ", got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    if (value.empty() || value.find_first_not_of("0123456789") != std::string::npos) {
        type_error(key, "a non-negative integer", value);
    }
    errno = 0;
    const unsigned long long v = std::strtoull(value.c_str(), nullptr, 10);
    if (errno == ERANGE) type_error(key, "an integer in range", value);
    return v;
}

double parse_double(const std::string& key, const std::string& value) {
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || errno == ERANGE) type_error(key, "a number", value);
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    type_error(key, "true or false", value);
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <class Enum>
Enum parse_enum(const std::string& key, const std::string& value, std::initializer_list<std::pair<const char*, Enum>> options,
                const char* expected) {
    for (const auto& [name, v] : options) {
        if (value == name) return v;
    }
    type_error(key, expected, value);
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream in(value);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(parse_u64(key, trim(item)));
    if (out.empty()) type_error(key, "a comma-separated list of integers", value);
    return out;
}

#define LTDD_SIZE(key, field, constraint)                                                          \
    KeyDef{key, constraint, [](RunConfig& c, const std::string& v) { c.field = parse_u64(key, v); }, \
           [](const RunConfig& c) { return std::to_string(c.field); }}
#define LTDD_DOUBLE(key, field, constraint)                                                           \
    KeyDef{key, constraint, [](RunConfig& c, const std::string& v) { c.field = parse_double(key, v); }, \
           [](const RunConfig& c) { return fmt_double(c.field); }}
#define LTDD_STRING(key, field, constraint)                                              \
    KeyDef{key, constraint, [](RunConfig& c, const std::string& v) { c.field = v; }, \
           [](const RunConfig& c) { return c.field; }}

const std::vector<KeyDef>& registry() {
    static const std::vector<KeyDef> keys = {
        KeyDef{"data_kind", "blobs | rings",
               [](RunConfig& c, const std::string& v) {
                   c.toy.kind = parse_enum<ToyKind>("data_kind", v,
                                                    {{"blobs", ToyKind::gaussian_blobs}, {"rings", ToyKind::concentric_rings}},
                                                    "blobs or rings");
               },
               [](const RunConfig& c) { return std::string(c.toy.kind == ToyKind::gaussian_blobs ? "blobs" : "rings"); }},
        KeyDef{"num_classes", ">= 2",
               [](RunConfig& c, const std::string& v) {
                   c.toy.num_classes = parse_u64("num_classes", v);
                   c.longtail.num_classes = c.toy.num_classes;
               },
               [](const RunConfig& c) { return std::to_string(c.toy.num_classes); }},
        LTDD_SIZE("dim", toy.dim, ">= 2"),
        LTDD_DOUBLE("separation", toy.separation, "> 0"),
        LTDD_DOUBLE("noise", toy.noise, "> 0"),
        LTDD_DOUBLE("beta", longtail.beta, "beta >= 1"),
        LTDD_SIZE("n_max", longtail.n_max, ">= min_count"),
        LTDD_SIZE("min_count", longtail.min_count, ">= 1"),
        LTDD_SIZE("n_test", n_test, ">= 1 (balanced test samples per class)"),
        LTDD_STRING("idx_train_images", idx_train_images, "path or empty (empty: toy data)"),
        LTDD_STRING("idx_train_labels", idx_train_labels, "path, required with idx_train_images"),
        LTDD_STRING("idx_test_images", idx_test_images, "path, required with idx_train_images"),
        LTDD_STRING("idx_test_labels", idx_test_labels, "path, required with idx_train_images"),
        KeyDef{"hidden", "comma list of widths, each >= 1",
               [](RunConfig& c, const std::string& v) { c.hidden = parse_list("hidden", v); },
               [](const RunConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.hidden.size(); ++i) out += (i ? "," : "") + std::to_string(c.hidden[i]);
                   return out;
               }},
        LTDD_SIZE("num_experts", num_experts, ">= 1"),
        LTDD_SIZE("rep_epochs", rep_train.epochs, ">= t_plus_rep + m_rep"),
        LTDD_DOUBLE("rep_step_size", rep_train.step_size, "> 0"),
        LTDD_DOUBLE("rep_momentum", rep_train.momentum, "in [0, 1)"),
        LTDD_DOUBLE("rep_weight_decay", rep_train.weight_decay, ">= 0"),
        LTDD_SIZE("rep_batch_size", rep_train.batch_size, ">= 1"),
        LTDD_SIZE("cls_epochs", cls_train.epochs, ">= t_plus_cls + m_cls"),
        LTDD_DOUBLE("cls_step_size", cls_train.step_size, "> 0"),
        LTDD_DOUBLE("cls_momentum", cls_train.momentum, "in [0, 1)"),
        LTDD_DOUBLE("cls_weight_decay", cls_train.weight_decay, ">= 0"),
        LTDD_SIZE("cls_batch_size", cls_train.batch_size, ">= 1"),
        LTDD_DOUBLE("maxnorm_radius", maxnorm.radius, "> 0"),
        KeyDef{"cls_resample", "oversample | undersample",
               [](RunConfig& c, const std::string& v) {
                   c.cls_resample = parse_enum<ResampleMode>(
                       "cls_resample", v, {{"oversample", ResampleMode::oversample}, {"undersample", ResampleMode::undersample}},
                       "oversample or undersample");
               },
               [](const RunConfig& c) {
                   return std::string(c.cls_resample == ResampleMode::oversample ? "oversample" : "undersample");
               }},
        LTDD_SIZE("ipc", distill.ipc, ">= 1"),
        LTDD_SIZE("outer_steps", distill.outer_steps, ">= 0"),
        LTDD_SIZE("n_rep", distill.n_rep, ">= 0 (inner steps, representation branch)"),
        LTDD_SIZE("n_cls", distill.n_cls, ">= 0 (inner steps, classifier branch)"),
        LTDD_SIZE("m_rep", distill.m_rep, ">= 1"),
        LTDD_SIZE("m_cls", distill.m_cls, ">= 1"),
        LTDD_SIZE("t_minus_rep", distill.rep_bounds.t_minus, "<= t_rep"),
        LTDD_SIZE("t_rep", distill.rep_bounds.t_mid, "<= t_plus_rep"),
        LTDD_SIZE("t_plus_rep", distill.rep_bounds.t_plus, "t_plus_rep + m_rep <= rep_epochs"),
        LTDD_SIZE("t_minus_cls", distill.cls_bounds.t_minus, "<= t_cls"),
        LTDD_SIZE("t_cls", distill.cls_bounds.t_mid, "<= t_plus_cls"),
        LTDD_SIZE("t_plus_cls", distill.cls_bounds.t_plus, "t_plus_cls + m_cls <= cls_epochs"),
        LTDD_DOUBLE("lambda", distill.lambda_smooth, ">= 0 (count offset strength)"),
        LTDD_DOUBLE("lambda_rep", distill.lambda_rep, ">= 0, lambda_rep + lambda_cls > 0"),
        LTDD_DOUBLE("lambda_cls", distill.lambda_cls, ">= 0, lambda_rep + lambda_cls > 0"),
        LTDD_DOUBLE("lr_images", distill.lr_images, ">= 0"),
        LTDD_DOUBLE("lr_labels", distill.lr_labels, ">= 0"),
        LTDD_DOUBLE("lr_inner", distill.lr_inner, ">= 0"),
        LTDD_DOUBLE("inner_lr_init", distill.inner_lr_init, "> 0"),
        LTDD_DOUBLE("outer_momentum", distill.outer_momentum, "in [0, 1)"),
        LTDD_DOUBLE("noise_logit", distill.noise_logit, "finite"),
        KeyDef{"tail_strategy", "inherent | oversample | noise",
               [](RunConfig& c, const std::string& v) {
                   c.distill.tail_strategy = parse_enum<TailStrategy>(
                       "tail_strategy", v,
                       {{"inherent", TailStrategy::inherent},
                        {"oversample", TailStrategy::oversample},
                        {"noise", TailStrategy::noise}},
                       "inherent, oversample, or noise");
               },
               [](const RunConfig& c) { return std::string(to_string(c.distill.tail_strategy)); }},
        KeyDef{"distilled_distribution", "balanced | longtail",
               [](RunConfig& c, const std::string& v) {
                   c.distill.distribution = parse_enum<DistilledDistribution>(
                       "distilled_distribution", v,
                       {{"balanced", DistilledDistribution::balanced}, {"longtail", DistilledDistribution::longtail}},
                       "balanced or longtail");
               },
               [](const RunConfig& c) { return std::string(to_string(c.distill.distribution)); }},
        KeyDef{"dam", "true | false (false: uniform counts in the inner loss)",
               [](RunConfig& c, const std::string& v) { c.distill.dam = parse_bool("dam", v); },
               [](const RunConfig& c) { return std::string(c.distill.dam ? "true" : "false"); }},
        KeyDef{"label_init", "classifier | representation",
               [](RunConfig& c, const std::string& v) {
                   c.distill.label_init = parse_enum<LabelInit>(
                       "label_init", v,
                       {{"classifier", LabelInit::classifier}, {"representation", LabelInit::representation}},
                       "classifier or representation");
               },
               [](const RunConfig& c) { return std::string(to_string(c.distill.label_init)); }},
        KeyDef{"rep_match_subset", "backbone | whole",
               [](RunConfig& c, const std::string& v) {
                   c.distill.rep_match_subset = parse_enum<ParamSubset>(
                       "rep_match_subset", v, {{"backbone", ParamSubset::backbone}, {"whole", ParamSubset::whole}},
                       "backbone or whole");
               },
               [](const RunConfig& c) { return std::string(to_string(c.distill.rep_match_subset)); }},
        LTDD_SIZE("eval_epochs", eval.epochs, ">= 0"),
        LTDD_DOUBLE("eval_step_size", eval.step_size, "> 0"),
        LTDD_DOUBLE("eval_momentum", eval.momentum, "in [0, 1)"),
        LTDD_SIZE("eval_batch_size", eval.batch_size, ">= 1"),
        LTDD_STRING("method", method, "nonempty tag without commas"),
        KeyDef{"baseline", "random | kcenter | full",
               [](RunConfig& c, const std::string& v) {
                   c.baseline = parse_enum<BaselineKind>(
                       "baseline", v,
                       {{"random", BaselineKind::random}, {"kcenter", BaselineKind::kcenter}, {"full", BaselineKind::full}},
                       "random, kcenter, or full");
               },
               [](const RunConfig& c) { return std::string(to_string(c.baseline)); }},
        LTDD_SIZE("seed", seed, "any non-negative integer"),
        LTDD_STRING("out_dir", out_dir, "writable directory (LT_DISTILL_OUT overrides)"),
    };
    return keys;
}

#undef LTDD_SIZE
#undef LTDD_DOUBLE
#undef LTDD_STRING

const KeyDef& find_key(const std::string& key) {
    for (const KeyDef& def : registry()) {
        if (key == def.name) return def;
    }
    throw ConfigError("unknown config key '" + key + "'");
}

// Prefixes module validation messages so they name the config section.
template <class F>
void validate_section(const char* section, F&& check) {
    try {
        check();
    } catch (const ValidationError& e) {
        throw ValidationError(std::string(section) + ": " + e.what());
    }
}

}  // namespace

const char* to_string(BaselineKind v) {
    switch (v) {
        case BaselineKind::random:
            return "random";
        case BaselineKind::kcenter:
            return "kcenter";
        case BaselineKind::full:
            return "full";
    }
    return "?";
}

MlpSpec RunConfig::mlp_spec(std::size_t input_dim, std::size_t num_classes) const {
    MlpSpec spec;
    spec.widths.push_back(input_dim);
    spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
    spec.widths.push_back(num_classes);
    return spec;
}

void RunConfig::validate() const {
    longtail.validate();
    if (!uses_idx()) {
        toy.validate();
    } else if (idx_train_labels.empty() || idx_test_images.empty() || idx_test_labels.empty()) {
        throw ValidationError("idx_train_images is set, so idx_train_labels, idx_test_images, idx_test_labels are required");
    }
    if (n_test < 1) throw ValidationError("n_test must be >= 1");
    if (num_experts < 1) throw ValidationError("num_experts must be >= 1");
    if (hidden.empty()) throw ValidationError("hidden must list at least one width");
    for (std::size_t w : hidden) {
        if (w == 0) throw ValidationError("hidden widths must be >= 1");
    }
    validate_section("rep expert", [&] { rep_train.validate(); });
    validate_section("cls expert", [&] { cls_train.validate(); });
    maxnorm.validate();
    distill.validate();
    distill.validate_against(rep_train.epochs, cls_train.epochs);
    validate_section("eval", [&] { eval.validate(); });
    if (method.empty() || method.find(',') != std::string::npos) {
        throw ValidationError("method must be a nonempty tag without commas");
    }
}

std::vector<ConfigKey> config_keys() {
    const RunConfig defaults;
    std::vector<ConfigKey> out;
    for (const KeyDef& def : registry()) out.push_back({def.name, def.get(defaults), def.constraint});
    return out;
}

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    find_key(key).set(cfg, value);
}

void apply_config_text(RunConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        }
        apply_override(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    RunConfig cfg;
    apply_config_text(cfg, buf.str(), path.string());
    return cfg;
}

std::string canonical_text(const RunConfig& cfg) {
    std::string out;
    for (const KeyDef& def : registry()) {
        if (std::string(def.name) == "out_dir") continue;
        out += std::string(def.name) + '=' + def.get(cfg) + '\n';
    }
    return out;
}

std::string fnv1a_hex(const void* data, std::size_t size) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string config_fingerprint(const RunConfig& cfg) {
    const std::string text = canonical_text(cfg);
    return fnv1a_hex(text.data(), text.size());
}

std::string help_text() {
    std::ostringstream out;
    out << "usage: ltdd <command> [config.conf] [--key=value ...]\n"
        << "commands: gen-data train-experts distill eval baseline diag report\n"
        << "  report also accepts metrics CSV paths as extra positional arguments\n"
        << "exit codes: 0 ok, 1 validation failure, 2 runtime failure\n"
        << "environment: LT_DISTILL_OUT overrides out_dir\n\n"
        << "config keys (key = value, '#' starts a comment):\n";
    for (const ConfigKey& k : config_keys()) {
        char line[256];
        std::snprintf(line, sizeof line, "  %-24s default %-14s %s\n", k.name.c_str(), k.default_value.c_str(),
                      k.constraint.c_str());
        out << line;
    }
    return out.str();
}

}  // namespace ltdd
