#include "ltdd/experts.hpp"

#include <algorithm>
#include <cmath>

#include "ltdd/container.hpp"
#include "ltdd/errors.hpp"
#include "ltdd/rng.hpp"
#include "ltdd/training.hpp"

namespace ltdd {
namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;

nlohmann::json train_to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},         {"step_size", cfg.step_size},   {"momentum", cfg.momentum},
            {"weight_decay", cfg.weight_decay}, {"batch_size", cfg.batch_size}, {"seed", cfg.seed}};
}

TrainConfig train_from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.step_size = j.at("step_size").get<double>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (!(step_size > 0.0)) throw ValidationError("step size must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ValidationError("weight decay must be >= 0");
    if (batch_size < 1) throw ValidationError("batch size must be >= 1");
}

void MaxNormConfig::validate() const {
    if (!(radius > 0.0)) throw ValidationError("maxnorm radius must be > 0");
}

const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::representation:
            return "representation";
        case Stage::classifier:
            return "classifier";
        case Stage::synthetic:
            return "synthetic";
    }
    return "unknown";
}

Stage parse_stage(const std::string& name) {
    if (name == "representation") return Stage::representation;
    if (name == "classifier") return Stage::classifier;
    if (name == "synthetic") return Stage::synthetic;
    throw FormatError(FormatError::Kind::malformed_header, "unknown stage tag '" + name + "'");
}

std::vector<double> per_class_recall(const ParamSet& params, const LabeledSet& d) {
    const auto predicted = predict_labels(params, d.features());
    std::vector<double> hits(d.num_classes(), 0.0);
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == d.labels()[i]) hits[static_cast<std::size_t>(predicted[i])] += 1.0;
    }
    for (std::size_t c = 0; c < hits.size(); ++c) {
        const auto n = d.class_counts()[c];
        hits[c] = n ? hits[c] / static_cast<double>(n) : 0.0;
    }
    return hits;
}

Trajectory train_representation_expert(const LabeledSet& d, const MlpSpec& spec, const TrainConfig& cfg,
                                       const std::string& dataset_fingerprint) {
    cfg.validate();
    spec.validate();
    if (d.size() == 0) throw ValidationError("train_representation_expert: empty dataset");
    if (d.dim() != spec.input_dim() || d.num_classes() != spec.num_classes()) {
        throw ShapeError("train_representation_expert: dataset shape does not match the network spec");
    }

    Trajectory traj;
    traj.stage = Stage::representation;
    traj.spec = spec;
    traj.dataset_fingerprint = dataset_fingerprint;
    traj.seed = cfg.seed;
    traj.train = cfg;

    ParamSet params = init_params(spec, derive_seed(cfg.seed, kInitStream));
    auto velocity = zero_velocity(params);
    const MomentumSgd sgd(cfg.step_size, cfg.momentum, cfg.weight_decay);
    const Tensor targets = one_hot(d.labels(), d.num_classes());
    Rng rng(derive_seed(cfg.seed, kShuffleStream));

    std::vector<std::size_t> order(d.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    traj.snapshots.push_back(params);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto batch = std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
            const double loss = sgd.step(params, velocity, gather(d.features(), batch), gather(targets, batch));
            if (!std::isfinite(loss)) {
                throw NumericError("representation expert diverged at epoch " + std::to_string(epoch));
            }
        }
        traj.snapshots.push_back(params);
    }
    traj.final_recall = per_class_recall(params, d);
    return traj;
}

void project_rows_maxnorm(Tensor& weight, double radius) {
    for (std::size_t r = 0; r < weight.rows(); ++r) {
        auto row = weight.row(r);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > radius) {
            const double factor = radius / norm;
            for (double& v : row) v *= factor;
        }
    }
}

Trajectory train_classifier_expert(const Trajectory& rep, const LabeledSet& balanced, const TrainConfig& cfg,
                                   const MaxNormConfig& maxnorm) {
    cfg.validate();
    maxnorm.validate();
    if (rep.snapshots.empty()) throw ValidationError("train_classifier_expert: representation trajectory is empty");
    if (!balanced.is_balanced()) throw ValidationError("train_classifier_expert: fine-tuning set is not balanced");
    if (balanced.size() == 0) throw ValidationError("train_classifier_expert: empty fine-tuning set");

    const ParamSet& base = rep.final_params();
    Trajectory traj;
    traj.stage = Stage::classifier;
    traj.spec = rep.spec;
    traj.dataset_fingerprint = rep.dataset_fingerprint;
    traj.seed = cfg.seed;
    traj.train = cfg;

    const Tensor features = backbone_features(base, balanced.features());
    const Tensor targets = one_hot(balanced.labels(), balanced.num_classes());
    ParamSet head;
    head.layers.push_back(base.classifier());
    auto velocity = zero_velocity(head);
    const MomentumSgd sgd(cfg.step_size, cfg.momentum, cfg.weight_decay);
    Rng rng(derive_seed(cfg.seed, kShuffleStream));

    std::vector<std::size_t> order(balanced.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    traj.snapshots.push_back(base);
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto batch =
                std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
            const double loss = sgd.step(head, velocity, gather(features, batch), gather(targets, batch));
            if (!std::isfinite(loss)) {
                throw NumericError("classifier expert diverged at epoch " + std::to_string(epoch));
            }
            project_rows_maxnorm(head.layers[0].weight, maxnorm.radius);
        }
        ParamSet snapshot = base;
        snapshot.classifier() = head.layers[0];
        traj.snapshots.push_back(std::move(snapshot));
    }
    traj.final_recall = per_class_recall(traj.final_params(), balanced);
    return traj;
}

std::vector<std::optional<double>> confidence_profile(const ParamSet& params, const LabeledSet& d) {
    const Tensor logits = predict_logits(params, d.features());
    std::vector<double> total(d.num_classes(), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto row = logits.row(i);
        const double peak = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (double v : row) z += std::exp(v - peak);
        total[static_cast<std::size_t>(d.labels()[i])] += 1.0 / z;
    }
    std::vector<std::optional<double>> out(d.num_classes());
    for (std::size_t c = 0; c < out.size(); ++c) {
        if (d.class_counts()[c] > 0) out[c] = total[c] / static_cast<double>(d.class_counts()[c]);
    }
    return out;
}

void save_trajectory(const std::filesystem::path& path, const Trajectory& t) {
    nlohmann::json header = {
        {"stage", stage_name(t.stage)},
        {"widths", t.spec.widths},
        {"epochs", t.epochs()},
        {"snapshots", t.snapshots.size()},
        {"seed", t.seed},
        {"fingerprint", t.dataset_fingerprint},
        {"config_fingerprint", t.config_fingerprint},
        {"train", train_to_json(t.train)},
        {"final_recall", t.final_recall},
    };
    std::vector<double> payload;
    payload.reserve(t.snapshots.size() * flat_size(t.spec));
    for (const ParamSet& p : t.snapshots) {
        const auto flat = flatten(p);
        payload.insert(payload.end(), flat.begin(), flat.end());
    }
    write_container(path, header, payload);
}

Trajectory load_trajectory(const std::filesystem::path& path) {
    const Container c = read_container(path);
    Trajectory t;
    try {
        t.stage = parse_stage(c.header.at("stage").get<std::string>());
        if (t.stage == Stage::synthetic) {
            throw FormatError(FormatError::Kind::malformed_header, "file holds a synthetic set, not a trajectory");
        }
        t.spec.widths = c.header.at("widths").get<std::vector<std::size_t>>();
        t.spec.validate();
        t.seed = c.header.at("seed").get<std::uint64_t>();
        t.dataset_fingerprint = c.header.at("fingerprint").get<std::string>();
        t.config_fingerprint = c.header.at("config_fingerprint").get<std::string>();
        t.train = train_from_json(c.header.at("train"));
        t.final_recall = c.header.at("final_recall").get<std::vector<double>>();
        const auto count = c.header.at("snapshots").get<std::size_t>();
        const std::size_t per = flat_size(t.spec);
        if (c.payload.size() != count * per) {
            throw FormatError(FormatError::Kind::malformed_header, "payload size does not match snapshot count");
        }
        for (std::size_t k = 0; k < count; ++k) {
            t.snapshots.push_back(unflatten(std::span<const double>(c.payload).subspan(k * per, per), t.spec));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatError::Kind::malformed_header, std::string("malformed trajectory header: ") + e.what());
    } catch (const ValidationError& e) {
        throw FormatError(FormatError::Kind::malformed_header, std::string("malformed trajectory header: ") + e.what());
    }
    return t;
}

}  // namespace ltdd
