#include "ltdd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>

#include "ltdd/container.hpp"
#include "ltdd/errors.hpp"

namespace ltdd {
namespace {

constexpr std::uint64_t kInitStream = 11;
constexpr std::uint64_t kOuterStream = 12;
constexpr double kMinInnerLr = 1e-6;

void check_bounds(const SegmentBounds& b, std::size_t m, const char* branch) {
    if (!(b.t_minus <= b.t_mid && b.t_mid <= b.t_plus)) {
        throw ValidationError(std::string(branch) + " segment bounds must satisfy t_minus <= t <= t_plus");
    }
    if (m < 1) throw ValidationError(std::string(branch) + " segment length M must be >= 1");
}

std::vector<NodeId> flat_nodes(std::span<const LayerNodes> layers) {
    std::vector<NodeId> out;
    for (const LayerNodes& l : layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

std::vector<LayerNodes> pair_nodes(std::span<const NodeId> flat) {
    std::vector<LayerNodes> out;
    for (std::size_t i = 0; i + 1 < flat.size(); i += 2) out.push_back({flat[i], flat[i + 1]});
    return out;
}

std::vector<LayerNodes> sgd_layers(Graph& graph, std::span<const LayerNodes> params, std::span<const LayerNodes> grads,
                                   NodeId lr) {
    const auto p = flat_nodes(params);
    const auto g = flat_nodes(grads);
    return pair_nodes(inner_sgd_step(graph, p, g, lr));
}

void momentum_update(std::span<double> x, std::span<double> v, std::span<const double> g, double momentum, double lr) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        v[i] = momentum * v[i] + g[i];
        x[i] -= lr * v[i];
    }
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

}  // namespace

const char* to_string(TailStrategy v) {
    switch (v) {
        case TailStrategy::inherent:
            return "inherent";
        case TailStrategy::oversample:
            return "oversample";
        case TailStrategy::noise:
            return "noise";
    }
    return "?";
}

const char* to_string(DistilledDistribution v) {
    return v == DistilledDistribution::balanced ? "balanced" : "longtail";
}

const char* to_string(LabelInit v) { return v == LabelInit::classifier ? "classifier" : "representation"; }

const char* to_string(ParamSubset v) {
    switch (v) {
        case ParamSubset::whole:
            return "whole";
        case ParamSubset::backbone:
            return "backbone";
        case ParamSubset::classifier:
            return "classifier";
    }
    return "?";
}

void DistillConfig::validate() const {
    if (ipc < 1) throw ValidationError("ipc must be >= 1");
    check_bounds(rep_bounds, m_rep, "representation");
    check_bounds(cls_bounds, m_cls, "classifier");
    LossWeights{lambda_smooth, lambda_rep, lambda_cls}.validate();
    if (!(lr_images >= 0.0 && lr_labels >= 0.0 && lr_inner >= 0.0)) {
        throw ValidationError("outer step sizes must be >= 0");
    }
    if (!(inner_lr_init > 0.0)) throw ValidationError("inner_lr_init must be > 0");
    if (!(outer_momentum >= 0.0 && outer_momentum < 1.0)) throw ValidationError("outer momentum must be in [0, 1)");
    if (!std::isfinite(noise_logit)) throw ValidationError("noise_logit must be finite");
}

void DistillConfig::validate_against(std::size_t rep_epochs, std::size_t cls_epochs) const {
    validate();
    if (rep_bounds.t_plus + m_rep > rep_epochs) {
        throw ValidationError("representation segment: t_plus + M = " + std::to_string(rep_bounds.t_plus + m_rep) +
                              " exceeds trajectory length " + std::to_string(rep_epochs));
    }
    if (cls_bounds.t_plus + m_cls > cls_epochs) {
        throw ValidationError("classifier segment: t_plus + M = " + std::to_string(cls_bounds.t_plus + m_cls) +
                              " exceeds trajectory length " + std::to_string(cls_epochs));
    }
}

Tensor SyntheticSet::targets() const {
    Tensor out = label_logits;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        if (hard_labels) {
            std::fill(row.begin(), row.end(), 0.0);
            row[static_cast<std::size_t>(assigned_class[r])] = 1.0;
            continue;
        }
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double& v : row) {
            v = std::exp(v - peak);
            total += v;
        }
        for (double& v : row) v /= total;
    }
    return out;
}

std::vector<std::size_t> SyntheticSet::class_composition() const {
    std::vector<std::size_t> counts(num_classes(), 0);
    for (int c : assigned_class) ++counts[static_cast<std::size_t>(c)];
    return counts;
}

std::vector<std::size_t> synthetic_quota(std::span<const std::size_t> target_counts, std::size_t ipc,
                                         DistilledDistribution distribution) {
    const std::size_t classes = target_counts.size();
    if (distribution == DistilledDistribution::balanced) return std::vector<std::size_t>(classes, ipc);

    const std::size_t total = classes * ipc;
    const double mass = static_cast<double>(std::accumulate(target_counts.begin(), target_counts.end(), std::size_t{0}));
    std::vector<std::size_t> quota(classes);
    std::vector<std::pair<double, std::size_t>> remainder;
    for (std::size_t c = 0; c < classes; ++c) {
        const double share = static_cast<double>(total) * static_cast<double>(target_counts[c]) / mass;
        quota[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(share)));
        remainder.emplace_back(share - std::floor(share), c);
    }
    // Largest remainder first; ties to the lower class index.
    std::stable_sort(remainder.begin(), remainder.end(), [](auto& a, auto& b) { return a.first > b.first; });
    std::size_t assigned = std::accumulate(quota.begin(), quota.end(), std::size_t{0});
    for (std::size_t k = 0; assigned < total; k = (k + 1) % classes, ++assigned) ++quota[remainder[k].second];
    while (assigned > total) {
        auto largest = std::max_element(quota.begin(), quota.end());
        --*largest;
        --assigned;
    }
    return quota;
}

SyntheticSet init_synthetic(const LabeledSet& d, const Trajectory& label_expert, const DistillConfig& cfg) {
    cfg.validate();
    if (label_expert.snapshots.empty()) throw ValidationError("init_synthetic: label expert has no snapshots");
    const std::size_t classes = d.num_classes();
    const auto quota = synthetic_quota(d.class_counts(), cfg.ipc, cfg.distribution);
    Rng rng(derive_seed(cfg.seed, kInitStream));

    std::vector<double> pixels;
    std::vector<int> assigned;
    std::vector<bool> is_noise;
    for (std::size_t c = 0; c < classes; ++c) {
        auto pool = d.indices_of(static_cast<int>(c));
        if (pool.empty() && cfg.tail_strategy != TailStrategy::noise) {
            throw ValidationError("init_synthetic: class " + std::to_string(c) + " has no samples under the " +
                                  to_string(cfg.tail_strategy) + " strategy");
        }
        rng.shuffle(std::span<std::size_t>(pool));
        std::vector<std::size_t> picks(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(pool.size(), quota[c])));
        std::size_t noise_fill = 0;
        if (picks.size() < quota[c]) {
            const std::size_t deficit = quota[c] - picks.size();
            if (cfg.tail_strategy == TailStrategy::oversample) {
                for (std::size_t k = 0; k < deficit; ++k) picks.push_back(pool[rng.index(pool.size())]);
            } else if (cfg.tail_strategy == TailStrategy::noise) {
                noise_fill = deficit;
            }
        }
        for (std::size_t idx : picks) {
            auto row = d.features().row(idx);
            pixels.insert(pixels.end(), row.begin(), row.end());
            assigned.push_back(static_cast<int>(c));
            is_noise.push_back(false);
        }
        for (std::size_t k = 0; k < noise_fill; ++k) {
            for (std::size_t j = 0; j < d.dim(); ++j) pixels.push_back(rng.normal());
            assigned.push_back(static_cast<int>(c));
            is_noise.push_back(true);
        }
    }

    SyntheticSet syn;
    syn.images = Tensor::matrix(assigned.size(), d.dim(), std::move(pixels));
    syn.label_logits = predict_logits(label_expert.final_params(), syn.images);
    for (std::size_t i = 0; i < assigned.size(); ++i) {
        if (!is_noise[i]) continue;
        auto row = syn.label_logits.row(i);
        std::fill(row.begin(), row.end(), 0.0);
        row[static_cast<std::size_t>(assigned[i])] = cfg.noise_logit;
    }
    syn.assigned_class = std::move(assigned);
    syn.inner_lr = cfg.inner_lr_init;
    return syn;
}

std::size_t segment_cap(const SegmentBounds& bounds, std::size_t outer_step_index, std::size_t outer_steps) {
    if (outer_steps <= 1 || bounds.t_plus == bounds.t_mid) return bounds.t_mid;
    const std::size_t k = std::min(outer_step_index, outer_steps - 1);
    return bounds.t_mid + (bounds.t_plus - bounds.t_mid) * k / (outer_steps - 1);
}

std::pair<std::size_t, std::size_t> sample_segments(const DistillConfig& cfg, std::size_t outer_step_index, Rng& rng) {
    const std::size_t rep_cap = segment_cap(cfg.rep_bounds, outer_step_index, cfg.outer_steps);
    const std::size_t cls_cap = segment_cap(cfg.cls_bounds, outer_step_index, cfg.outer_steps);
    const std::size_t t_rep = rng.between(cfg.rep_bounds.t_minus, rep_cap);
    const std::size_t t_cls = rng.between(cfg.cls_bounds.t_minus, cls_cap);
    return {t_rep, t_cls};
}

std::vector<LayerNodes> inner_unroll_rep(Graph& graph, const ParamSet& start, const InnerInputs& in, std::size_t steps) {
    std::vector<LayerNodes> layers = as_constants(graph, start);
    for (std::size_t k = 0; k < steps; ++k) {
        const ForwardTrace trace = forward_trace(graph, layers, in.images);
        const NodeId grad_logits =
            lc_loss_logit_grad(graph, trace.logits, in.targets, in.anchors, in.counts, in.lambda_smooth);
        const auto grads = backprop_as_graph(graph, layers, trace, grad_logits);
        layers = sgd_layers(graph, layers, grads, in.inner_lr);
    }
    return layers;
}

std::vector<LayerNodes> inner_unroll_cls(Graph& graph, const ParamSet& start, const InnerInputs& in, std::size_t steps) {
    const auto all = as_constants(graph, start);
    const std::span<const LayerNodes> backbone(all.data(), all.size() - 1);
    const NodeId features = graph.relu(forward_trace(graph, backbone, in.images).logits);

    std::vector<LayerNodes> head{all.back()};
    for (std::size_t k = 0; k < steps; ++k) {
        const ForwardTrace trace = forward_trace(graph, head, features);
        const NodeId grad_logits =
            lc_loss_logit_grad(graph, trace.logits, in.targets, in.anchors, in.counts, in.lambda_smooth);
        const auto grads = backprop_as_graph(graph, head, trace, grad_logits);
        head = sgd_layers(graph, head, grads, in.inner_lr);
    }
    return head;
}

MatchingGraph build_matching_graph(const SyntheticSet& syn, ExpertWindow rep, ExpertWindow cls,
                                   const ClassCounts& counts, const DistillConfig& cfg) {
    MatchingGraph mg;
    Graph& g = mg.graph;
    mg.images = g.leaf(syn.images);
    mg.label_logits = g.leaf(syn.label_logits);
    mg.inner_lr = g.leaf(Tensor::scalar(syn.inner_lr));

    const NodeId targets = syn.hard_labels ? g.constant(syn.targets()) : g.softmax(mg.label_logits);
    const ClassCounts inner_counts = cfg.dam ? counts : ClassCounts::uniform_counts(counts.num_classes());
    const InnerInputs in{mg.images, targets, mg.inner_lr, syn.assigned_class, inner_counts, cfg.lambda_smooth};

    const auto student = inner_unroll_rep(g, rep.start, in, cfg.n_rep);
    const auto [first, last] = subset_layers(student.size(), cfg.rep_match_subset);
    mg.loss_rep = match_loss(g, std::span<const LayerNodes>(student).subspan(first, last - first), rep.end, rep.start,
                             cfg.rep_match_subset);

    const auto head = inner_unroll_cls(g, cls.start, in, cfg.n_cls);
    mg.loss_cls = match_loss(g, head, cls.end, cls.start, ParamSubset::classifier);

    if (cfg.lambda_cls == 0.0) {
        mg.total = g.scale(mg.loss_rep, cfg.lambda_rep);
    } else if (cfg.lambda_rep == 0.0) {
        mg.total = g.scale(mg.loss_cls, cfg.lambda_cls);
    } else {
        mg.total = g.add(g.scale(mg.loss_rep, cfg.lambda_rep), g.scale(mg.loss_cls, cfg.lambda_cls));
    }
    return mg;
}

OuterState OuterState::zeros_like(const SyntheticSet& syn) {
    return {Tensor::zeros(syn.images.shape()), Tensor::zeros(syn.label_logits.shape()), 0.0};
}

OuterRecord outer_step(SyntheticSet& syn, OuterState& state, const Trajectory& rep, const Trajectory& cls,
                       const ClassCounts& counts, const DistillConfig& cfg, Rng& rng, std::size_t outer_step_index) {
    OuterRecord record;
    record.outer_step = outer_step_index;

    std::optional<MatchingGraph> mg;
    for (int attempt = 0; attempt < 2 && !mg; ++attempt) {
        const auto [t_rep, t_cls] = sample_segments(cfg, outer_step_index, rng);
        record.t_rep = t_rep;
        record.t_cls = t_cls;
        try {
            mg = build_matching_graph(syn, {rep.snapshots.at(t_rep), rep.snapshots.at(t_rep + cfg.m_rep)},
                                      {cls.snapshots.at(t_cls), cls.snapshots.at(t_cls + cfg.m_cls)}, counts, cfg);
        } catch (const DegenerateSegmentError&) {
            if (attempt == 1) throw;
        }
    }

    record.loss_rep = mg->graph.value(mg->loss_rep).item();
    record.loss_cls = mg->graph.value(mg->loss_cls).item();
    record.loss_total = mg->graph.value(mg->total).item();
    if (!std::isfinite(record.loss_total)) {
        throw NumericError("distillation loss is not finite at outer step " + std::to_string(outer_step_index));
    }

    const auto grads = mg->graph.backward(mg->total);
    const Tensor& g_images = grads.at(mg->images);
    const Tensor& g_labels = grads.at(mg->label_logits);
    const double g_lr = grads.at(mg->inner_lr).item();

    momentum_update(syn.images.data(), state.images_velocity.data(), g_images.data(), cfg.outer_momentum, cfg.lr_images);
    if (!syn.hard_labels) {
        momentum_update(syn.label_logits.data(), state.labels_velocity.data(), g_labels.data(), cfg.outer_momentum,
                        cfg.lr_labels);
    }
    state.inner_lr_velocity = cfg.outer_momentum * state.inner_lr_velocity + g_lr;
    syn.inner_lr = std::max(kMinInnerLr, syn.inner_lr - cfg.lr_inner * state.inner_lr_velocity);
    record.inner_lr = syn.inner_lr;
    return record;
}

DistillResult distill(const LabeledSet& d, std::span<const Trajectory> rep_pool, std::span<const Trajectory> cls_pool,
                      const DistillConfig& cfg) {
    if (rep_pool.empty() || cls_pool.empty()) throw ValidationError("distill: expert pools must be nonempty");
    for (const Trajectory& t : rep_pool) cfg.validate_against(t.epochs(), cls_pool.front().epochs());
    for (const Trajectory& t : cls_pool) cfg.validate_against(rep_pool.front().epochs(), t.epochs());

    const ClassCounts counts{d.class_counts()};
    counts.validate();
    const Trajectory& label_expert = cfg.label_init == LabelInit::classifier ? cls_pool.front() : rep_pool.front();

    DistillResult result;
    result.synthetic = init_synthetic(d, label_expert, cfg);
    OuterState state = OuterState::zeros_like(result.synthetic);
    Rng rng(derive_seed(cfg.seed, kOuterStream));
    for (std::size_t step = 0; step < cfg.outer_steps; ++step) {
        const Trajectory& rep = rep_pool[rng.index(rep_pool.size())];
        const Trajectory& cls = cls_pool[rng.index(cls_pool.size())];
        result.trace.push_back(outer_step(result.synthetic, state, rep, cls, counts, cfg, rng, step));
    }
    return result;
}

std::string trace_csv(std::span<const OuterRecord> trace, const std::string& config_fingerprint) {
    std::string out = "outer_step,t_rep,t_cls,loss_rep,loss_cls,loss_total,inner_lr,config_fp\n";
    for (const OuterRecord& r : trace) {
        out += std::to_string(r.outer_step) + ',' + std::to_string(r.t_rep) + ',' + std::to_string(r.t_cls) + ',' +
               fmt(r.loss_rep) + ',' + fmt(r.loss_cls) + ',' + fmt(r.loss_total) + ',' + fmt(r.inner_lr) + ',' +
               config_fingerprint + '\n';
    }
    return out;
}

void save_synthetic(const std::filesystem::path& path, const SyntheticSet& syn, const std::string& fingerprint) {
    const nlohmann::json header = {
        {"stage", "synthetic"},
        {"size", syn.size()},
        {"dim", syn.images.cols()},
        {"num_classes", syn.num_classes()},
        {"assigned_class", syn.assigned_class},
        {"inner_lr", syn.inner_lr},
        {"hard_labels", syn.hard_labels},
        {"fingerprint", fingerprint},
    };
    std::vector<double> payload(syn.images.data().begin(), syn.images.data().end());
    payload.insert(payload.end(), syn.label_logits.data().begin(), syn.label_logits.data().end());
    write_container(path, header, payload);
}

SyntheticSet load_synthetic(const std::filesystem::path& path) {
    const Container c = read_container(path);
    SyntheticSet syn;
    try {
        if (c.header.at("stage").get<std::string>() != "synthetic") {
            throw FormatError(FormatError::Kind::malformed_header, "file does not hold a synthetic set");
        }
        const auto n = c.header.at("size").get<std::size_t>();
        const auto dim = c.header.at("dim").get<std::size_t>();
        const auto classes = c.header.at("num_classes").get<std::size_t>();
        if (c.payload.size() != n * dim + n * classes) {
            throw FormatError(FormatError::Kind::malformed_header, "synthetic payload size mismatch");
        }
        const auto begin = c.payload.begin();
        syn.images = Tensor::matrix(n, dim, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(n * dim)));
        syn.label_logits =
            Tensor::matrix(n, classes, std::vector<double>(begin + static_cast<std::ptrdiff_t>(n * dim), c.payload.end()));
        syn.assigned_class = c.header.at("assigned_class").get<std::vector<int>>();
        syn.inner_lr = c.header.at("inner_lr").get<double>();
        syn.hard_labels = c.header.at("hard_labels").get<bool>();
        if (syn.assigned_class.size() != n) {
            throw FormatError(FormatError::Kind::malformed_header, "assigned_class length mismatch");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatError::Kind::malformed_header, std::string("malformed synthetic header: ") + e.what());
    }
    return syn;
}

}  // namespace ltdd
