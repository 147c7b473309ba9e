#include "ltdd/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "ltdd/errors.hpp"
#include "ltdd/rng.hpp"
#include "ltdd/training.hpp"

namespace ltdd {
namespace {

constexpr std::uint64_t kEvalInitStream = 21;
constexpr std::uint64_t kEvalShuffleStream = 22;
constexpr std::uint64_t kCoresetStream = 23;

std::string fixed6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Wraps a per-class row selection into a hard-label SyntheticSet.
SyntheticSet coreset_from_rows(const LabeledSet& d, const std::vector<std::size_t>& rows) {
    SyntheticSet syn;
    syn.images = gather(d.features(), rows);
    std::vector<int> assigned;
    for (std::size_t r : rows) assigned.push_back(d.labels()[r]);
    syn.label_logits = one_hot(assigned, d.num_classes());
    syn.assigned_class = std::move(assigned);
    syn.hard_labels = true;
    syn.inner_lr = EvalConfig{}.step_size;
    return syn;
}

// Adds duplicates of random members when a class is smaller than ipc.
void top_up(std::vector<std::size_t>& picks, const std::vector<std::size_t>& pool, std::size_t ipc, Rng& rng) {
    while (picks.size() < ipc) picks.push_back(pool[rng.index(pool.size())]);
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, sep)) out.push_back(cell);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string csv_header(std::size_t classes) {
    std::string out = "method,seed,acc";
    for (std::size_t c = 0; c < classes; ++c) out += ",recall_c" + std::to_string(c);
    out += ",macro_p,macro_r,macro_f1,config_fp\n";
    return out;
}

std::string csv_row(const std::string& method, const std::string& seed, double acc, std::span<const double> recall,
                    double p, double r, double f1, const std::string& fp) {
    std::string out = method + ',' + seed + ',' + fixed6(acc);
    for (double v : recall) out += ',' + fixed6(v);
    out += ',' + fixed6(p) + ',' + fixed6(r) + ',' + fixed6(f1) + ',' + fp + '\n';
    return out;
}

// Groups record indices by method in first-appearance order.
std::vector<std::pair<std::string, std::vector<std::size_t>>> by_method(std::span<const MetricsRecord> records) {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](auto& g) { return g.first == records[i].method; });
        if (it == groups.end()) {
            groups.push_back({records[i].method, {i}});
        } else {
            it->second.push_back(i);
        }
    }
    return groups;
}

struct GroupStats {
    Aggregate acc, p, r, f1;
    std::vector<Aggregate> recall;
};

GroupStats group_stats(std::span<const MetricsRecord> records, const std::vector<std::size_t>& idx) {
    auto collect = [&](auto getter) {
        std::vector<double> v;
        for (std::size_t i : idx) v.push_back(getter(records[i]));
        return aggregate(v);
    };
    GroupStats s;
    s.acc = collect([](const MetricsRecord& m) { return m.accuracy; });
    s.p = collect([](const MetricsRecord& m) { return m.macro_precision; });
    s.r = collect([](const MetricsRecord& m) { return m.macro_recall; });
    s.f1 = collect([](const MetricsRecord& m) { return m.macro_f1; });
    for (std::size_t c = 0; c < records[idx.front()].recall.size(); ++c) {
        s.recall.push_back(collect([c](const MetricsRecord& m) { return m.recall.at(c); }));
    }
    return s;
}

}  // namespace

void EvalConfig::validate() const {
    if (!(step_size > 0.0)) throw ValidationError("eval step size must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("eval momentum must be in [0, 1)");
    if (batch_size < 1) throw ValidationError("eval batch size must be >= 1");
}

ParamSet train_on_synthetic(const SyntheticSet& syn, const MlpSpec& spec, const EvalConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    spec.validate();
    if (syn.size() == 0) throw ValidationError("train_on_synthetic: empty synthetic set");
    if (syn.images.cols() != spec.input_dim() || syn.num_classes() != spec.num_classes()) {
        throw ShapeError("train_on_synthetic: synthetic set shape does not match the network spec");
    }
    ParamSet params = init_params(spec, derive_seed(seed, kEvalInitStream));
    auto velocity = zero_velocity(params);
    const MomentumSgd sgd(cfg.step_size, cfg.momentum, 0.0);
    const Tensor targets = syn.targets();
    Rng rng(derive_seed(seed, kEvalShuffleStream));

    std::vector<std::size_t> order(syn.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const auto batch =
                std::span<const std::size_t>(order).subspan(start, std::min(cfg.batch_size, order.size() - start));
            const double loss = sgd.step(params, velocity, gather(syn.images, batch), gather(targets, batch));
            if (!std::isfinite(loss)) {
                throw NumericError("evaluation training diverged at epoch " + std::to_string(epoch));
            }
        }
    }
    return params;
}

MetricsRecord metrics_from_predictions(std::span<const int> predicted, std::span<const int> truth,
                                       std::size_t num_classes) {
    if (predicted.size() != truth.size()) throw ShapeError("metrics: prediction and label counts differ");
    std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const auto p = static_cast<std::size_t>(predicted[i]);
        const auto t = static_cast<std::size_t>(truth[i]);
        if (p == t) {
            ++correct;
            tp[t] += 1.0;
        } else {
            fp[p] += 1.0;
            fn[t] += 1.0;
        }
    }
    MetricsRecord m;
    m.accuracy = truth.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(truth.size());
    m.recall.resize(num_classes);
    double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double precision = tp[c] + fp[c] > 0.0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
        const double recall = tp[c] + fn[c] > 0.0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
        const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        m.recall[c] = recall;
        sum_p += precision;
        sum_r += recall;
        sum_f1 += f1;
    }
    const double classes = static_cast<double>(num_classes);
    m.macro_precision = sum_p / classes;
    m.macro_recall = sum_r / classes;
    m.macro_f1 = sum_f1 / classes;
    return m;
}

MetricsRecord evaluate(const ParamSet& params, const LabeledSet& test) {
    const auto predicted = predict_labels(params, test.features());
    MetricsRecord m = metrics_from_predictions(predicted, test.labels(), test.num_classes());
    m.classifier_row_norms = weight_norm_profile(params);
    return m;
}

SyntheticSet random_coreset(const LabeledSet& d, std::size_t ipc, std::uint64_t seed) {
    if (ipc < 1) throw ValidationError("random_coreset: ipc must be >= 1");
    Rng rng(derive_seed(seed, kCoresetStream));
    std::vector<std::size_t> rows;
    for (std::size_t c = 0; c < d.num_classes(); ++c) {
        auto pool = d.indices_of(static_cast<int>(c));
        if (pool.empty()) throw ValidationError("random_coreset: class " + std::to_string(c) + " is empty");
        rng.shuffle(std::span<std::size_t>(pool));
        std::vector<std::size_t> picks(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(ipc, pool.size())));
        top_up(picks, pool, ipc, rng);
        rows.insert(rows.end(), picks.begin(), picks.end());
    }
    return coreset_from_rows(d, rows);
}

std::vector<std::size_t> kcenter_greedy(const Tensor& points, std::size_t k, std::size_t first) {
    const std::size_t n = points.rows();
    k = std::min(k, n);
    std::vector<std::size_t> centers;
    if (k == 0) return centers;
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t next = first;
    while (centers.size() < k) {
        centers.push_back(next);
        auto c = points.row(next);
        for (std::size_t i = 0; i < n; ++i) {
            auto p = points.row(i);
            double dist = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) dist += (p[j] - c[j]) * (p[j] - c[j]);
            nearest[i] = std::min(nearest[i], dist);
        }
        next = static_cast<std::size_t>(std::max_element(nearest.begin(), nearest.end()) - nearest.begin());
    }
    return centers;
}

SyntheticSet kcenter_coreset(const LabeledSet& d, std::size_t ipc, std::uint64_t seed) {
    if (ipc < 1) throw ValidationError("kcenter_coreset: ipc must be >= 1");
    Rng rng(derive_seed(seed, kCoresetStream));
    std::vector<std::size_t> rows;
    for (std::size_t c = 0; c < d.num_classes(); ++c) {
        const auto pool = d.indices_of(static_cast<int>(c));
        if (pool.empty()) throw ValidationError("kcenter_coreset: class " + std::to_string(c) + " is empty");
        const Tensor points = gather(d.features(), pool);
        std::vector<std::size_t> picks;
        for (std::size_t local : kcenter_greedy(points, ipc, rng.index(pool.size()))) picks.push_back(pool[local]);
        top_up(picks, pool, ipc, rng);
        rows.insert(rows.end(), picks.begin(), picks.end());
    }
    return coreset_from_rows(d, rows);
}

std::vector<double> weight_norm_profile(const ParamSet& params) {
    const Tensor& w = params.classifier().weight;
    std::vector<double> norms(w.rows());
    for (std::size_t r = 0; r < w.rows(); ++r) {
        double total = 0.0;
        for (double v : w.row(r)) total += v * v;
        norms[r] = std::sqrt(total);
    }
    return norms;
}

Aggregate aggregate(std::span<const double> values) {
    Aggregate a;
    if (values.empty()) return a;
    double total = 0.0;
    for (double v : values) total += v;
    a.mean = total / static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - a.mean) * (v - a.mean);
    a.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return a;
}

std::string metrics_csv(std::span<const MetricsRecord> records) {
    if (records.empty()) return csv_header(0);
    std::string out = csv_header(records.front().recall.size());
    for (const MetricsRecord& m : records) {
        out += csv_row(m.method, std::to_string(m.seed), m.accuracy, m.recall, m.macro_precision, m.macro_recall,
                       m.macro_f1, m.config_fingerprint);
    }
    return out;
}

std::vector<MetricsRecord> parse_metrics_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) return {};
    const auto header = split(line, ',');
    if (header.size() < 7 || header[0] != "method") throw ValidationError("metrics CSV: unexpected header");
    const std::size_t classes = header.size() - 7;
    std::vector<MetricsRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) throw ValidationError("metrics CSV: row has wrong column count");
        if (cells[1] == "mean" || cells[1] == "std") continue;
        MetricsRecord m;
        m.method = cells[0];
        m.seed = std::stoull(cells[1]);
        m.accuracy = std::stod(cells[2]);
        for (std::size_t c = 0; c < classes; ++c) m.recall.push_back(std::stod(cells[3 + c]));
        m.macro_precision = std::stod(cells[3 + classes]);
        m.macro_recall = std::stod(cells[4 + classes]);
        m.macro_f1 = std::stod(cells[5 + classes]);
        m.config_fingerprint = cells[6 + classes];
        out.push_back(std::move(m));
    }
    return out;
}

std::string compare_report_csv(std::span<const MetricsRecord> records) {
    if (records.empty()) throw ValidationError("compare_report: no records");
    std::string out = metrics_csv(records);
    for (const auto& [method, idx] : by_method(records)) {
        const GroupStats s = group_stats(records, idx);
        std::vector<double> means, stds;
        for (const Aggregate& a : s.recall) {
            means.push_back(a.mean);
            stds.push_back(a.stddev);
        }
        out += csv_row(method, "mean", s.acc.mean, means, s.p.mean, s.r.mean, s.f1.mean, "");
        out += csv_row(method, "std", s.acc.stddev, stds, s.p.stddev, s.r.stddev, s.f1.stddev, "");
    }
    return out;
}

std::string compare_report_text(std::span<const MetricsRecord> records) {
    if (records.empty()) throw ValidationError("compare_report: no records");
    std::ostringstream out;
    out << "# std uses the population convention (divide by n)\n"
        << "# precision of a class that is never predicted counts as 0\n";
    out << std::left << std::setw(24) << "method" << std::setw(10) << "seed" << std::setw(24) << "acc" << std::setw(24)
        << "macro_p" << std::setw(24) << "macro_r" << std::setw(24) << "macro_f1" << '\n';
    auto cell = [](double mean, const Aggregate* agg) {
        return agg ? fixed6(agg->mean) + " +/- " + fixed6(agg->stddev) : fixed6(mean);
    };
    for (const MetricsRecord& m : records) {
        out << std::setw(24) << m.method << std::setw(10) << m.seed << std::setw(24) << cell(m.accuracy, nullptr)
            << std::setw(24) << cell(m.macro_precision, nullptr) << std::setw(24) << cell(m.macro_recall, nullptr)
            << std::setw(24) << cell(m.macro_f1, nullptr) << '\n';
    }
    for (const auto& [method, idx] : by_method(records)) {
        const GroupStats s = group_stats(records, idx);
        out << std::setw(24) << method << std::setw(10) << "mean+/-sd" << std::setw(24) << cell(0, &s.acc)
            << std::setw(24) << cell(0, &s.p) << std::setw(24) << cell(0, &s.r) << std::setw(24) << cell(0, &s.f1)
            << '\n';
    }
    return out.str();
}

}  // namespace ltdd
