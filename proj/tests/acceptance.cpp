// Acceptance harness: one PASS/FAIL line per criterion, exit 1 if any fails.
// A criterion that exceeds its runtime limit fails even if its checks pass.

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "ltdd/container.hpp"
#include "ltdd/errors.hpp"
#include "ltdd/pipeline.hpp"
#include "ltdd/training.hpp"

using namespace ltdd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + what;
        }
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size()); }

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = 0.5 * double(i + j);
        i = j + 1;
    }
    return r;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const auto ra = ranks(a), rb = ranks(b);
    const double ma = mean(ra), mb = mean(rb);
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(da * db);
}

// Head = first floor(C/2) classes, tail = last floor(C/2).
double head_mean(const std::vector<double>& v) {
    const std::size_t h = v.size() / 2;
    return std::accumulate(v.begin(), v.begin() + std::ptrdiff_t(h), 0.0) / double(h);
}
double tail_mean(const std::vector<double>& v) {
    const std::size_t h = v.size() / 2;
    return std::accumulate(v.end() - std::ptrdiff_t(h), v.end(), 0.0) / double(h);
}

std::vector<double> present(const std::vector<std::optional<double>>& v) {
    std::vector<double> out;
    for (const auto& x : v) out.push_back(x.value_or(0.0));
    return out;
}

RunConfig toy_config(std::uint64_t seed) {
    RunConfig cfg = load_config(LTDD_TOY_CONF);
    cfg.seed = seed;
    return cfg;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

// ---------------------------------------------------------------------------

Outcome sampler_exactness() {
    // floor(500 * 100^(-c/10)) = k  iff  k^10 * 100^c <= 500^10 < (k+1)^10 * 100^c,
    // checked in exact integer arithmetic.
    using boost::multiprecision::cpp_int;
    Outcome o;
    const auto got = longtail_counts(LongTailSpec{100.0, 10, 500, 1});
    const cpp_int top = boost::multiprecision::pow(cpp_int(500), 10);
    for (unsigned c = 0; c < 10; ++c) {
        const cpp_int scale = boost::multiprecision::pow(cpp_int(100), c);
        const cpp_int k = got[c];
        const bool exact = boost::multiprecision::pow(k, 10) * scale <= top &&
                           top < boost::multiprecision::pow(k + 1, 10) * scale;
        o.require(exact, "class " + std::to_string(c) + ": " + std::to_string(got[c]) + " is not the exact floor");
    }
    const std::vector<std::size_t> frozen{500, 315, 199, 125, 79, 50, 31, 19, 12, 7};
    o.require(got == frozen, "frozen profile mismatch");
    const auto flat = longtail_counts(LongTailSpec{1.0, 10, 500, 1});
    o.require(std::all_of(flat.begin(), flat.end(), [](auto v) { return v == 500; }), "beta=1 not uniform");
    if (o.pass) o.detail = "counts 500..7 match the exact integer floor; beta=1 uniform";
    return o;
}

Outcome loss_identities() {
    Outcome o;
    Rng rng(2);
    const std::vector<double> start{0.3, -1.2, 2.0, 0.7}, end{1.1, 0.4, -0.5, 0.9};
    o.require(std::abs(match_loss(end, end, start)) <= 1e-12, "student=end");
    o.require(std::abs(match_loss(start, end, start) - 1.0) <= 1e-12, "student=start");

    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.index(12), C = 2 + rng.index(8);
        Graph g;
        Tensor logits = Tensor::zeros({n, C}), raw = Tensor::zeros({n, C});
        for (double& v : logits.data()) v = 3.0 * rng.normal();
        for (double& v : raw.data()) v = 2.0 * rng.normal();
        std::vector<int> anchors(n);
        for (int& a : anchors) a = int(rng.index(C));
        const ClassCounts counts{std::vector<std::size_t>(C, 1 + rng.index(1000))};
        const double lambda = 2.0 * rng.uniform();
        const NodeId l = g.constant(logits);
        const NodeId t = g.softmax(g.constant(raw));
        const double lc = g.value(lc_loss(g, l, t, anchors, counts, lambda)).item();
        const double ce = g.value(soft_cross_entropy(g, l, t)).item();
        worst = std::max(worst, std::abs(lc - ce));
    }
    o.require(worst <= 1e-9, "lc vs ce gap " + fmt("%.3g", worst));
    if (o.pass) o.detail = "max |lc - ce| " + fmt("%.2g", worst) + " over 100 instances";
    return o;
}

Outcome gradient_fidelity() {
    Outcome o;
    ToySpec toy;
    toy.num_classes = 3;
    toy.dim = 6;
    toy.separation = 2.0;
    toy.seed = 3;
    const LabeledSet d = subsample_longtail(gen_toy(toy, 30), std::vector<std::size_t>{30, 10, 4}, 1);
    const MlpSpec spec{{6, 8, 8, 3}};
    const Trajectory rep = train_representation_expert(d, spec, TrainConfig{5, 0.05, 0.9, 5e-4, 16, 1});
    const Trajectory cls = train_classifier_expert(rep, balanced_resample(d, ResampleMode::oversample, 1),
                                                   TrainConfig{3, 0.05, 0.9, 5e-4, 16, 1}, MaxNormConfig{3.0});
    DistillConfig cfg;
    cfg.ipc = 3;
    cfg.n_rep = 2;
    cfg.n_cls = 2;
    cfg.m_rep = 2;
    cfg.m_cls = 1;
    const ClassCounts counts{d.class_counts()};
    const SyntheticSet syn = init_synthetic(d, cls, cfg);
    const ExpertWindow rw{rep.snapshots[1], rep.snapshots[3]}, cw{cls.snapshots[1], cls.snapshots[2]};

    auto value = [&](const SyntheticSet& s) {
        MatchingGraph mg = build_matching_graph(s, rw, cw, counts, cfg);
        return mg.graph.value(mg.total).item();
    };
    MatchingGraph mg = build_matching_graph(syn, rw, cw, counts, cfg);
    const auto grads = mg.graph.backward(mg.total);
    const double h = 1e-5;
    double worst = 0.0;
    auto check = [&](double analytic, const std::function<void(SyntheticSet&, double)>& nudge) {
        SyntheticSet up = syn, down = syn;
        nudge(up, h);
        nudge(down, -h);
        const double fd = (value(up) - value(down)) / (2 * h);
        worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1e-8}));
    };
    Rng rng(17);
    for (int k = 0; k < 20; ++k) {
        const std::size_t i = rng.index(syn.images.size());
        check(grads.at(mg.images)[i], [i](SyntheticSet& s, double e) { s.images[i] += e; });
        const std::size_t j = rng.index(syn.label_logits.size());
        check(grads.at(mg.label_logits)[j], [j](SyntheticSet& s, double e) { s.label_logits[j] += e; });
    }
    check(grads.at(mg.inner_lr).item(), [](SyntheticSet& s, double e) { s.inner_lr += e; });
    o.require(worst <= 1e-4, "max relative error " + fmt("%.3g", worst));
    if (o.pass) o.detail = "max relative error " + fmt("%.2g", worst) + " over 41 coordinates";
    return o;
}

struct BiasRun {
    std::vector<double> rep_recall, cls_recall, rep_norm;
    std::vector<double> rep_conf, cls_conf;
};

std::vector<BiasRun> bias_runs() {
    std::vector<BiasRun> runs;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        // Toy data at beta=100 with the default representation-expert
        // schedule; toy.conf slows that expert down to smooth its trajectory
        // for distillation, which leaves classifier rows near initialization.
        RunConfig cfg = toy_config(seed);
        cfg.longtail.beta = 100.0;
        cfg.num_experts = 1;
        cfg.rep_train = RunConfig{}.rep_train;
        const DataBundle data = build_data(cfg);
        const ExpertPools pools = train_expert_pools(cfg, data);
        const ParamSet& rep = pools.rep.front().final_params();
        const ParamSet& cls = pools.cls.front().final_params();
        runs.push_back({per_class_recall(rep, data.test), per_class_recall(cls, data.test), weight_norm_profile(rep),
                        present(confidence_profile(rep, data.test)), present(confidence_profile(cls, data.test))});
    }
    return runs;
}

Outcome expert_bias(const std::vector<BiasRun>& runs) {
    Outcome o;
    std::string d;
    for (std::size_t s = 0; s < runs.size(); ++s) {
        std::vector<double> index(runs[s].rep_recall.size());
        std::iota(index.begin(), index.end(), 0.0);
        const double rho = spearman(index, runs[s].rep_recall);
        const double head = head_mean(runs[s].rep_norm), tail = tail_mean(runs[s].rep_norm);
        o.require(rho <= -0.5, "seed " + std::to_string(s) + " rho " + fmt("%.2f", rho));
        o.require(head > tail, "seed " + std::to_string(s) + " row norms head " + fmt("%.3f", head) + " <= tail " +
                                   fmt("%.3f", tail));
        d += (s ? ", " : "") + std::string("rho ") + fmt("%.2f", rho) + " norms " + fmt("%.2f", head) + "/" +
             fmt("%.2f", tail);
    }
    if (o.pass) o.detail = d;
    return o;
}

Outcome decoupling_benefit(const std::vector<BiasRun>& runs) {
    Outcome o;
    std::string d;
    for (std::size_t s = 0; s < runs.size(); ++s) {
        const double rep_tail = tail_mean(runs[s].rep_recall), cls_tail = tail_mean(runs[s].cls_recall);
        const double rep_gap = head_mean(runs[s].rep_conf) - tail_mean(runs[s].rep_conf);
        const double cls_gap = head_mean(runs[s].cls_conf) - tail_mean(runs[s].cls_conf);
        o.require(cls_tail > rep_tail, "seed " + std::to_string(s) + " tail recall " + fmt("%.3f", rep_tail) + " -> " +
                                           fmt("%.3f", cls_tail));
        o.require(cls_gap < rep_gap, "seed " + std::to_string(s) + " confidence gap " + fmt("%.3f", rep_gap) +
                                         " -> " + fmt("%.3f", cls_gap));
        d += (s ? ", " : "") + std::string("tail recall ") + fmt("%.2f", rep_tail) + "->" + fmt("%.2f", cls_tail) +
             " gap " + fmt("%.2f", rep_gap) + "->" + fmt("%.2f", cls_gap);
    }
    if (o.pass) o.detail = d;
    return o;
}

struct EndToEnd {
    std::vector<double> full, random, ablation, longtail;
    double seconds_per_seed = 0.0;
    double seconds_longtail = 0.0;
};

EndToEnd end_to_end() {
    EndToEnd r;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto t0 = std::chrono::steady_clock::now();
        const RunConfig cfg = toy_config(seed);
        const DataBundle data = build_data(cfg);
        const ExpertPools pools = train_expert_pools(cfg, data);
        r.full.push_back(run_eval(cfg, run_distill(cfg, data, pools).synthetic, data.test, "ltdd").accuracy);
        r.random.push_back(run_eval(cfg, baseline_set(cfg, data), data.test, "random").accuracy);
        RunConfig ablation = cfg;
        ablation.distill.lambda_cls = 0.0;
        ablation.distill.dam = false;
        r.ablation.push_back(run_eval(ablation, run_distill(ablation, data, pools).synthetic, data.test, "ablation").accuracy);
        const auto t1 = std::chrono::steady_clock::now();
        RunConfig lt = cfg;
        lt.distill.distribution = DistilledDistribution::longtail;
        r.longtail.push_back(run_eval(lt, run_distill(lt, data, pools).synthetic, data.test, "longtail").accuracy);
        const auto t2 = std::chrono::steady_clock::now();
        r.seconds_per_seed = std::max(r.seconds_per_seed, std::chrono::duration<double>(t1 - t0).count());
        r.seconds_longtail += std::chrono::duration<double>(t2 - t1).count();
    }
    return r;
}

Outcome desk_experiment(const EndToEnd& r) {
    Outcome o;
    const double full = mean(r.full), random = mean(r.random), ablation = mean(r.ablation);
    o.require(full >= random + 0.05, "full " + fmt("%.4f", full) + " < random " + fmt("%.4f", random) + " + 0.05");
    o.require(ablation < full, "ablation " + fmt("%.4f", ablation) + " >= full " + fmt("%.4f", full));
    o.require(r.seconds_per_seed < 900.0, "seed took " + fmt("%.0f", r.seconds_per_seed) + " s");
    if (o.pass) {
        o.detail = "mean acc full " + fmt("%.4f", full) + ", random " + fmt("%.4f", random) + ", ablation " +
                   fmt("%.4f", ablation) + ", slowest seed " + fmt("%.1f", r.seconds_per_seed) + " s";
    }
    return o;
}

Outcome distribution_choice(const EndToEnd& r) {
    Outcome o;
    const double balanced = mean(r.full), longtail = mean(r.longtail);
    o.require(balanced >= longtail, "balanced " + fmt("%.4f", balanced) + " < longtail " + fmt("%.4f", longtail));
    if (o.pass) o.detail = "mean acc balanced " + fmt("%.4f", balanced) + ", longtail " + fmt("%.4f", longtail);
    return o;
}

Outcome determinism_and_persistence() {
    Outcome o;
    const fs::path root = fs::temp_directory_path() / "ltdd_acceptance_c8";
    fs::remove_all(root);
    for (const char* run : {"a", "b"}) {
        RunConfig cfg = toy_config(7);
        cfg.num_experts = 2;
        cfg.distill.outer_steps = 20;
        cfg.eval.epochs = 30;
        const fs::path out = root / run;
        fs::create_directories(out);
        const DataBundle data = build_data(cfg);
        save_expert_pools(out, train_expert_pools(cfg, data));
        const ExpertPools pools = load_expert_pools(out, cfg, data);
        const DistillResult res = run_distill(cfg, data, pools);
        save_synthetic(out / "synthetic.ltdd", res.synthetic, config_fingerprint(cfg));
        const MetricsRecord m = run_eval(cfg, load_synthetic(out / "synthetic.ltdd"), data.test, "ltdd");
        write_text_atomic(out / "metrics.csv", metrics_csv(std::span(&m, 1)));
    }
    for (const char* f : {"experts/rep_0.traj", "experts/rep_1.traj", "experts/cls_0.traj", "experts/cls_1.traj",
                          "synthetic.ltdd", "metrics.csv"}) {
        const auto a = slurp(root / "a" / f), b = slurp(root / "b" / f);
        o.require(!a.empty() && a == b, std::string(f) + " differs between runs");
    }

    const fs::path traj = root / "a/experts/cls_1.traj";
    const Trajectory t = load_trajectory(traj);
    save_trajectory(root / "resaved.traj", t);
    o.require(slurp(traj) == slurp(root / "resaved.traj"), "trajectory round trip not bitwise");
    o.require(load_trajectory(root / "resaved.traj").snapshots == t.snapshots, "snapshots changed on reload");

    const auto bytes = slurp(traj);
    auto expect = [&](const char* name, std::vector<char> corrupt, FormatError::Kind kind) {
        const fs::path p = root / (std::string(name) + ".traj");
        std::ofstream(p, std::ios::binary).write(corrupt.data(), std::streamsize(corrupt.size()));
        try {
            load_trajectory(p);
            o.require(false, std::string(name) + " accepted");
        } catch (const FormatError& e) {
            o.require(e.kind() == kind, std::string(name) + " reported as '" + e.what() + "'");
        }
    };
    auto magic = bytes;
    magic[1] = 'X';
    expect("bad_magic", magic, FormatError::Kind::bad_magic);
    auto version = bytes;
    version[4] = 0x7f;
    expect("version", version, FormatError::Kind::version_mismatch);
    auto flipped = bytes;
    flipped[flipped.size() - 40] ^= 0x01;
    expect("checksum", flipped, FormatError::Kind::checksum_mismatch);
    expect("truncated", std::vector<char>(bytes.begin(), bytes.end() - 100), FormatError::Kind::truncated);
    fs::remove_all(root);
    if (o.pass) o.detail = "artifacts byte-identical across reruns; 4 corruption kinds rejected";
    return o;
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int id, const char* name, double limit_s, double seconds, Outcome o) {
        if (seconds >= limit_s) o.require(false, "runtime " + fmt("%.1f", seconds) + " s over limit");
        if (!o.pass) ++failures;
        std::printf("%s criterion %d: %s (%.1f s, limit %.0f s): %s\n", o.pass ? "PASS" : "FAIL", id, name, seconds,
                    limit_s, o.detail.c_str());
        std::fflush(stdout);
    };
    auto timed = [](auto&& f) {
        const auto t0 = std::chrono::steady_clock::now();
        auto result = f();
        return std::pair{std::move(result), std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
    };
    auto guarded = [](auto&& f) {
        return [f]() {
            try {
                return f();
            } catch (const std::exception& e) {
                Outcome o;
                o.require(false, std::string("exception: ") + e.what());
                return o;
            }
        };
    };

    {
        auto [o, s] = timed(guarded(sampler_exactness));
        report(1, "sampler exactness", 1, s, o);
    }
    {
        auto [o, s] = timed(guarded(loss_identities));
        report(2, "loss identities", 5, s, o);
    }
    {
        auto [o, s] = timed(guarded(gradient_fidelity));
        report(3, "gradient fidelity", 30, s, o);
    }
    auto crashed = [](const std::exception& e) {
        Outcome o;
        o.require(false, std::string("exception: ") + e.what());
        return o;
    };
    try {
        // Criteria 4 and 5 share the same expert runs; each is charged the full time.
        auto [runs, s] = timed(bias_runs);
        report(4, "expert bias phenomenon", 120, s, guarded([&] { return expert_bias(runs); })());
        report(5, "decoupling benefit", 120, s, guarded([&] { return decoupling_benefit(runs); })());
    } catch (const std::exception& e) {
        report(4, "expert bias phenomenon", 120, 0, crashed(e));
        report(5, "decoupling benefit", 120, 0, crashed(e));
    }
    try {
        auto [r, s] = timed(end_to_end);
        report(6, "end-to-end desk experiment", 15 * 60 * 3, s - r.seconds_longtail, desk_experiment(r));
        report(7, "balanced vs longtail distilled distribution", 20 * 60, r.seconds_longtail, distribution_choice(r));
    } catch (const std::exception& e) {
        report(6, "end-to-end desk experiment", 15 * 60 * 3, 0, crashed(e));
        report(7, "balanced vs longtail distilled distribution", 20 * 60, 0, crashed(e));
    }
    {
        auto [o, s] = timed(guarded(determinism_and_persistence));
        report(8, "determinism and persistence", 60, s, o);
    }
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
