#include "ltdd/pipeline.hpp"

#include <algorithm>
#include <cstdio>

#include "ltdd/rng.hpp"
#include "ltdd/training.hpp"

namespace ltdd {
namespace {

std::string fixed6(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Long-tailed profile for `d`'s class count, capped by the smallest class.
std::vector<std::size_t> profile_for(const RunConfig& cfg, const LabeledSet& d, std::size_t n_max) {
    LongTailSpec lt = cfg.longtail;
    lt.num_classes = d.num_classes();
    const auto smallest = *std::min_element(d.class_counts().begin(), d.class_counts().end());
    lt.n_max = std::min(n_max, smallest);
    lt.min_count = std::min(lt.min_count, lt.n_max);
    return longtail_counts(lt);
}

}  // namespace

std::string dataset_fingerprint(const LabeledSet& d) {
    std::vector<unsigned char> bytes;
    const auto features = d.features().data();
    const auto* f = reinterpret_cast<const unsigned char*>(features.data());
    bytes.insert(bytes.end(), f, f + features.size() * sizeof(double));
    const auto* l = reinterpret_cast<const unsigned char*>(d.labels().data());
    bytes.insert(bytes.end(), l, l + d.labels().size() * sizeof(int));
    return fnv1a_hex(bytes.data(), bytes.size());
}

DataBundle build_data(const RunConfig& cfg) {
    LabeledSet full, test;
    if (cfg.uses_idx()) {
        for (const std::string& p : {cfg.idx_train_images, cfg.idx_train_labels, cfg.idx_test_images, cfg.idx_test_labels}) {
            if (!std::filesystem::exists(p)) throw ConfigError("missing file '" + p + "'");
        }
        full = load_idx(cfg.idx_train_images, cfg.idx_train_labels);
        test = load_idx(cfg.idx_test_images, cfg.idx_test_labels);
        if (test.num_classes() != full.num_classes() || test.dim() != full.dim()) {
            throw ValidationError("IDX test set does not match the training set's classes or image size");
        }
    } else {
        ToySpec toy = cfg.toy;
        toy.seed = derive_seed(cfg.seed, kDataStream);
        full = gen_toy(toy, cfg.longtail.n_max, 0);
        test = gen_toy(toy, cfg.n_test, 1);
    }
    DataBundle out;
    const auto seed = derive_seed(cfg.seed, kSubsampleStream);
    out.train = subsample_longtail(full, profile_for(cfg, full, cfg.longtail.n_max), seed);
    out.test = std::move(test);
    out.test_longtail = subsample_longtail(out.test, profile_for(cfg, out.test, cfg.n_test), seed);
    out.fingerprint = dataset_fingerprint(out.train);
    return out;
}

ExpertPools train_expert_pools(const RunConfig& cfg, const DataBundle& data) {
    const MlpSpec spec = cfg.mlp_spec(data.train.dim(), data.train.num_classes());
    const std::string fp = config_fingerprint(cfg);
    ExpertPools pools;
    for (std::size_t k = 0; k < cfg.num_experts; ++k) {
        TrainConfig rep_cfg = cfg.rep_train;
        rep_cfg.seed = derive_seed(cfg.seed, kRepExpertStream + k);
        Trajectory rep = train_representation_expert(data.train, spec, rep_cfg, data.fingerprint);
        rep.config_fingerprint = fp;

        const LabeledSet balanced =
            balanced_resample(data.train, cfg.cls_resample, derive_seed(cfg.seed, kResampleStream + k));
        TrainConfig cls_cfg = cfg.cls_train;
        cls_cfg.seed = derive_seed(cfg.seed, kClsExpertStream + k);
        Trajectory cls = train_classifier_expert(rep, balanced, cls_cfg, cfg.maxnorm);
        cls.config_fingerprint = fp;

        pools.rep.push_back(std::move(rep));
        pools.cls.push_back(std::move(cls));
    }
    return pools;
}

std::filesystem::path expert_path(const std::filesystem::path& out, Stage stage, std::size_t index) {
    return out / "experts" / (std::string(stage == Stage::representation ? "rep_" : "cls_") + std::to_string(index) + ".traj");
}

void save_expert_pools(const std::filesystem::path& out, const ExpertPools& pools) {
    std::filesystem::create_directories(out / "experts");
    for (std::size_t k = 0; k < pools.rep.size(); ++k) {
        save_trajectory(expert_path(out, Stage::representation, k), pools.rep[k]);
        save_trajectory(expert_path(out, Stage::classifier, k), pools.cls[k]);
    }
}

ExpertPools load_expert_pools(const std::filesystem::path& out, const RunConfig& cfg, const DataBundle& data) {
    ExpertPools pools;
    for (std::size_t k = 0; k < cfg.num_experts; ++k) {
        for (Stage stage : {Stage::representation, Stage::classifier}) {
            const auto path = expert_path(out, stage, k);
            if (!std::filesystem::exists(path)) throw ConfigError("missing file '" + path.string() + "'");
            Trajectory t = load_trajectory(path);
            if (t.stage != stage) throw ValidationError("'" + path.string() + "' holds the wrong expert stage");
            if (t.dataset_fingerprint != data.fingerprint) {
                throw ValidationError("'" + path.string() + "' was trained on different data");
            }
            (stage == Stage::representation ? pools.rep : pools.cls).push_back(std::move(t));
        }
    }
    return pools;
}

DistillConfig seeded_distill_config(const RunConfig& cfg) {
    DistillConfig d = cfg.distill;
    d.seed = derive_seed(cfg.seed, kDistillStream);
    return d;
}

DistillResult run_distill(const RunConfig& cfg, const DataBundle& data, const ExpertPools& pools) {
    return distill(data.train, pools.rep, pools.cls, seeded_distill_config(cfg));
}

MetricsRecord run_eval(const RunConfig& cfg, const SyntheticSet& syn, const LabeledSet& test, const std::string& method) {
    const MlpSpec spec = cfg.mlp_spec(test.dim(), test.num_classes());
    const ParamSet params = train_on_synthetic(syn, spec, cfg.eval, derive_seed(cfg.seed, kEvalStream));
    MetricsRecord m = evaluate(params, test);
    m.method = method;
    m.seed = cfg.seed;
    m.config_fingerprint = config_fingerprint(cfg);
    return m;
}

SyntheticSet baseline_set(const RunConfig& cfg, const DataBundle& data) {
    const auto seed = derive_seed(cfg.seed, kCoresetSeedStream);
    switch (cfg.baseline) {
        case BaselineKind::random:
            return random_coreset(data.train, cfg.distill.ipc, seed);
        case BaselineKind::kcenter:
            return kcenter_coreset(data.train, cfg.distill.ipc, seed);
        case BaselineKind::full:
            break;
    }
    SyntheticSet syn;
    syn.images = data.train.features();
    syn.assigned_class = data.train.labels();
    syn.label_logits = one_hot(data.train.labels(), data.train.num_classes());
    syn.inner_lr = cfg.eval.step_size;
    syn.hard_labels = true;
    return syn;
}

std::string diag_csv(const ExpertPools& pools, const DataBundle& data, const std::string& config_fingerprint) {
    const ParamSet& rep = pools.rep.front().final_params();
    const ParamSet& cls = pools.cls.front().final_params();
    const auto rep_recall = per_class_recall(rep, data.test);
    const auto cls_recall = per_class_recall(cls, data.test);
    const auto rep_conf = confidence_profile(rep, data.test);
    const auto cls_conf = confidence_profile(cls, data.test);
    const auto rep_norm = weight_norm_profile(rep);
    const auto cls_norm = weight_norm_profile(cls);
    std::string out =
        "class,train_count,rep_recall,cls_recall,rep_confidence,cls_confidence,rep_row_norm,cls_row_norm,config_fp\n";
    auto conf = [](const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); };
    for (std::size_t c = 0; c < data.train.num_classes(); ++c) {
        out += std::to_string(c) + ',' + std::to_string(data.train.class_counts()[c]) + ',' + fixed6(rep_recall[c]) + ',' +
               fixed6(cls_recall[c]) + ',' + conf(rep_conf[c]) + ',' + conf(cls_conf[c]) + ',' + fixed6(rep_norm[c]) + ',' +
               fixed6(cls_norm[c]) + ',' + config_fingerprint + '\n';
    }
    return out;
}

}  // namespace ltdd
