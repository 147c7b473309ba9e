// ltdd: long-tailed dataset distillation command-line driver.

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ltdd/container.hpp"
#include "ltdd/pipeline.hpp"

namespace {

using namespace ltdd;
namespace fs = std::filesystem;

struct Invocation {
    std::string command;
    RunConfig cfg;
    std::vector<std::string> inputs;  // extra positional paths (report)
};

Invocation parse_args(int argc, char** argv) {
    Invocation inv;
    inv.command = argv[1];
    std::vector<std::pair<std::string, std::string>> overrides;
    bool have_config = false;
    for (int i = 2; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg.rfind("--", 0) == 0) {
            const auto eq = arg.find('=');
            if (eq == std::string::npos) throw ConfigError("flag '" + arg + "' must have the form --key=value");
            overrides.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
        } else if (inv.command == "report" && fs::path(arg).extension() == ".csv") {
            inv.inputs.push_back(arg);
        } else if (!have_config) {
            inv.cfg = load_config(arg);
            have_config = true;
        } else {
            throw ConfigError("unexpected argument '" + arg + "'");
        }
    }
    for (const auto& [key, value] : overrides) apply_override(inv.cfg, key, value);
    if (const char* env = std::getenv("LT_DISTILL_OUT"); env && *env) inv.cfg.out_dir = env;
    inv.cfg.validate();
    return inv;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("missing file '" + path.string() + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string metrics_name(const RunConfig& cfg, const std::string& method, bool longtail_test) {
    return "metrics_" + method + (longtail_test ? "_lt" : "") + "_seed" + std::to_string(cfg.seed) + ".csv";
}

void write_metrics(const RunConfig& cfg, const SyntheticSet& syn, const DataBundle& data, const std::string& method) {
    const fs::path out = cfg.out_dir;
    for (bool lt : {false, true}) {
        const MetricsRecord m = run_eval(cfg, syn, lt ? data.test_longtail : data.test, method);
        write_text_atomic(out / metrics_name(cfg, method, lt), metrics_csv(std::span(&m, 1)));
        if (!lt) std::cout << method << " seed " << cfg.seed << ": balanced-test accuracy " << m.accuracy << '\n';
    }
}

int cmd_gen_data(const RunConfig& cfg, const DataBundle& data) {
    nlohmann::json manifest = {
        {"config_fingerprint", config_fingerprint(cfg)},
        {"train_fingerprint", data.fingerprint},
        {"test_fingerprint", dataset_fingerprint(data.test)},
        {"test_longtail_fingerprint", dataset_fingerprint(data.test_longtail)},
        {"train_counts", data.train.class_counts()},
        {"test_counts", data.test.class_counts()},
        {"test_longtail_counts", data.test_longtail.class_counts()},
    };
    write_text_atomic(fs::path(cfg.out_dir) / "data.json", manifest.dump(2) + "\n");
    std::cout << "train " << data.train.size() << " samples, fingerprint " << data.fingerprint << '\n';
    return 0;
}

int run(const Invocation& inv) {
    const RunConfig& cfg = inv.cfg;
    const fs::path out = cfg.out_dir;
    fs::create_directories(out);
    const std::string fp = config_fingerprint(cfg);

    if (inv.command == "report") {
        std::vector<std::string> inputs = inv.inputs;
        if (inputs.empty()) {
            for (const auto& entry : fs::directory_iterator(out)) {
                const std::string name = entry.path().filename().string();
                if (name.rfind("metrics_", 0) == 0 && entry.path().extension() == ".csv") inputs.push_back(entry.path().string());
            }
            std::sort(inputs.begin(), inputs.end());
        }
        if (inputs.empty()) throw ConfigError("report: no metrics CSVs found in '" + out.string() + "'");
        std::vector<MetricsRecord> records;
        for (const auto& path : inputs) {
            auto rows = parse_metrics_csv(read_text(path));
            records.insert(records.end(), rows.begin(), rows.end());
        }
        const std::string text = compare_report_text(records);
        write_text_atomic(out / "report.txt", text);
        write_text_atomic(out / "report.csv", compare_report_csv(records));
        std::cout << text;
        return 0;
    }

    const DataBundle data = build_data(cfg);
    if (inv.command == "gen-data") return cmd_gen_data(cfg, data);
    if (inv.command == "train-experts") {
        save_expert_pools(out, train_expert_pools(cfg, data));
        std::cout << "wrote " << cfg.num_experts << " representation and classifier experts to " << (out / "experts") << '\n';
        return 0;
    }
    if (inv.command == "distill") {
        const ExpertPools pools = load_expert_pools(out, cfg, data);
        const DistillResult result = run_distill(cfg, data, pools);
        save_synthetic(out / "synthetic.ltdd", result.synthetic, fp);
        write_text_atomic(out / "distill_trace.csv", trace_csv(result.trace, fp));
        std::cout << "wrote " << result.synthetic.size() << " synthetic samples to " << (out / "synthetic.ltdd") << '\n';
        return 0;
    }
    if (inv.command == "eval") {
        const fs::path path = out / "synthetic.ltdd";
        if (!fs::exists(path)) throw ConfigError("missing file '" + path.string() + "'");
        write_metrics(cfg, load_synthetic(path), data, cfg.method);
        return 0;
    }
    if (inv.command == "baseline") {
        write_metrics(cfg, baseline_set(cfg, data), data, to_string(cfg.baseline));
        return 0;
    }
    if (inv.command == "diag") {
        const ExpertPools pools = load_expert_pools(out, cfg, data);
        const std::string csv = diag_csv(pools, data, fp);
        write_text_atomic(out / "diag.csv", csv);
        std::cout << csv;
        return 0;
    }
    throw ConfigError("unknown command '" + inv.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2 || std::string(argv[1]) == "--help" || std::string(argv[1]) == "-h") {
        std::cout << ltdd::help_text();
        return argc < 2 ? 1 : 0;
    }
    for (int i = 2; i < argc; ++i) {
        if (std::string(argv[i]) == "--help") {
            std::cout << ltdd::help_text();
            return 0;
        }
    }
    try {
        return run(parse_args(argc, argv));
    } catch (const ltdd::ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const ltdd::ShapeError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << '\n';
        return 2;
    }
}
