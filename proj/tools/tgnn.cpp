#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "tgnn/graph.hpp"
#include "tgnn/model.hpp"
#include "tgnn/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitNanLoss = 3;

struct DatasetSpec {
    std::string kind;  // synth | cora | generic
    std::string name;  // generator name or path
    std::string extra; // cites path for cora
    std::size_t n = 300;
    std::uint64_t seed = 1;
};

DatasetSpec parse_dataset(const std::string& spec) {
    DatasetSpec d;
    std::vector<std::string> parts;
    std::stringstream ss(spec);
    std::string part;
    while (std::getline(ss, part, ':')) parts.push_back(part);
    if (parts.empty()) throw std::invalid_argument("empty dataset spec");

    if (parts[0] == "synth") {
        if (parts.size() < 2) throw std::invalid_argument("synth spec needs a generator name");
        d.kind = "synth";
        d.name = parts[1];
        for (std::size_t i = 2; i < parts.size(); ++i) {
            const auto eq = parts[i].find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("bad synth option: " + parts[i]);
            const std::string key = parts[i].substr(0, eq);
            const std::string value = parts[i].substr(eq + 1);
            if (key == "n")
                d.n = std::stoul(value);
            else if (key == "seed")
                d.seed = std::stoull(value);
            else
                throw std::invalid_argument("unknown synth option: " + key);
        }
    } else if (parts[0] == "cora") {
        d.kind = "cora";
        if (parts.size() == 2) {
            d.name = (fs::path(parts[1]) / "cora.content").string();
            d.extra = (fs::path(parts[1]) / "cora.cites").string();
        } else if (parts.size() == 3) {
            d.name = parts[1];
            d.extra = parts[2];
        } else {
            throw std::invalid_argument("cora spec: cora:<dir> or cora:<content>:<cites>");
        }
    } else if (parts[0] == "generic" && parts.size() == 2) {
        d.kind = "generic";
        d.name = parts[1];
    } else if (parts.size() == 1) {
        d.kind = "generic";
        d.name = parts[0];
    } else {
        throw std::invalid_argument("unrecognized dataset spec: " + spec);
    }
    return d;
}

tgnn::Graph load_dataset(const DatasetSpec& d) {
    if (d.kind == "synth") {
        tgnn::Graph g;
        if (d.name == "separable")
            g = tgnn::make_separable(d.n, d.seed);
        else if (d.name == "parity")
            g = tgnn::make_parity(d.n, d.seed);
        else
            throw std::invalid_argument("unknown synthetic generator: " + d.name);
        tgnn::l1_row_normalize(g.features);  // same preprocessing as the file loaders
        return g;
    }
    if (d.kind == "cora") {
        if (!fs::exists(d.name) || !fs::exists(d.extra))
            throw std::invalid_argument("dataset files not found: " + d.name + ", " + d.extra);
        auto loaded = tgnn::load_cora_content(d.name, d.extra);
        if (loaded.skipped_edges > 0)
            std::cerr << "warning: skipped " << loaded.skipped_edges
                      << " edges referencing unknown ids\n";
        return std::move(loaded.graph);
    }
    if (!fs::exists(d.name)) throw std::invalid_argument("dataset directory not found: " + d.name);
    return std::move(tgnn::load_generic(d.name).graph);
}

json report_to_json_obj(const tgnn::TrainReport& rep, const tgnn::TgnnConfig& config,
                        const std::string& dataset) {
    json j = json::parse(rep.to_json());
    j["config"] = json::parse(tgnn::config_to_json(config));
    j["dataset"] = dataset;
    return j;
}

int cmd_train(const std::string& config_path, const std::string& dataset_flag,
              std::int64_t seed_flag, std::size_t repeats, const std::string& out_dir) {
    tgnn::TgnnConfig config;
    std::string dataset_spec = dataset_flag;
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << "error: cannot open config file " << config_path << "\n";
            return kExitUsage;
        }
        json j;
        in >> j;
        if (j.contains("model")) config = tgnn::config_from_json(j["model"].dump());
        if (dataset_spec.empty() && j.contains("dataset"))
            dataset_spec = j["dataset"].get<std::string>();
    }
    if (dataset_spec.empty()) {
        std::cerr << "error: no dataset given (use --dataset or a config file)\n";
        return kExitUsage;
    }
    if (seed_flag >= 0) config.seed = static_cast<std::uint64_t>(seed_flag);

    fs::create_directories(out_dir);
    const DatasetSpec spec = parse_dataset(dataset_spec);

    std::vector<double> test_accs;
    for (std::size_t r = 0; r < repeats; ++r) {
        tgnn::TgnnConfig run_config = config;
        run_config.seed = config.seed + r;

        tgnn::Graph g = load_dataset(spec);
        if (g.masks.empty())
            g.masks = tgnn::random_split(g, {0.6, 0.2, 0.2}, run_config.seed);

        tgnn::TgnnModel model;
        const tgnn::TrainReport rep = tgnn::train(g, run_config, &model);
        test_accs.push_back(rep.test_acc);

        const std::string tag = "seed" + std::to_string(run_config.seed);
        std::ofstream rep_out(fs::path(out_dir) / ("train_" + tag + ".json"));
        rep_out << report_to_json_obj(rep, run_config, dataset_spec).dump(2) << '\n';
        tgnn::save_checkpoint((fs::path(out_dir) / ("checkpoint_" + tag + ".json")).string(),
                              model, run_config);
        std::cout << tag << ": test_acc=" << rep.test_acc << " best_val=" << rep.best_val_acc
                  << " epochs=" << rep.epochs.size() << "\n";
    }

    double mean = 0.0;
    for (double a : test_accs) mean += a;
    mean /= static_cast<double>(test_accs.size());
    double var = 0.0;
    for (double a : test_accs) var += (a - mean) * (a - mean);
    const double stddev =
        test_accs.size() > 1 ? std::sqrt(var / static_cast<double>(test_accs.size() - 1)) : 0.0;

    json summary{{"dataset", dataset_spec},
                 {"repeats", repeats},
                 {"base_seed", config.seed},
                 {"test_acc_mean", mean},
                 {"test_acc_std", stddev},
                 {"test_accs", test_accs},
                 {"config", json::parse(tgnn::config_to_json(config))}};
    std::ofstream sum_out(fs::path(out_dir) / "summary.json");
    sum_out << summary.dump(2) << '\n';
    std::cout << "test accuracy: " << mean << " +/- " << stddev << "\n";
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& dataset_flag,
             const std::string& out_dir) {
    if (!fs::exists(checkpoint_path)) {
        std::cerr << "error: checkpoint not found: " << checkpoint_path << "\n";
        return kExitUsage;
    }
    const tgnn::Checkpoint ck = tgnn::load_checkpoint(checkpoint_path);
    tgnn::Graph g = load_dataset(parse_dataset(dataset_flag));
    if (g.masks.empty()) g.masks = tgnn::random_split(g, {0.6, 0.2, 0.2}, ck.config.seed);

    const auto samples =
        tgnn::sample_all_neighbors(g, ck.config.sample_size, ck.config.seed, tgnn::kEvalEpoch);
    const tgnn::Matrix logits = tgnn::forward_node(ck.model, g, samples);
    json j{{"checkpoint", checkpoint_path},
           {"dataset", dataset_flag},
           {"train_acc", tgnn::accuracy(logits, g.labels, g.masks.train)},
           {"val_acc", tgnn::accuracy(logits, g.labels, g.masks.val)},
           {"test_acc", tgnn::accuracy(logits, g.labels, g.masks.test)}};
    std::cout << j.dump(2) << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream out(fs::path(out_dir) / "eval.json");
        out << j.dump(2) << '\n';
    }
    return kExitOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& out_dir) {
    std::vector<tgnn::VerifyReport> reports;
    if (suite == "all") {
        reports = tgnn::run_all_checks(seed);
    } else {
        const auto names = tgnn::check_names();
        const auto all = tgnn::run_all_checks(seed);
        bool found = false;
        for (std::size_t i = 0; i < names.size(); ++i) {
            if (names[i] == suite) {
                reports.push_back(all[i]);
                found = true;
            }
        }
        if (!found) {
            std::cerr << "error: unknown verify suite '" << suite << "' (known:";
            for (const auto& n : names) std::cerr << " " << n;
            std::cerr << " all)\n";
            return kExitUsage;
        }
    }

    fs::create_directories(out_dir);
    bool all_passed = true;
    std::cout << "check                              trials  failures  max_error      status\n";
    for (const auto& rep : reports) {
        std::ofstream out(fs::path(out_dir) / (rep.check + ".json"));
        out << rep.to_json() << '\n';
        all_passed = all_passed && rep.passed();
        char line[160];
        std::snprintf(line, sizeof(line), "%-34s %6zu  %8zu  %12.3e  %s", rep.check.c_str(),
                      rep.trials, rep.failures, rep.max_error,
                      rep.passed() ? "pass" : "FAIL");
        std::cout << line << "\n";
    }
    return all_passed ? kExitOk : 1;
}

int cmd_bench(const std::string& grid, const std::string& out_path, std::uint64_t seed) {
    std::vector<std::size_t> feats{16, 64};
    std::vector<std::size_t> ks{3, 5};
    std::vector<std::size_t> ranks{8, 64, 512};
    if (!grid.empty()) {
        // e.g. "R=8,64,512" or "F=16;k=3,5;R=8,64"
        std::stringstream ss(grid);
        std::string clause;
        while (std::getline(ss, clause, ';')) {
            const auto eq = clause.find('=');
            if (eq == std::string::npos) {
                std::cerr << "error: bad --grid clause: " << clause << "\n";
                return kExitUsage;
            }
            const std::string key = clause.substr(0, eq);
            std::vector<std::size_t> values;
            std::stringstream vs(clause.substr(eq + 1));
            std::string v;
            while (std::getline(vs, v, ',')) values.push_back(std::stoul(v));
            if (key == "R")
                ranks = values;
            else if (key == "F")
                feats = values;
            else if (key == "k")
                ks = values;
            else {
                std::cerr << "error: unknown --grid key: " << key << "\n";
                return kExitUsage;
            }
        }
    }

    std::ostringstream csv;
    csv << "pooling,F,k,R,flops,seconds\n";
    tgnn::Rng rng(seed);
    const auto time_forward = [&](const auto& fn) {
        const auto start = std::chrono::steady_clock::now();
        for (int i = 0; i < 200; ++i) fn();
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() /
               200.0;
    };

    for (const std::size_t feat : feats) {
        for (const std::size_t k : ks) {
            std::vector<tgnn::Vector> xs(k);
            for (auto& x : xs) {
                x.resize(feat);
                for (auto& v : x) v = rng.uniform(-1.0, 1.0);
            }
            const std::size_t out_dim = feat;
            const tgnn::Matrix proj = tgnn::Matrix::uniform(feat, out_dim, -1.0, 1.0, rng);
            for (const char* kind : {"sum", "mean", "max"}) {
                tgnn::FlopCounter flops;
                tgnn::baseline_pool_forward(proj, xs, kind, &flops);
                const double secs =
                    time_forward([&] { tgnn::baseline_pool_forward(proj, xs, kind); });
                csv << kind << ',' << feat << ',' << k << ",0," << flops.madds << ',' << secs
                    << "\n";
            }
            for (const std::size_t rank : ranks) {
                const tgnn::CpLayerParams layer = tgnn::init_cp_layer(
                    feat, rank, out_dim, tgnn::Activation::tanh, tgnn::Activation::relu, rng);
                tgnn::FlopCounter flops;
                tgnn::cp_forward(layer, xs, &flops);
                const double secs = time_forward([&] { tgnn::cp_forward(layer, xs); });
                csv << "cp," << feat << ',' << k << ',' << rank << ',' << flops.madds << ','
                    << secs << "\n";
            }
        }
    }

    if (out_path.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream out(out_path);
        out << csv.str();
        std::cout << "wrote " << out_path << "\n";
    }
    return kExitOk;
}

int cmd_synth(const std::string& generator, std::size_t n, std::uint64_t seed,
              const std::string& out_dir) {
    tgnn::Graph g;
    if (generator == "separable")
        g = tgnn::make_separable(n, seed);
    else if (generator == "parity")
        g = tgnn::make_parity(n, seed);
    else {
        std::cerr << "error: unknown generator '" << generator << "' (known: separable parity)\n";
        return kExitUsage;
    }
    tgnn::save_generic(out_dir, g);
    std::cout << "wrote " << out_dir << " (n=" << g.n << ", F=" << g.feature_dim()
              << ", classes=" << g.num_classes << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tGNN: CP-aggregation graph neural network toolkit"};
    app.require_subcommand(1);

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write report + checkpoint");
    std::string config_path, dataset_spec, out_dir = "runs";
    std::int64_t seed_flag = -1;
    std::size_t repeats = 1;
    train_cmd->add_option("--config", config_path, "JSON config file");
    train_cmd->add_option("--dataset", dataset_spec, "dataset spec (synth:parity, cora:DIR, DIR)");
    train_cmd->add_option("--seed", seed_flag, "base seed (overrides config)");
    train_cmd->add_option("--repeats", repeats, "number of seeds: seed..seed+n-1");
    train_cmd->add_option("--out", out_dir, "output directory");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ckpt_path, eval_dataset, eval_out;
    eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint JSON")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "dataset spec")->required();
    eval_cmd->add_option("--out", eval_out, "output directory");

    // verify
    auto* verify_cmd = app.add_subcommand("verify", "run the numerical certification checks");
    std::string suite = "all", verify_out = "verify_reports";
    std::uint64_t verify_seed = 0;
    verify_cmd->add_option("suite", suite, "check name or 'all'");
    verify_cmd->add_option("--seed", verify_seed, "seed");
    verify_cmd->add_option("--out", verify_out, "report directory");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "pooling cost table (flops + wall time)");
    std::string grid, bench_out;
    std::uint64_t bench_seed = 0;
    bench_cmd->add_option("--grid", grid, "grid override, e.g. R=8,64,512;F=16;k=3,5");
    bench_cmd->add_option("--out", bench_out, "CSV path (default stdout)");
    bench_cmd->add_option("--seed", bench_seed, "seed");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    std::string generator, synth_out = "synth_data";
    std::size_t synth_n = 300;
    std::uint64_t synth_seed = 1;
    synth_cmd->add_option("generator", generator, "separable | parity")->required();
    synth_cmd->add_option("--n", synth_n, "node count");
    synth_cmd->add_option("--seed", synth_seed, "seed");
    synth_cmd->add_option("--out", synth_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (train_cmd->parsed())
            return cmd_train(config_path, dataset_spec, seed_flag, repeats, out_dir);
        if (eval_cmd->parsed()) return cmd_eval(ckpt_path, eval_dataset, eval_out);
        if (verify_cmd->parsed()) return cmd_verify(suite, verify_seed, verify_out);
        if (bench_cmd->parsed()) return cmd_bench(grid, bench_out, bench_seed);
        if (synth_cmd->parsed()) return cmd_synth(generator, synth_n, synth_seed, synth_out);
    } catch (const tgnn::NanLossError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNanLoss;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitUsage;
}
