// Copyright 2026 The tsaseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the license.

// tsaseg: synthetic data generation, training, evaluation, verification and feature export.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tsaseg/config.hpp"
#include "tsaseg/runtime.hpp"
#include "tsaseg/trainer.hpp"
#include "tsaseg/verify.hpp"

namespace fs = std::filesystem;
using namespace tsaseg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

constexpr const char* kCsvHelp = R"(CSV outputs (fixed column order):
  steps.csv            iter,loss_total,loss_sup,loss_cons,loss_tsa,alpha,confident_pixels
                       (confident_pixels: per-class counts joined by ';'; loss_total =
                        loss_sup + loss_cons + beta * loss_tsa)
  eval.csv             iter,split,class,dice,jaccard,hd95,asd,boundary_sentinel_count
                       (one row per foreground class plus class = mean)
  eval_per_sample.csv  sample,class,dice,jaccard,hd95,asd,boundary_sentinel
  features.csv         domain,class,f0,...,f{d-1}
  check.csv            check,passed,seconds,detail
Every command also writes config.resolved with the effective configuration.
Exit codes: 0 success, 1 verification failure, 2 configuration error, 3 I/O error.)";

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::vector<std::string> set;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

RunConfig load_config(const Globals& g) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : parse_config(g.config);
    for (const std::string& kv : g.set) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError(kv, 0, "--set expects key=value, got '" + kv + "'");
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (g.seed) cfg.train.seed = *g.seed;
    cfg.train.classes = cfg.data.classes;
    try {
        cfg.train.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("", 0, e.what());
    }
    return cfg;
}

fs::path prepare_out(const Globals& g, const RunConfig& cfg) {
    const fs::path out(g.out);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
    std::ofstream os(out / "config.resolved");
    os << resolved_config_text(cfg);
    if (!os) throw IoError("cannot write " + (out / "config.resolved").string());
    return out;
}

std::ofstream open_csv(const fs::path& path, const char* header) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path.string());
    if (header) os << header << '\n';
    return os;
}

Dataset dataset_for(const RunConfig& cfg, const std::string& manifest_flag) {
    const std::string manifest = manifest_flag.empty() ? cfg.manifest : manifest_flag;
    if (manifest.empty()) throw ConfigError("manifest", 0, "a dataset manifest is required (key 'manifest' or --manifest)");
    return load_dataset(read_manifest(manifest));
}

TrainerState state_for(const RunConfig& cfg, const std::string& checkpoint_flag) {
    const std::string path = checkpoint_flag.empty() ? cfg.checkpoint : checkpoint_flag;
    if (path.empty()) throw ConfigError("checkpoint", 0, "a checkpoint is required (key 'checkpoint' or --checkpoint)");
    TrainerState state = TrainerState::initial(cfg.train);
    checkpoint_load(path, state);
    return state;
}

const SegNetParams& network_of(const TrainerState& state, const RunConfig& cfg) {
    return parse_eval_network(cfg.eval_network) == EvalNetwork::teacher ? state.teacher : state.student;
}

int cmd_gen_data(const Globals& g) {
    const RunConfig cfg = load_config(g);
    const fs::path out = prepare_out(g, cfg);
    const DatasetManifest m = gen_dataset(cfg.train.seed, cfg.data, out);
    std::printf("wrote %zu samples and %s\n", m.records.size(), (out / "manifest.tsv").string().c_str());
    return kExitOk;
}

int cmd_train(const Globals& g, const std::string& manifest, bool quiet) {
    const RunConfig cfg = load_config(g);
    const Dataset data = dataset_for(cfg, manifest);
    const fs::path out = prepare_out(g, cfg);
    const Split split = parse_split(cfg.eval_split);
    const std::vector<std::size_t> eval_idx = split_indices(data, split);

    std::ofstream steps = open_csv(out / "steps.csv", kStepLogHeader);
    std::ofstream evals = open_csv(out / "eval.csv", kEvalHeader);
    Trainer trainer(cfg.train, data);
    TrainCallbacks cb;
    const std::int64_t every = std::max<std::int64_t>(1, cfg.train.iterations / 20);
    cb.on_step = [&](const StepReport& r) {
        steps << format_step_row(r) << '\n';
        if (!quiet && (r.iteration + 1) % every == 0)
            std::printf("iter %6lld  loss %.4f  sup %.4f  cons %.4f  tsa %.4f  alpha %.3f\n",
                        static_cast<long long>(r.iteration + 1), r.loss_total, r.loss_sup, r.loss_cons, r.loss_tsa,
                        r.alpha);
    };
    cb.on_eval = [&](std::int64_t iter, const EvalResult& e) {
        write_eval_rows(evals, iter, split, e.aggregate);
        if (!quiet)
            std::printf("eval @%lld on %s: dice %.4f  jaccard %.4f  hd95 %.3f  asd %.3f\n",
                        static_cast<long long>(iter), to_string(split), e.aggregate.dice, e.aggregate.jaccard,
                        e.aggregate.hd95, e.aggregate.asd);
    };
    run_training(trainer, eval_idx, cb, parse_eval_network(cfg.eval_network));
    trainer.save_checkpoint(out / "checkpoint.tms");
    if (!steps || !evals) throw IoError("failed while writing CSV output");
    return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& manifest, const std::string& checkpoint) {
    const RunConfig cfg = load_config(g);
    const Dataset data = dataset_for(cfg, manifest);
    const TrainerState state = state_for(cfg, checkpoint);
    const fs::path out = prepare_out(g, cfg);
    const Split split = parse_split(cfg.eval_split);
    const std::vector<std::size_t> idx = split_indices(data, split);
    const EvalResult e = evaluate(network_of(state, cfg), data, idx);

    std::ofstream per = open_csv(out / "eval_per_sample.csv", kPerSampleHeader);
    write_per_sample_rows(per, data, e);
    std::ofstream agg = open_csv(out / "eval.csv", kEvalHeader);
    write_eval_rows(agg, state.iteration, split, e.aggregate);
    if (!per || !agg) throw IoError("failed while writing CSV output");
    std::printf("%zu samples (%s): dice %.4f  jaccard %.4f  hd95 %.3f  asd %.3f  sentinels %zu\n", e.samples.size(),
                to_string(split), e.aggregate.dice, e.aggregate.jaccard, e.aggregate.hd95, e.aggregate.asd,
                e.aggregate.sentinel_count);
    return kExitOk;
}

int cmd_check(const Globals& g, bool ablation) {
    const RunConfig cfg = load_config(g);
    const fs::path out = prepare_out(g, cfg);
    std::vector<verify::CheckResult> results = verify::run_suite(cfg.train.seed, out / "check_scratch");
    if (ablation) {
        verify::AblationOptions opt;
        opt.train = cfg.train;
        opt.data = cfg.data;
        opt.beta = cfg.train.beta;
        opt.progress = [](const std::string& line) { std::printf("  %s\n", line.c_str()); };
        results.push_back(verify::run_ablation(opt).check);
    }
    std::ofstream report = open_csv(out / "check.csv", "check,passed,seconds,detail");
    bool all = true;
    for (const auto& r : results) {
        std::printf("[%s] %-20s %7.2fs  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.seconds, r.detail.c_str());
        std::string detail = r.detail;
        std::replace(detail.begin(), detail.end(), '"', '\'');
        report << r.name << ',' << (r.passed ? 1 : 0) << ',' << r.seconds << ",\"" << detail << "\"\n";
        all = all && r.passed;
    }
    return all ? kExitOk : kExitCheckFailed;
}

int cmd_export(const Globals& g, const std::string& manifest, const std::string& checkpoint) {
    const RunConfig cfg = load_config(g);
    const Dataset data = dataset_for(cfg, manifest);
    const TrainerState state = state_for(cfg, checkpoint);
    const fs::path out = prepare_out(g, cfg);
    const SegNetParams& net = network_of(state, cfg);
    if (data.samples.empty()) throw IoError("dataset is empty");

    // Draw (sample, pixel) pairs up front, then run each sample through the network once.
    Rng rng(derive_seed(cfg.train.seed, 0xfea7));
    std::map<std::size_t, std::vector<std::size_t>> wanted;
    for (std::size_t k = 0; k < cfg.export_samples; ++k) {
        const std::size_t s = rng.uniform_index(data.samples.size());
        wanted[s].push_back(rng.uniform_index(data.samples[s].height * data.samples[s].width));
    }
    std::ofstream os = open_csv(out / "features.csv", nullptr);
    os << "domain,class";
    for (std::size_t c = 0; c < net.feature_dim(); ++c) os << ",f" << c;
    os << '\n';
    char buf[32];
    for (auto& [s, pixels] : wanted) {
        std::sort(pixels.begin(), pixels.end());
        const Sample& sample = data.samples[s];
        Tensor3 features, logits;
        infer(net, to_tensor(sample), features, logits);
        const char* domain = data.records[s].domain == Domain::source ? "source" : "target";
        for (std::size_t p : pixels) {
            os << domain << ',' << static_cast<int>(sample.label[p]);
            for (std::size_t c = 0; c < features.channels; ++c) {
                std::snprintf(buf, sizeof buf, "%.9g", features.values[c * features.pixels() + p]);
                os << ',' << buf;
            }
            os << '\n';
        }
    }
    if (!os) throw IoError("failed while writing features.csv");
    std::printf("wrote %zu feature rows to %s\n", cfg.export_samples, (out / "features.csv").string().c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    tune_allocator();
    CLI::App app{"Semi-supervised segmentation with transferable semantic augmentation on synthetic shifted data"};
    app.footer(kCsvHelp);
    app.require_subcommand(1);
    Globals g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "key = value configuration file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "overrides the configured seed");
    app.add_option("--out", g.out, "output directory")->capture_default_str();
    app.add_option("--set", g.set, "extra key=value assignments applied after the config file");

    std::string manifest, checkpoint;
    bool quiet = false, ablation = false;
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic source/target dataset and manifest.tsv");
    auto* train = app.add_subcommand("train", "train student/teacher; writes steps.csv, eval.csv, checkpoint.tms");
    train->add_option("--manifest", manifest, "dataset manifest (overrides the config key)");
    train->add_flag("--quiet", quiet, "suppress progress output");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint; writes eval_per_sample.csv and eval.csv");
    eval->add_option("--manifest", manifest, "dataset manifest (overrides the config key)");
    eval->add_option("--checkpoint", checkpoint, "checkpoint file (overrides the config key)");
    auto* check = app.add_subcommand("check", "run the numerical verification suite; exit 1 on any failure");
    check->add_flag("--ablation", ablation, "also run the paired beta ablation (slow)");
    auto* exp = app.add_subcommand("export-features", "write sampled per-pixel features to features.csv");
    exp->add_option("--manifest", manifest, "dataset manifest (overrides the config key)");
    exp->add_option("--checkpoint", checkpoint, "checkpoint file (overrides the config key)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    if (*seed_opt) g.seed = seed;

    try {
        if (*gen) return cmd_gen_data(g);
        if (*train) return cmd_train(g, manifest, quiet);
        if (*eval) return cmd_eval(g, manifest, checkpoint);
        if (*check) return cmd_check(g, ablation);
        if (*exp) return cmd_export(g, manifest, checkpoint);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "I/O error (%s): %s\n", to_string(e.code()), e.what());
        return e.code() == FormatErrc::dimension_mismatch ? kExitConfig : kExitIo;
    } catch (const IoError& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitIo;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    }
    return kExitOk;
}
