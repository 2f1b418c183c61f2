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

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tsaseg/metrics.hpp"
#include "tsaseg/mixer.hpp"
#include "tsaseg/network.hpp"
#include "tsaseg/stats_bank.hpp"
#include "tsaseg/synth_data.hpp"
#include "tsaseg/tsa_loss.hpp"

namespace tsaseg {

struct TrainConfig {
    double beta = 0.4;
    double lambda_teacher = 0.99;
    double stats_momentum = 0.99;
    double tau = 0.95;
    double alpha_max = 0.5;
    std::int64_t ramp_steps = -1; // negative: half of `iterations`
    ShiftDirection direction = ShiftDirection::target_minus_source;
    double lr = 0.01;
    double sgd_momentum = 0.9;
    double grad_clip = 0.0; // global gradient-norm ceiling; 0 disables
    std::int64_t iterations = 4000;
    std::size_t batch_labeled = 1;
    std::size_t batch_unlabeled = 1;
    std::uint64_t seed = 0;
    MixWeights mix;
    std::int64_t eval_interval = 0; // 0 disables periodic evaluation
    std::size_t feature_dim = 16;
    std::size_t classes = 3;

    TsaConfig tsa() const;
    void validate() const;
};

struct SupervisedLoss {
    double value = 0.0;
    double cross_entropy = 0.0;
    double dice_loss = 0.0;
    Tensor3 grad_logits;
};

/// 0.5 * weighted mean pixel CE + 0.5 * (1 - mean weighted soft Dice over foreground classes).
SupervisedLoss supervised_loss(const Tensor3& logits, std::span<const Label> target, std::span<const double> weight);

/// Softmax over channels, returned pixel-major (pixels x classes).
std::vector<double> pixel_probabilities(const Tensor3& logits);
/// Argmax over channels, lowest index on ties.
std::vector<Label> argmax_labels(const Tensor3& logits);

struct StepReport {
    std::int64_t iteration = 0;
    double loss_total = 0.0;
    double loss_sup = 0.0;
    double loss_cons = 0.0;
    double loss_tsa = 0.0;
    double alpha = 0.0;
    std::vector<std::size_t> confident_pixels; // per class
    double grad_norm = 0.0;                    // before clipping

    bool operator==(const StepReport&) const = default;
};

struct TrainerState {
    SegNetParams student;
    SegNetParams teacher;
    SegNetParams velocity;
    StatsBank bank;
    Rng rng;
    std::int64_t iteration = 0;

    /// Student initialized from Rng(seed); teacher starts as a copy.
    static TrainerState initial(const TrainConfig& cfg);
    bool operator==(const TrainerState&) const = default;
};

/// One optimisation step on the given batches (unlabeled may be empty).
StepReport train_step(TrainerState& state, const TrainConfig& cfg, std::span<const Sample* const> labeled,
                      std::span<const Sample* const> unlabeled);

enum class Split { source, target, source_labeled, source_unlabeled, all };
Split parse_split(const std::string& name);
const char* to_string(Split split);
std::vector<std::size_t> split_indices(const Dataset& data, Split split);

class Trainer {
public:
    /// Labelled pool: labelled source records. Unlabelled pool: target records.
    Trainer(TrainConfig cfg, const Dataset& data);

    /// Draws batches from the state's generator and runs train_step.
    StepReport step();

    const TrainConfig& config() const { return cfg_; }
    const Dataset& data() const { return *data_; }
    const TrainerState& state() const { return state_; }
    TrainerState& state() { return state_; }

    void save_checkpoint(const std::filesystem::path& path) const;
    void load_checkpoint(const std::filesystem::path& path);

private:
    TrainConfig cfg_;
    const Dataset* data_;
    std::vector<std::size_t> labeled_;
    std::vector<std::size_t> unlabeled_;
    TrainerState state_;
};

struct EvalResult {
    std::vector<std::size_t> samples;
    std::vector<MetricsRow> per_sample;
    MetricsRow aggregate;
};

EvalResult evaluate(const SegNetParams& params, const Dataset& data, std::span<const std::size_t> indices);

// Checkpoint file: "TMS1", u32 version, then u64-length-prefixed sections
// (student, teacher, bank, optimizer, rng, counter), little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void checkpoint_save(const std::filesystem::path& path, const TrainerState& state);
/// Loads into `state`, whose current shapes define the expected dimensions.
void checkpoint_load(const std::filesystem::path& path, TrainerState& state);

// CSV reporting. Column orders are fixed.
inline constexpr const char* kStepLogHeader = "iter,loss_total,loss_sup,loss_cons,loss_tsa,alpha,confident_pixels";
inline constexpr const char* kEvalHeader = "iter,split,class,dice,jaccard,hd95,asd,boundary_sentinel_count";
inline constexpr const char* kPerSampleHeader = "sample,class,dice,jaccard,hd95,asd,boundary_sentinel";

/// confident_pixels is written as per-class counts joined by ';'.
std::string format_step_row(const StepReport& r);
/// One row per foreground class plus a "mean" row.
void write_eval_rows(std::ostream& os, std::int64_t iteration, Split split, const MetricsRow& row);
void write_per_sample_rows(std::ostream& os, const Dataset& data, const EvalResult& result);

struct TrainCallbacks {
    std::function<void(const StepReport&)> on_step;
    std::function<void(std::int64_t, const EvalResult&)> on_eval;
};

enum class EvalNetwork { student, teacher };
EvalNetwork parse_eval_network(const std::string& name);

/// Runs cfg.iterations steps; evaluates `eval_indices` every eval_interval steps and at the end.
EvalResult run_training(Trainer& trainer, std::span<const std::size_t> eval_indices, const TrainCallbacks& cb = {},
                        EvalNetwork network = EvalNetwork::student);

} // namespace tsaseg
