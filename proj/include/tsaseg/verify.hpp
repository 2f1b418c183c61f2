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
#include <span>
#include <string>
#include <vector>

#include "tsaseg/network.hpp"
#include "tsaseg/stats_bank.hpp"
#include "tsaseg/synth_data.hpp"
#include "tsaseg/trainer.hpp"

namespace tsaseg::verify {

// Reference implementations written independently of the production code paths.
// They favour obviousness over speed.
namespace oracle {

/// v^T A v with A dense row-major, summed in long double.
double quad_form(std::span<const double> dense, std::span<const double> v);

/// Per-pixel bound loss evaluated from dense inputs in long double.
double bound_loss(std::span<const double> f, Label y, const ClassifierHead& head, std::span<const double> dmu,
                  std::span<const double> cov_dense, double alpha);

/// Plain softmax cross-entropy in long double.
double cross_entropy(std::span<const double> logits, Label y);

struct NetOutput {
    Tensor3 features;
    Tensor3 logits;
};
/// Direct nested-loop convolution forward pass.
NetOutput forward(const SegNetParams& params, const Tensor3& image);

/// Moments of the union of two disjoint pixel sets from their own moments.
BatchMoments pool(const BatchMoments& a, const BatchMoments& b);

/// Linear-interpolation percentile on a sorted copy.
double percentile(std::vector<double> values, double q);

struct Surface {
    double hd95 = 0.0;
    double asd = 0.0;
    bool sentinel = false;
};
/// All-pairs surface distances; surfaces found by scanning 4-neighbourhoods.
Surface surface_distance(std::size_t height, std::size_t width, std::span<const std::uint8_t> pred,
                         std::span<const std::uint8_t> gt);

} // namespace oracle

/// |a - b| / max(|a|, |b|, 1e-6)
double relative_error(double analytic, double numeric);

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

CheckResult check_ce_collapse(std::uint64_t seed, std::size_t instances = 1000);

/// Jensen bound and MGF tightness share their random instances.
struct BoundChecks {
    CheckResult jensen;
    CheckResult tightness;
};
BoundChecks check_bound(std::uint64_t seed, std::size_t instances = 50, std::size_t draws = 100000);

CheckResult check_gradients(std::uint64_t seed);
CheckResult check_stats_convergence(std::uint64_t seed);
CheckResult check_metric_oracles(std::uint64_t seed, std::size_t pairs = 200);
CheckResult check_teacher_contracts(std::uint64_t seed);
/// Writes step logs and a checkpoint under `scratch`.
CheckResult check_determinism(std::uint64_t seed, const std::filesystem::path& scratch);

/// Everything above, in order.
std::vector<CheckResult> run_suite(std::uint64_t seed, const std::filesystem::path& scratch);

struct AblationOptions {
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    TrainConfig train;           // beta is overridden per arm
    DatasetSpec data;            // training set; a held-out copy with a different seed is evaluated
    double beta = 0.4;
    std::size_t threads = 0;     // 0: hardware concurrency
    std::function<void(const std::string&)> progress;
};

struct AblationRun {
    std::uint64_t seed = 0;
    double dice_baseline = 0.0;
    double dice_tsa = 0.0;
};

struct AblationResult {
    std::vector<AblationRun> runs;
    double mean_improvement = 0.0;
    CheckResult check;
};

/// Paired beta = 0 versus beta = options.beta runs, scored by target-domain Dice.
AblationResult run_ablation(const AblationOptions& options);

} // namespace tsaseg::verify
