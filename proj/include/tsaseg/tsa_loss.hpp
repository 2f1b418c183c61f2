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
#include <span>
#include <vector>

#include "tsaseg/numerics.hpp"
#include "tsaseg/stats_bank.hpp"

namespace tsaseg {

/// Linear per-pixel classifier: logit_c = w_c . f + b_c.
struct ClassifierHead {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<double> weights; // classes x dim, row-major
    std::vector<double> biases;

    ClassifierHead() = default;
    ClassifierHead(std::size_t c, std::size_t d) : classes(c), dim(d), weights(c * d, 0.0), biases(c, 0.0) {}

    std::span<const double> weight(std::size_t c) const { return {weights.data() + c * dim, dim}; }
    std::span<double> weight(std::size_t c) { return {weights.data() + c * dim, dim}; }

    std::vector<double> logits(std::span<const double> f) const;

    bool operator==(const ClassifierHead&) const = default;
};

struct TsaConfig {
    double alpha_max = 0.5;
    std::int64_t ramp_steps = 0;
    ShiftDirection direction = ShiftDirection::target_minus_source;
};

/// Linear warm-up of the augmentation strength.
double alpha_at(std::int64_t step, const TsaConfig& cfg);

double log_sum_exp(std::span<const double> x);
/// -log softmax(logits)_y
double softmax_cross_entropy(std::span<const double> logits, Label y);
/// Mean plain softmax cross-entropy of the head over a labelled pixel batch.
double mean_cross_entropy(const PixelFeatures& features, std::span<const Label> labels, const ClassifierHead& head);

/// Logits whose softmax cross-entropy equals the closed-form expectation bound for
/// f + delta, delta ~ N(alpha*dmu, alpha*cov):
///   z_c = w_c.f + b_c + alpha*(w_c - w_y).dmu + alpha/2 * (w_c - w_y)^T cov (w_c - w_y).
/// The y-logit is the plain logit.
std::vector<double> augmented_logits(std::span<const double> f, Label y, const ClassifierHead& head,
                                     const Vec& dmu, const SymMat& cov, double alpha);

struct LossReport {
    double value = 0.0;
    PixelFeatures grad_features;
    std::vector<double> grad_weights; // classes x dim
    std::vector<double> grad_biases;
};

/// Mean upper-bound TSA loss over labelled pixels with exact gradients.
/// Per-pixel statistics are looked up by the pixel's label; classes without
/// statistics on both sides fall back to plain cross-entropy.
LossReport tsa_loss(const PixelFeatures& features, std::span<const Label> labels, const ClassifierHead& head,
                    const StatsBank& bank, double alpha,
                    ShiftDirection direction = ShiftDirection::target_minus_source);

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// Monte-Carlo estimate of E[CE(f + delta, y)], delta ~ N(alpha*dmu, alpha*cov), from M draws.
McEstimate mc_explicit_loss(std::span<const double> f, Label y, const ClassifierHead& head, const Vec& dmu,
                            const SymMat& cov, double alpha, std::size_t draws, Rng& rng);

struct BoundTightness {
    double mc_of_bound = 0.0; // log of the MC mean of sum_c exp(dw_c . f~ + db_c)
    double std_error = 0.0;   // delta-method standard error of mc_of_bound
    double closed_form = 0.0;
};

BoundTightness mc_bound_tightness(std::span<const double> f, Label y, const ClassifierHead& head, const Vec& dmu,
                                  const SymMat& cov, double alpha, std::size_t draws, Rng& rng);

} // namespace tsaseg
