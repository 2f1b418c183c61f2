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

namespace tsaseg {

using Label = std::uint8_t;
/// Label value for pixels excluded from statistics (e.g. unconfident pseudo-labels).
inline constexpr Label kIgnoreLabel = 255;

/// Row-major collection of per-pixel feature vectors (count x dim).
struct PixelFeatures {
    std::size_t count = 0;
    std::size_t dim = 0;
    std::vector<double> values;

    PixelFeatures() = default;
    PixelFeatures(std::size_t n, std::size_t d) : count(n), dim(d), values(n * d, 0.0) {}

    std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * dim, dim}; }
};

enum class Domain : std::uint8_t { source = 0, target = 1 };

/// Sign convention for the inter-domain mean shift. The covariance used for
/// augmentation follows the domain the shift points towards.
enum class ShiftDirection : std::uint8_t { target_minus_source = 0, source_minus_target = 1 };

struct BatchMoments {
    Vec mean;
    SymMat cov;
    std::size_t count = 0;
};

/// Mean and biased (divide-by-n) covariance of the pixels labelled `c`.
BatchMoments batch_class_stats(const PixelFeatures& features, std::span<const Label> labels, Label c);

struct ClassStats {
    Vec mean;
    SymMat cov;
    double weight = 0.0;

    explicit ClassStats(std::size_t dim = 0) : mean(dim), cov(dim) {}
    bool initialized() const { return weight > 0.0; }
    bool operator==(const ClassStats&) const = default;
};

class StatsBank {
public:
    StatsBank() = default;
    StatsBank(std::size_t classes, std::size_t dim, double momentum);

    std::size_t classes() const { return source_.size(); }
    std::size_t dim() const { return dim_; }
    double momentum() const { return momentum_; }

    const ClassStats& stats(Domain domain, Label c) const;
    ClassStats& stats(Domain domain, Label c);

    /// Empty batches are ignored; the first nonempty batch is installed verbatim.
    void ema_update(Domain domain, Label c, const BatchMoments& batch);

    /// Zero whenever either side of class `c` is uninitialized.
    Vec delta_mu(Label c, ShiftDirection direction) const;
    /// Covariance of the domain that delta_mu points to.
    const SymMat& augmentation_cov(Label c, ShiftDirection direction) const;
    bool class_ready(Label c) const;

    bool operator==(const StatsBank&) const = default;

private:
    std::size_t dim_ = 0;
    double momentum_ = 0.99;
    std::vector<ClassStats> source_;
    std::vector<ClassStats> target_;
};

struct ConfidentPixels {
    std::vector<Label> pseudo_labels; // argmax class, lowest index wins ties
    std::vector<std::uint8_t> selected;
    std::size_t selected_count = 0;
};

/// `probs` is row-major (pixels x classes).
ConfidentPixels confident_pixels(std::span<const double> probs, std::size_t classes, double tau);

} // namespace tsaseg
