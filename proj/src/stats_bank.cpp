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

#include "tsaseg/stats_bank.hpp"

#include <cmath>
#include <stdexcept>

namespace tsaseg {

BatchMoments batch_class_stats(const PixelFeatures& features, std::span<const Label> labels, Label c) {
    if (labels.size() != features.count)
        throw DimensionError("batch_class_stats: features and labels are not aligned");
    const std::size_t d = features.dim;
    BatchMoments out{Vec(d), SymMat(d), 0};

    for (std::size_t i = 0; i < features.count; ++i) {
        if (labels[i] != c) continue;
        const auto f = features.row(i);
        for (std::size_t k = 0; k < d; ++k) out.mean[k] += f[k];
        ++out.count;
    }
    if (out.count == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(out.count);
    for (double& m : out.mean) m *= inv_n;
    if (out.count == 1) return out;

    Vec centered(d);
    for (std::size_t i = 0; i < features.count; ++i) {
        if (labels[i] != c) continue;
        const auto f = features.row(i);
        for (std::size_t k = 0; k < d; ++k) centered[k] = f[k] - out.mean[k];
        out.cov.add_outer(centered.span(), 1.0);
    }
    out.cov.scale(inv_n);
    return out;
}

StatsBank::StatsBank(std::size_t classes, std::size_t dim, double momentum)
    : dim_(dim), momentum_(momentum), source_(classes, ClassStats(dim)), target_(classes, ClassStats(dim)) {
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw std::invalid_argument("StatsBank: momentum must lie in [0, 1]");
}

const ClassStats& StatsBank::stats(Domain domain, Label c) const {
    const auto& side = domain == Domain::source ? source_ : target_;
    if (c >= side.size()) throw std::out_of_range("StatsBank: class index out of range");
    return side[c];
}

ClassStats& StatsBank::stats(Domain domain, Label c) {
    auto& side = domain == Domain::source ? source_ : target_;
    if (c >= side.size()) throw std::out_of_range("StatsBank: class index out of range");
    return side[c];
}

void StatsBank::ema_update(Domain domain, Label c, const BatchMoments& batch) {
    if (batch.count == 0) return;
    if (batch.mean.size() != dim_ || batch.cov.dim() != dim_)
        throw DimensionError("StatsBank::ema_update: batch dimension mismatch");
    ClassStats& s = stats(domain, c);
    if (!s.initialized()) {
        s.mean = batch.mean;
        s.cov = batch.cov;
        s.weight = 1.0;
        return;
    }
    const double m = momentum_;
    for (std::size_t k = 0; k < dim_; ++k) s.mean[k] = m * s.mean[k] + (1.0 - m) * batch.mean[k];
    s.cov.scale(m);
    s.cov.axpy(1.0 - m, batch.cov);
    s.weight = m * s.weight + (1.0 - m);
}

bool StatsBank::class_ready(Label c) const {
    return stats(Domain::source, c).initialized() && stats(Domain::target, c).initialized();
}

Vec StatsBank::delta_mu(Label c, ShiftDirection direction) const {
    Vec out(dim_);
    if (!class_ready(c)) return out;
    const Vec& src = stats(Domain::source, c).mean;
    const Vec& tgt = stats(Domain::target, c).mean;
    for (std::size_t k = 0; k < dim_; ++k)
        out[k] = direction == ShiftDirection::target_minus_source ? tgt[k] - src[k] : src[k] - tgt[k];
    return out;
}

const SymMat& StatsBank::augmentation_cov(Label c, ShiftDirection direction) const {
    return stats(direction == ShiftDirection::target_minus_source ? Domain::target : Domain::source, c).cov;
}

ConfidentPixels confident_pixels(std::span<const double> probs, std::size_t classes, double tau) {
    if (classes == 0 || probs.size() % classes != 0)
        throw DimensionError("confident_pixels: probability map is not pixels x classes");
    if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("confident_pixels: tau must lie in (0, 1]");
    const std::size_t n = probs.size() / classes;
    ConfidentPixels out;
    out.pseudo_labels.resize(n);
    out.selected.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = probs.data() + i * classes;
        std::size_t best = 0;
        for (std::size_t c = 1; c < classes; ++c)
            if (p[c] > p[best]) best = c;
        out.pseudo_labels[i] = static_cast<Label>(best);
        out.selected[i] = p[best] >= tau ? 1 : 0;
        out.selected_count += out.selected[i];
    }
    return out;
}

} // namespace tsaseg
