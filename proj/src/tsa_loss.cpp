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

#include "tsaseg/tsa_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace tsaseg {

std::vector<double> ClassifierHead::logits(std::span<const double> f) const {
    if (f.size() != dim) throw DimensionError("ClassifierHead::logits: feature dimension mismatch");
    std::vector<double> z(classes);
    for (std::size_t c = 0; c < classes; ++c) z[c] = dot(weight(c), f) + biases[c];
    return z;
}

double alpha_at(std::int64_t step, const TsaConfig& cfg) {
    if (step < 0) throw std::invalid_argument("alpha_at: negative step");
    if (cfg.ramp_steps <= 0) return cfg.alpha_max;
    const double ramp = std::min(static_cast<double>(step) / static_cast<double>(cfg.ramp_steps), 1.0);
    return ramp * cfg.alpha_max;
}

double log_sum_exp(std::span<const double> x) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    double s = 0.0;
    for (double v : x) s += std::exp(v - m);
    return m + std::log(s);
}

double softmax_cross_entropy(std::span<const double> logits, Label y) {
    if (y >= logits.size()) throw std::out_of_range("softmax_cross_entropy: label out of range");
    return log_sum_exp(logits) - logits[y];
}

double mean_cross_entropy(const PixelFeatures& features, std::span<const Label> labels, const ClassifierHead& head) {
    if (features.count == 0) throw std::invalid_argument("mean_cross_entropy: empty batch");
    std::vector<double> per_pixel(features.count);
    for (std::size_t i = 0; i < features.count; ++i)
        per_pixel[i] = softmax_cross_entropy(head.logits(features.row(i)), labels[i]);
    return pairwise_sum(per_pixel) / static_cast<double>(features.count);
}

std::vector<double> augmented_logits(std::span<const double> f, Label y, const ClassifierHead& head,
                                     const Vec& dmu, const SymMat& cov, double alpha) {
    const std::size_t d = head.dim;
    if (f.size() != d || dmu.size() != d || cov.dim() != d)
        throw DimensionError("augmented_logits: dimension mismatch");
    if (y >= head.classes) throw std::out_of_range("augmented_logits: label out of range");
    std::vector<double> z = head.logits(f);
    const auto wy = head.weight(y);
    Vec dw(d);
    for (std::size_t c = 0; c < head.classes; ++c) {
        if (c == y) continue;
        const auto wc = head.weight(c);
        for (std::size_t k = 0; k < d; ++k) dw[k] = wc[k] - wy[k];
        z[c] += alpha * dot(dw.span(), dmu.span()) + 0.5 * alpha * quad_form(cov, dw.span());
    }
    return z;
}

namespace {

/// Per-(label, class) constants of the augmented logits for one batch.
struct AugmentationTable {
    std::size_t classes = 0;
    std::size_t dim = 0;
    std::vector<double> shift;    // [y][c]: alpha*dw.dmu + alpha/2*dw^T S dw
    std::vector<double> grad_dir; // [y][c][k]: alpha*(dmu + S dw), the derivative of shift wrt w_c
    std::vector<std::uint8_t> active;

    AugmentationTable(const ClassifierHead& head, const StatsBank& bank, double alpha, ShiftDirection direction)
        : classes(head.classes), dim(head.dim), shift(classes * classes, 0.0),
          grad_dir(classes * classes * dim, 0.0), active(classes, 0) {
        if (alpha == 0.0) return;
        Vec dw(dim);
        for (std::size_t y = 0; y < classes; ++y) {
            const auto label = static_cast<Label>(y);
            if (!bank.class_ready(label)) continue;
            active[y] = 1;
            const Vec dmu = bank.delta_mu(label, direction);
            const SymMat& cov = bank.augmentation_cov(label, direction);
            const auto wy = head.weight(y);
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                const auto wc = head.weight(c);
                for (std::size_t k = 0; k < dim; ++k) dw[k] = wc[k] - wy[k];
                shift[y * classes + c] = alpha * dot(dw.span(), dmu.span()) + 0.5 * alpha * quad_form(cov, dw.span());
                const Vec s_dw = cov.multiply(dw.span());
                double* g = &grad_dir[(y * classes + c) * dim];
                for (std::size_t k = 0; k < dim; ++k) g[k] = alpha * (dmu[k] + s_dw[k]);
            }
        }
    }
};

} // namespace

LossReport tsa_loss(const PixelFeatures& features, std::span<const Label> labels, const ClassifierHead& head,
                    const StatsBank& bank, double alpha, ShiftDirection direction) {
    const std::size_t n = features.count;
    const std::size_t d = head.dim;
    const std::size_t classes = head.classes;
    if (n == 0) throw std::invalid_argument("tsa_loss: empty batch");
    if (labels.size() != n) throw DimensionError("tsa_loss: features and labels are not aligned");
    if (features.dim != d || bank.dim() != d || bank.classes() != classes)
        throw DimensionError("tsa_loss: bank, head, and feature dimensions disagree");
    if (alpha < 0.0) throw std::invalid_argument("tsa_loss: negative alpha");

    const AugmentationTable table(head, bank, alpha, direction);
    LossReport report;
    report.grad_features = PixelFeatures(n, d);
    report.grad_weights.assign(classes * d, 0.0);
    report.grad_biases.assign(classes, 0.0);

    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> per_pixel(n);
    std::vector<double> z(classes);
    std::vector<double> g(classes);
    for (std::size_t i = 0; i < n; ++i) {
        const Label y = labels[i];
        if (y >= classes) throw std::out_of_range("tsa_loss: label " + std::to_string(y) + " out of range");
        const auto f = features.row(i);
        for (std::size_t c = 0; c < classes; ++c) z[c] = dot(head.weight(c), f) + head.biases[c];
        if (table.active[y]) {
            for (std::size_t c = 0; c < classes; ++c)
                if (c != y) z[c] += table.shift[y * classes + c];
        }
        per_pixel[i] = softmax_cross_entropy(z, y);

        const double lse = log_sum_exp(z);
        for (std::size_t c = 0; c < classes; ++c) g[c] = inv_n * (std::exp(z[c] - lse) - (c == y ? 1.0 : 0.0));

        auto gf = report.grad_features.row(i);
        for (std::size_t c = 0; c < classes; ++c) {
            const auto wc = head.weight(c);
            double* gw = &report.grad_weights[c * d];
            for (std::size_t k = 0; k < d; ++k) {
                gf[k] += g[c] * wc[k];
                gw[k] += g[c] * f[k];
            }
            report.grad_biases[c] += g[c];
        }
        if (table.active[y]) {
            double* gwy = &report.grad_weights[y * d];
            for (std::size_t c = 0; c < classes; ++c) {
                if (c == y) continue;
                const double* dir = &table.grad_dir[(y * classes + c) * d];
                double* gwc = &report.grad_weights[c * d];
                for (std::size_t k = 0; k < d; ++k) {
                    gwc[k] += g[c] * dir[k];
                    gwy[k] -= g[c] * dir[k];
                }
            }
        }
    }
    report.value = pairwise_sum(per_pixel) / static_cast<double>(n);
    return report;
}

namespace {

/// Welford accumulation; a constant stream yields its value exactly.
struct RunningMoments {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    double sample_variance() const { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
};

RunningMoments running_moments(std::span<const double> xs) {
    RunningMoments r;
    for (double x : xs) {
        ++r.count;
        const double delta = x - r.mean;
        r.mean += delta / static_cast<double>(r.count);
        r.m2 += delta * (x - r.mean);
    }
    return r;
}

LowerTriangular perturbation_factor(const SymMat& cov, double alpha, Label y) {
    SymMat scaled = cov;
    scaled.scale(alpha);
    try {
        return cholesky(scaled, default_jitter(scaled));
    } catch (const NotPositiveDefinite& e) {
        throw NotPositiveDefinite(std::string(e.what()) + " [class " + std::to_string(y) + "]");
    }
}

Vec scaled_mean(const Vec& dmu, double alpha) {
    Vec m(dmu.size());
    for (std::size_t k = 0; k < dmu.size(); ++k) m[k] = alpha * dmu[k];
    return m;
}

void check_mc_inputs(std::span<const double> f, Label y, const ClassifierHead& head, const Vec& dmu,
                     const SymMat& cov, double alpha, std::size_t draws) {
    if (draws == 0) throw std::invalid_argument("Monte-Carlo estimate needs at least one draw");
    if (alpha < 0.0) throw std::invalid_argument("Monte-Carlo estimate: negative alpha");
    if (f.size() != head.dim || dmu.size() != head.dim || cov.dim() != head.dim)
        throw DimensionError("Monte-Carlo estimate: dimension mismatch");
    if (y >= head.classes) throw std::out_of_range("Monte-Carlo estimate: label out of range");
}

} // namespace

McEstimate mc_explicit_loss(std::span<const double> f, Label y, const ClassifierHead& head, const Vec& dmu,
                            const SymMat& cov, double alpha, std::size_t draws, Rng& rng) {
    check_mc_inputs(f, y, head, dmu, cov, alpha, draws);
    const LowerTriangular chol = perturbation_factor(cov, alpha, y);
    const Vec mean = scaled_mean(dmu, alpha);
    const std::size_t d = head.dim;

    std::vector<double> losses(draws);
    Vec shifted(d);
    for (std::size_t m = 0; m < draws; ++m) {
        const Vec delta = sample_gaussian(mean, chol, rng);
        for (std::size_t k = 0; k < d; ++k) shifted[k] = f[k] + delta[k];
        losses[m] = softmax_cross_entropy(head.logits(shifted.span()), y);
    }
    const RunningMoments moments = running_moments(losses);
    McEstimate est;
    est.mean = moments.mean;
    est.std_error = std::sqrt(moments.sample_variance() / static_cast<double>(draws));
    return est;
}

BoundTightness mc_bound_tightness(std::span<const double> f, Label y, const ClassifierHead& head, const Vec& dmu,
                                  const SymMat& cov, double alpha, std::size_t draws, Rng& rng) {
    check_mc_inputs(f, y, head, dmu, cov, alpha, draws);
    BoundTightness out;
    out.closed_form = softmax_cross_entropy(augmented_logits(f, y, head, dmu, cov, alpha), y);

    const LowerTriangular chol = perturbation_factor(cov, alpha, y);
    const Vec mean = scaled_mean(dmu, alpha);
    const std::size_t d = head.dim;
    const auto wy = head.weight(y);

    // Sums are taken relative to exp(closed_form) to stay in range.
    const double shift = out.closed_form;
    std::vector<double> sums(draws);
    Vec shifted(d);
    for (std::size_t m = 0; m < draws; ++m) {
        const Vec delta = sample_gaussian(mean, chol, rng);
        for (std::size_t k = 0; k < d; ++k) shifted[k] = f[k] + delta[k];
        double s = 0.0;
        for (std::size_t c = 0; c < head.classes; ++c) {
            const auto wc = head.weight(c);
            double a = head.biases[c] - head.biases[y];
            for (std::size_t k = 0; k < d; ++k) a += (wc[k] - wy[k]) * shifted[k];
            s += std::exp(a - shift);
        }
        sums[m] = s;
    }
    const RunningMoments moments = running_moments(sums);
    out.mc_of_bound = shift + std::log(moments.mean);
    out.std_error = std::sqrt(moments.sample_variance() / static_cast<double>(draws)) / moments.mean;
    return out;
}

} // namespace tsaseg
