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

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "tsaseg/verify.hpp"

namespace tsaseg::verify {

namespace {

using Clock = std::chrono::steady_clock;

std::string printf_string(const char* fmt, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.uniform_index(hi - lo + 1); }

/// B B^T * scale / d + floor * I
SymMat random_spd(Rng& rng, std::size_t d, double scale, double floor) {
    std::vector<double> b(d * d);
    for (double& v : b) v = rng.normal();
    SymMat s(d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            double v = 0.0;
            for (std::size_t k = 0; k < d; ++k) v += b[i * d + k] * b[j * d + k];
            s.set(i, j, v * scale / static_cast<double>(d) + (i == j ? floor : 0.0));
        }
    return s;
}

ClassifierHead random_head(Rng& rng, std::size_t classes, std::size_t d, double w_scale, double b_scale) {
    ClassifierHead head(classes, d);
    for (double& w : head.weights) w = w_scale * rng.normal();
    for (double& b : head.biases) b = b_scale * rng.normal();
    return head;
}

Vec random_vec(Rng& rng, std::size_t d, double scale) {
    Vec v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = scale * rng.normal();
    return v;
}

/// Bank whose classes are independently ready, half-ready or empty.
StatsBank random_bank(Rng& rng, std::size_t classes, std::size_t d, bool all_ready) {
    StatsBank bank(classes, d, 0.99);
    for (std::size_t c = 0; c < classes; ++c)
        for (Domain domain : {Domain::source, Domain::target}) {
            if (!all_ready && rng.uniform() < 0.25) continue;
            ClassStats& s = bank.stats(domain, static_cast<Label>(c));
            s.mean = random_vec(rng, d, 0.5);
            s.cov = random_spd(rng, d, 0.4, 0.01);
            s.weight = 1.0;
        }
    return bank;
}

PixelFeatures random_features(Rng& rng, std::size_t n, std::size_t d) {
    PixelFeatures p(n, d);
    for (double& v : p.values) v = rng.normal();
    return p;
}

std::vector<Label> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
    std::vector<Label> l(n);
    for (Label& v : l) v = static_cast<Label>(rng.uniform_index(classes));
    return l;
}

struct GradTally {
    double worst = 0.0;
    std::size_t probes = 0;
    std::size_t skipped = 0;
    std::size_t redraws = 0;

    void add(double analytic, double numeric) {
        worst = std::max(worst, relative_error(analytic, numeric));
        ++probes;
    }
};

constexpr double kFdStep = 1e-5;
constexpr double kKinkMargin = 1e-4;

/// Central difference of `f` with respect to `x`, restoring x afterwards.
template <class F>
double central(double& x, F&& f) {
    const double x0 = x;
    x = x0 + kFdStep;
    const double up = f();
    x = x0 - kFdStep;
    const double down = f();
    x = x0;
    return (up - down) / (2.0 * kFdStep);
}

std::vector<std::uint8_t> relu_pattern(const ForwardCache& c) {
    std::vector<std::uint8_t> p;
    p.reserve(c.pre1.values.size() + c.pre2.values.size() + c.pre3.values.size());
    for (const Tensor3* t : {&c.pre1, &c.pre2, &c.pre3})
        for (double v : t->values) p.push_back(v > 0.0 ? 1 : 0);
    return p;
}

Dataset small_dataset(std::uint64_t seed) {
    DatasetSpec spec;
    spec.height = 32;
    spec.width = 32;
    spec.n_source = 4;
    spec.n_target = 4;
    spec.labeled_fraction = 0.5;
    return gen_dataset(seed, spec);
}

TrainConfig small_config(std::uint64_t seed) {
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.iterations = 12;
    cfg.batch_labeled = 2;
    cfg.batch_unlabeled = 2;
    cfg.feature_dim = 8;
    cfg.tau = 0.5;
    return cfg;
}

} // namespace

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

CheckResult check_ce_collapse(std::uint64_t seed, std::size_t instances) {
    const auto t0 = Clock::now();
    CheckResult r{"ce_collapse", true, "", 0.0};
    double worst = 0.0;
    double worst_oracle = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, i));
        const std::size_t d = pick(rng, 1, 8);
        const std::size_t classes = pick(rng, 2, 5);
        const std::size_t n = pick(rng, 1, 48);
        const ClassifierHead head = random_head(rng, classes, d, 1.0, 1.0);
        const StatsBank bank = random_bank(rng, classes, d, false);
        const PixelFeatures f = random_features(rng, n, d);
        const std::vector<Label> y = random_labels(rng, n, classes);
        const auto dir = rng.uniform() < 0.5 ? ShiftDirection::target_minus_source : ShiftDirection::source_minus_target;

        const double loss = tsa_loss(f, y, head, bank, 0.0, dir).value;
        worst = std::max(worst, std::abs(loss - mean_cross_entropy(f, y, head)));
        long double ref = 0.0L;
        for (std::size_t k = 0; k < n; ++k) ref += oracle::cross_entropy(head.logits(f.row(k)), y[k]);
        worst_oracle = std::max(worst_oracle, std::abs(loss - static_cast<double>(ref / static_cast<long double>(n))));
    }
    r.passed = worst <= 1e-12 && worst_oracle <= 1e-12;
    r.seconds = seconds_since(t0);
    r.detail = printf_string("%zu instances; max |tsa(0) - mean CE| = %.3g, max |tsa(0) - oracle| = %.3g (tol 1e-12)",
                             instances, worst, worst_oracle);
    r.passed = r.passed && r.seconds < 5.0;
    return r;
}

BoundChecks check_bound(std::uint64_t seed, std::size_t instances, std::size_t draws) {
    const auto t0 = Clock::now();
    const double alphas[] = {0.25, 0.5, 1.0};
    std::size_t jensen_fail = 0, tight_fail = 0, evaluations = 0;
    double worst_jensen_z = -std::numeric_limits<double>::infinity();
    double worst_tight_z = 0.0;
    double worst_closed = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, i));
        const std::size_t d = pick(rng, 1, 8);
        const std::size_t classes = pick(rng, 2, 5);
        const ClassifierHead head = random_head(rng, classes, d, 0.3, 0.5);
        const Vec f = random_vec(rng, d, 1.0);
        const Label y = static_cast<Label>(rng.uniform_index(classes));
        const Vec dmu = random_vec(rng, d, 0.5);
        const SymMat cov = random_spd(rng, d, 0.8, 0.0);
        const std::vector<double> dense = cov.to_dense();
        for (std::size_t a = 0; a < 3; ++a) {
            const double alpha = alphas[a];
            const double closed = softmax_cross_entropy(augmented_logits(f.span(), y, head, dmu, cov, alpha), y);
            worst_closed = std::max(worst_closed,
                                    std::abs(closed - oracle::bound_loss(f.span(), y, head, dmu.span(), dense, alpha)));

            Rng mc_rng(derive_seed(derive_seed(seed, i), 2 * a + 1));
            const McEstimate mc = mc_explicit_loss(f.span(), y, head, dmu, cov, alpha, draws, mc_rng);
            const double z = (mc.mean - closed) / std::max(mc.std_error, 1e-300);
            worst_jensen_z = std::max(worst_jensen_z, z);
            if (mc.mean > closed + 3.0 * mc.std_error) ++jensen_fail;

            Rng tight_rng(derive_seed(derive_seed(seed, i), 2 * a + 2));
            const BoundTightness t = mc_bound_tightness(f.span(), y, head, dmu, cov, alpha, draws, tight_rng);
            const double tz = std::abs(t.mc_of_bound - t.closed_form) / std::max(t.std_error, 1e-300);
            worst_tight_z = std::max(worst_tight_z, tz);
            if (std::abs(t.mc_of_bound - t.closed_form) > 3.0 * t.std_error) ++tight_fail;
            ++evaluations;
        }
    }
    const double secs = seconds_since(t0);
    BoundChecks out;
    out.jensen.name = "jensen_bound";
    out.jensen.passed = jensen_fail == 0 && worst_closed <= 1e-10 && secs < 120.0;
    out.jensen.seconds = secs;
    out.jensen.detail = printf_string("%zu evaluations (M = %zu); %zu above bound + 3 SE; max (MC - bound)/SE = %.2f; "
                                      "closed form vs oracle %.3g",
                                      evaluations, draws, jensen_fail, worst_jensen_z, worst_closed);
    out.tightness.name = "mgf_tightness";
    out.tightness.passed = tight_fail == 0;
    out.tightness.seconds = secs;
    out.tightness.detail = printf_string("%zu evaluations; %zu outside 3 SE; max |MC - closed|/SE = %.2f", evaluations,
                                         tight_fail, worst_tight_z);
    return out;
}

CheckResult check_gradients(std::uint64_t seed) {
    const auto t0 = Clock::now();
    Rng rng(seed);
    GradTally tsa, sup, net;

    // TSA loss with respect to features, weights and biases.
    for (int trial = 0; trial < 4; ++trial) {
        const std::size_t d = 3 + static_cast<std::size_t>(trial);
        const std::size_t classes = 2 + static_cast<std::size_t>(trial % 3);
        const std::size_t n = 7;
        ClassifierHead head = random_head(rng, classes, d, 0.8, 0.5);
        const StatsBank bank = random_bank(rng, classes, d, trial % 2 == 0);
        PixelFeatures f = random_features(rng, n, d);
        const std::vector<Label> y = random_labels(rng, n, classes);
        const double alpha = 0.3 + 0.2 * trial;
        const auto dir = trial == 3 ? ShiftDirection::source_minus_target : ShiftDirection::target_minus_source;
        const LossReport rep = tsa_loss(f, y, head, bank, alpha, dir);
        auto value = [&] { return tsa_loss(f, y, head, bank, alpha, dir).value; };
        for (std::size_t k = 0; k < f.values.size(); ++k) tsa.add(rep.grad_features.values[k], central(f.values[k], value));
        for (std::size_t k = 0; k < head.weights.size(); ++k) tsa.add(rep.grad_weights[k], central(head.weights[k], value));
        for (std::size_t k = 0; k < head.biases.size(); ++k) tsa.add(rep.grad_biases[k], central(head.biases[k], value));
    }

    // Supervised CE + soft Dice with respect to the logits.
    for (int trial = 0; trial < 3; ++trial) {
        const std::size_t classes = 2 + static_cast<std::size_t>(trial);
        Tensor3 logits(classes, 5, 6);
        for (double& v : logits.values) v = 1.5 * rng.normal();
        const std::vector<Label> target = random_labels(rng, logits.pixels(), classes);
        std::vector<double> weight(logits.pixels(), 1.0);
        if (trial > 0)
            for (double& w : weight) w = rng.uniform() < 0.5 ? 1.0 : 0.5;
        const SupervisedLoss rep = supervised_loss(logits, target, weight);
        auto value = [&] { return supervised_loss(logits, target, weight).value; };
        for (std::size_t k = 0; k < logits.values.size(); ++k)
            sup.add(rep.grad_logits.values[k], central(logits.values[k], value));
    }

    // Whole network under the combined objective sup(logits) + beta * tsa(features). Network states with a
    // pre-activation inside the ReLU kink margin are redrawn.
    {
        const std::size_t d = 4, classes = 3, h = 8, w = 8;
        const double beta = 0.4, alpha = 0.5;
        SegNetParams params;
        Tensor3 image(1, h, w);
        std::size_t redraws = 0;
        for (;; ++redraws) {
            params = SegNetParams::initialize(d, classes, rng);
            for (auto block : params.blocks())
                for (double& v : block) v += 0.05 * rng.normal();
            for (double& v : image.values) v = rng.uniform(0.05, 1.0);
            const ForwardCache c = forward(params, image).cache;
            double margin = std::numeric_limits<double>::infinity();
            for (const Tensor3* t : {&c.pre1, &c.pre2, &c.pre3})
                for (double v : t->values) margin = std::min(margin, std::abs(v));
            if (margin >= kKinkMargin || redraws == 50) break;
        }
        net.redraws = redraws;
        const std::vector<Label> labels = random_labels(rng, h * w, classes);
        const std::vector<double> weight(h * w, 1.0);
        const StatsBank bank = random_bank(rng, classes, d, true);

        auto objective = [&](const ForwardResult& fr) {
            const double s = supervised_loss(fr.logits, labels, weight).value;
            return s + beta * tsa_loss(to_pixel_features(fr.features), labels, params.head, bank, alpha).value;
        };
        const ForwardResult base = forward(params, image);
        const std::vector<std::uint8_t> pattern = relu_pattern(base.cache);
        const SupervisedLoss s = supervised_loss(base.logits, labels, weight);
        const LossReport t = tsa_loss(to_pixel_features(base.features), labels, params.head, bank, alpha);
        Tensor3 gf = from_pixel_features(t.grad_features, h, w);
        for (double& v : gf.values) v *= beta;
        SegNetParams grads = backward(params, base.cache, s.grad_logits, gf);
        for (std::size_t k = 0; k < grads.head.weights.size(); ++k) grads.head.weights[k] += beta * t.grad_weights[k];
        for (std::size_t k = 0; k < grads.head.biases.size(); ++k) grads.head.biases[k] += beta * t.grad_biases[k];

        auto pblocks = params.blocks();
        const auto gblocks = grads.blocks();
        for (std::size_t b = 0; b < pblocks.size(); ++b)
            for (std::size_t k = 0; k < pblocks[b].size(); ++k) {
                double& x = pblocks[b][k];
                const double x0 = x;
                bool kink = false;
                auto eval = [&](double v) {
                    x = v;
                    const ForwardResult fr = forward(params, image);
                    kink = kink || relu_pattern(fr.cache) != pattern;
                    return objective(fr);
                };
                const double numeric = (eval(x0 + kFdStep) - eval(x0 - kFdStep)) / (2.0 * kFdStep);
                x = x0;
                if (kink) {
                    ++net.skipped;
                    continue;
                }
                net.add(gblocks[b][k], numeric);
            }
    }

    CheckResult r{"gradients", false, "", seconds_since(t0)};
    const std::size_t total_net = net.probes + net.skipped;
    r.passed = tsa.worst <= 1e-4 && sup.worst <= 1e-4 && net.worst <= 1e-4 &&
               net.probes * 10 >= total_net * 9 && r.seconds < 60.0;
    r.detail = printf_string("max rel err: tsa %.2e (%zu probes), supervised %.2e (%zu), network %.2e (%zu, %zu skipped, "
                             "%zu state redraws for |pre-activation| < 1e-4); tol 1e-4",
                             tsa.worst, tsa.probes, sup.worst, sup.probes, net.worst, net.probes, net.skipped,
                             net.redraws);
    return r;
}

CheckResult check_stats_convergence(std::uint64_t seed) {
    const auto t0 = Clock::now();
    Rng rng(seed);
    const std::size_t d = 8;
    const std::size_t batches = 500, per_batch = 20;
    const Vec mu = [&] {
        Vec v(d);
        for (std::size_t i = 0; i < d; ++i) v[i] = rng.uniform(-1.0, 1.0);
        return v;
    }();
    const SymMat sigma = random_spd(rng, d, 0.3, 0.05);
    const LowerTriangular chol = cholesky(sigma, 0.0);

    StatsBank bank(2, d, 0.99);
    const std::vector<Label> labels(per_batch, 1);
    for (std::size_t b = 0; b < batches; ++b) {
        PixelFeatures f(per_batch, d);
        for (std::size_t k = 0; k < per_batch; ++k) {
            const Vec x = sample_gaussian(mu, chol, rng);
            std::copy(x.begin(), x.end(), f.row(k).begin());
        }
        bank.ema_update(Domain::source, 1, batch_class_stats(f, labels, 1));
    }
    const ClassStats& s = bank.stats(Domain::source, 1);
    double mean_err = 0.0, cov_err = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        mean_err = std::max(mean_err, std::abs(s.mean[i] - mu[i]));
        for (std::size_t j = 0; j < d; ++j) cov_err = std::max(cov_err, std::abs(s.cov(i, j) - sigma(i, j)));
    }

    // Exact pooling of two disjoint halves against the union.
    double pool_err = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = pick(rng, 2, 200);
        const PixelFeatures f = [&] {
            PixelFeatures p(n, d);
            for (double& v : p.values) v = 3.0 * rng.normal() + 2.0;
            return p;
        }();
        std::vector<Label> all(n, 0), first(n, kIgnoreLabel), second(n, kIgnoreLabel);
        for (std::size_t k = 0; k < n; ++k) (trial == 0 || rng.uniform() < 0.4 ? first : second)[k] = 0;
        const BatchMoments pooled = oracle::pool(batch_class_stats(f, first, 0), batch_class_stats(f, second, 0));
        const BatchMoments direct = batch_class_stats(f, all, 0);
        auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
        for (std::size_t i = 0; i < d; ++i) {
            pool_err = std::max(pool_err, rel(pooled.mean[i], direct.mean[i]));
            for (std::size_t j = 0; j < d; ++j) pool_err = std::max(pool_err, rel(pooled.cov(i, j), direct.cov(i, j)));
        }
        if (pooled.count != direct.count) pool_err = std::numeric_limits<double>::infinity();
    }

    CheckResult r{"stats_convergence", false, "", seconds_since(t0)};
    r.passed = mean_err <= 0.05 && cov_err <= 0.1 && pool_err <= 1e-10;
    r.detail = printf_string("%zu batches x %zu pixels, m = 0.99: |mean err|_inf = %.4f (tol 0.05), max cov err = %.4f "
                             "(tol 0.1); pooled-moment rel err = %.2e (tol 1e-10)",
                             batches, per_batch, mean_err, cov_err, pool_err);
    return r;
}

CheckResult check_metric_oracles(std::uint64_t seed, std::size_t pairs) {
    const auto t0 = Clock::now();
    const std::size_t h = 32, w = 32;
    double surf_err = 0.0, ident_err = 0.0;
    std::size_t sentinel_mismatch = 0, sentinels = 0;
    auto random_mask = [&](Rng& rng, std::vector<std::uint8_t>& m) {
        std::fill(m.begin(), m.end(), 0);
        const std::size_t blobs = rng.uniform_index(4);
        for (std::size_t b = 0; b < blobs; ++b) {
            const double cy = rng.uniform(0.0, h), cx = rng.uniform(0.0, w);
            const double ry = rng.uniform(1.0, 10.0), rx = rng.uniform(1.0, 10.0);
            const bool box = rng.uniform() < 0.5;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double u = (static_cast<double>(y) - cy) / ry, v = (static_cast<double>(x) - cx) / rx;
                    if (box ? (std::abs(u) <= 1 && std::abs(v) <= 1) : u * u + v * v <= 1) m[y * w + x] = 1;
                }
        }
        const double flip = rng.uniform() < 0.3 ? 0.05 : 0.0;
        for (auto& v : m)
            if (rng.uniform() < flip) v ^= 1;
    };
    std::vector<std::uint8_t> a(h * w), b(h * w);
    for (std::size_t i = 0; i < pairs; ++i) {
        Rng rng(derive_seed(seed, i));
        random_mask(rng, a);
        random_mask(rng, b);
        const MaskView pa{h, w, a}, pb{h, w, b};
        const SurfaceDistance got = surface_distance(pa, pb);
        const oracle::Surface want = oracle::surface_distance(h, w, a, b);
        surf_err = std::max({surf_err, std::abs(got.hd95 - want.hd95), std::abs(got.asd - want.asd)});
        if (got.sentinel != want.sentinel) ++sentinel_mismatch;
        if (want.sentinel) ++sentinels;
        const double dc = dice(pa, pb);
        ident_err = std::max(ident_err, std::abs(jaccard(pa, pb) - dc / (2.0 - dc)));
    }
    CheckResult r{"metric_oracles", false, "", seconds_since(t0)};
    r.passed = surf_err <= 1e-9 && ident_err <= 1e-12 && sentinel_mismatch == 0;
    r.detail = printf_string("%zu mask pairs (%zu with one side empty): max |hd95/asd - brute force| = %.3g (tol 1e-9); "
                             "max |jaccard - dice/(2-dice)| = %.3g (tol 1e-12); sentinel mismatches %zu",
                             pairs, sentinels, surf_err, ident_err, sentinel_mismatch);
    return r;
}

CheckResult check_teacher_contracts(std::uint64_t seed) {
    const auto t0 = Clock::now();
    const Dataset data = small_dataset(seed);
    std::vector<std::string> failures;

    {
        TrainConfig cfg = small_config(seed);
        cfg.lambda_teacher = 1.0;
        Trainer tr(cfg, data);
        const SegNetParams before = tr.state().teacher;
        const std::uint64_t sum = checksum(before);
        for (int k = 0; k < 3; ++k) tr.step();
        if (!(tr.state().teacher == before) || checksum(tr.state().teacher) != sum)
            failures.push_back("lambda = 1 changed the teacher");
        if (tr.state().student == before) failures.push_back("student did not train");
    }
    {
        TrainConfig cfg = small_config(seed);
        cfg.lambda_teacher = 0.0;
        Trainer tr(cfg, data);
        for (int k = 0; k < 3; ++k) {
            tr.step();
            if (!(tr.state().teacher == tr.state().student)) {
                failures.push_back("lambda = 0 teacher differs from student");
                break;
            }
        }
    }
    {
        TrainConfig cfg = small_config(seed);
        Trainer tr(cfg, data);
        try {
            for (int k = 0; k < 3; ++k) tr.step();
        } catch (const std::logic_error& e) {
            failures.push_back(e.what());
        }
        // An isolated backward pass must leave every parameter set untouched.
        const SegNetParams teacher = tr.state().teacher;
        const std::uint64_t sum = checksum(teacher);
        const ForwardResult fr = forward(tr.state().student, to_tensor(data.samples.front()));
        (void)backward(tr.state().student, fr.cache, fr.logits, fr.features);
        if (checksum(tr.state().teacher) != sum) failures.push_back("backward changed the teacher checksum");
    }
    CheckResult r{"teacher_contracts", failures.empty(), "", seconds_since(t0)};
    if (failures.empty()) {
        r.detail = "lambda = 1 freezes, lambda = 0 copies, backprop leaves teacher checksum unchanged";
    } else {
        for (const auto& f : failures) r.detail += (r.detail.empty() ? "" : "; ") + f;
    }
    return r;
}

CheckResult check_determinism(std::uint64_t seed, const std::filesystem::path& scratch) {
    const auto t0 = Clock::now();
    std::filesystem::create_directories(scratch);
    const Dataset data = small_dataset(seed);
    const TrainConfig cfg = small_config(seed);
    std::vector<std::string> failures;

    auto run_log = [&](const std::filesystem::path& path) {
        Trainer tr(cfg, data);
        std::ofstream os(path, std::ios::binary);
        os << kStepLogHeader << '\n';
        for (std::int64_t k = 0; k < cfg.iterations; ++k) os << format_step_row(tr.step()) << '\n';
    };
    const auto log_a = scratch / "determinism_a.csv";
    const auto log_b = scratch / "determinism_b.csv";
    run_log(log_a);
    run_log(log_b);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string a = slurp(log_a), b = slurp(log_b);
    if (a.empty() || a != b) failures.push_back("step logs differ");

    const std::int64_t half = cfg.iterations / 2;
    const auto ckpt = scratch / "determinism.tms";
    std::vector<StepReport> straight, resumed;
    {
        Trainer tr(cfg, data);
        for (std::int64_t k = 0; k < half; ++k) tr.step();
        tr.save_checkpoint(ckpt);
        for (std::int64_t k = half; k < cfg.iterations; ++k) straight.push_back(tr.step());
    }
    {
        Trainer tr(cfg, data);
        tr.load_checkpoint(ckpt);
        for (std::int64_t k = half; k < cfg.iterations; ++k) resumed.push_back(tr.step());
    }
    if (straight != resumed) failures.push_back("resumed run diverged from the uninterrupted run");

    CheckResult r{"determinism", failures.empty(), "", seconds_since(t0)};
    if (failures.empty()) {
        r.detail = printf_string("step logs byte-identical (%zu bytes); %zu resumed steps identical", a.size(),
                                 resumed.size());
    } else {
        for (const auto& f : failures) r.detail += (r.detail.empty() ? "" : "; ") + f;
    }
    return r;
}

std::vector<CheckResult> run_suite(std::uint64_t seed, const std::filesystem::path& scratch) {
    std::vector<CheckResult> out;
    out.push_back(check_ce_collapse(seed));
    const BoundChecks bound = check_bound(seed);
    out.push_back(bound.jensen);
    out.push_back(bound.tightness);
    out.push_back(check_gradients(seed));
    out.push_back(check_stats_convergence(seed));
    out.push_back(check_metric_oracles(seed));
    out.push_back(check_teacher_contracts(seed));
    out.push_back(check_determinism(seed, scratch));
    return out;
}

AblationResult run_ablation(const AblationOptions& options) {
    const auto t0 = Clock::now();
    const std::size_t n = options.seeds.size();
    std::vector<Dataset> train_sets(n), eval_sets(n);
    for (std::size_t i = 0; i < n; ++i) {
        train_sets[i] = gen_dataset(derive_seed(options.seeds[i], 1), options.data);
        eval_sets[i] = gen_dataset(derive_seed(options.seeds[i], 2), options.data);
    }

    AblationResult result;
    result.runs.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.runs[i].seed = options.seeds[i];

    std::atomic<std::size_t> next{0};
    std::mutex report_mutex;
    auto worker = [&] {
        for (std::size_t job = next++; job < 2 * n; job = next++) {
            const std::size_t i = job / 2;
            const bool with_tsa = job % 2 == 1;
            TrainConfig cfg = options.train;
            cfg.seed = options.seeds[i];
            cfg.beta = with_tsa ? options.beta : 0.0;
            Trainer tr(cfg, train_sets[i]);
            for (std::int64_t k = 0; k < cfg.iterations; ++k) tr.step();
            const std::vector<std::size_t> idx = split_indices(eval_sets[i], Split::target);
            const double dice = evaluate(tr.state().student, eval_sets[i], idx).aggregate.dice;
            std::lock_guard lock(report_mutex);
            (with_tsa ? result.runs[i].dice_tsa : result.runs[i].dice_baseline) = dice;
            if (options.progress)
                options.progress(printf_string("seed %llu beta %.2f: target dice %.4f",
                                               static_cast<unsigned long long>(cfg.seed), cfg.beta, dice));
        }
    };
    std::size_t threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = std::min(threads, 2 * n);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    double sum = 0.0;
    std::string per_seed;
    for (const AblationRun& run : result.runs) {
        sum += run.dice_tsa - run.dice_baseline;
        per_seed += printf_string("%s%+.4f", per_seed.empty() ? "" : ", ", run.dice_tsa - run.dice_baseline);
    }
    result.mean_improvement = n ? sum / static_cast<double>(n) : 0.0;
    result.check.name = "ablation_direction";
    result.check.seconds = seconds_since(t0);
    result.check.passed = n > 0 && result.mean_improvement > 0.0;
    result.check.detail = printf_string("%zu paired seeds, %lld iterations: mean target Dice gain %+.4f [%s]", n,
                                        static_cast<long long>(options.train.iterations), result.mean_improvement,
                                        per_seed.c_str());
    return result;
}

} // namespace tsaseg::verify
