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
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "tsaseg/tsa_loss.hpp"
#include "tsaseg/verify.hpp"

using namespace tsaseg;

namespace {

// d = 1, C = 2 hand-evaluated instance: w = (1, -1), b = 0, f = 0, y = 0, dmu = 0, cov = 1.
ClassifierHead tiny_head() {
    ClassifierHead head(2, 1);
    head.weights = {1.0, -1.0};
    return head;
}

StatsBank tiny_bank() {
    StatsBank bank(2, 1, 0.99);
    SymMat one = SymMat::identity(1);
    bank.ema_update(Domain::source, 0, {Vec{0.0}, one, 3});
    bank.ema_update(Domain::target, 0, {Vec{0.0}, one, 3});
    return bank;
}

struct Instance {
    ClassifierHead head;
    StatsBank bank;
    PixelFeatures features;
    std::vector<Label> labels;
};

Instance random_instance(Rng& rng, bool zero_shift) {
    const std::size_t d = 1 + rng.uniform_index(8);
    const std::size_t classes = 2 + rng.uniform_index(4);
    const std::size_t n = 1 + rng.uniform_index(30);
    Instance in{ClassifierHead(classes, d), StatsBank(classes, d, 0.9), PixelFeatures(n, d), std::vector<Label>(n)};
    for (double& w : in.head.weights) w = rng.normal();
    for (double& b : in.head.biases) b = rng.normal();
    for (double& v : in.features.values) v = rng.normal();
    for (auto& y : in.labels) y = static_cast<Label>(rng.uniform_index(classes));
    for (std::size_t c = 0; c < classes; ++c) {
        PixelFeatures p(d + 2, d);
        for (double& v : p.values) v = rng.normal();
        BatchMoments m = batch_class_stats(p, std::vector<Label>(d + 2, 0), 0);
        in.bank.ema_update(Domain::target, static_cast<Label>(c), m);
        if (!zero_shift)
            for (double& v : m.mean) v += rng.normal();
        in.bank.ema_update(Domain::source, static_cast<Label>(c), m);
    }
    return in;
}

} // namespace

TEST_SUITE("tsa_loss") {

TEST_CASE("alpha_at ramp") {
    const TsaConfig cfg{0.5, 1000, ShiftDirection::target_minus_source};
    CHECK(alpha_at(0, cfg) == 0.0);
    CHECK(alpha_at(500, cfg) == 0.25);
    CHECK(alpha_at(1000, cfg) == 0.5);
    CHECK(alpha_at(5000, cfg) == 0.5);
    CHECK(alpha_at(3, TsaConfig{0.5, 0, ShiftDirection::target_minus_source}) == 0.5);
    CHECK_THROWS(alpha_at(-1, cfg));
}

TEST_CASE("log_sum_exp and cross-entropy stay finite for large logits") {
    const std::vector<double> z{1000.0, 0.0, -1000.0};
    CHECK(log_sum_exp(z) == doctest::Approx(1000.0));
    CHECK(softmax_cross_entropy(z, 0) == doctest::Approx(0.0));
    CHECK(softmax_cross_entropy(z, 2) == doctest::Approx(2000.0));
}

TEST_CASE("augmented_logits") {
    SUBCASE("alpha 0 gives the plain logits") {
        Rng rng(1);
        ClassifierHead head(3, 2);
        for (double& w : head.weights) w = rng.normal();
        for (double& b : head.biases) b = rng.normal();
        const Vec f{0.3, -0.7};
        SymMat cov = SymMat::identity(2);
        CHECK(augmented_logits(f.span(), 1, head, Vec{1.0, 2.0}, cov, 0.0) == head.logits(f.span()));
    }
    SUBCASE("hand-evaluated d = 1 instance") {
        const auto z = augmented_logits(Vec{0.0}.span(), 0, tiny_head(), Vec{0.0}, SymMat::identity(1), 0.5);
        REQUIRE(z.size() == 2);
        CHECK(z[0] == 0.0);
        CHECK(z[1] == 1.0);
    }
    SUBCASE("bias shift moves every logit") {
        Rng rng(2);
        ClassifierHead head(4, 3);
        for (double& w : head.weights) w = rng.normal();
        const Vec f{0.1, 0.2, -0.4};
        const Vec dmu{0.5, -0.5, 0.25};
        const SymMat cov = SymMat::identity(3);
        const auto a = augmented_logits(f.span(), 2, head, dmu, cov, 0.7);
        for (double& b : head.biases) b += 3.25;
        const auto b = augmented_logits(f.span(), 2, head, dmu, cov, 0.7);
        for (std::size_t c = 0; c < 4; ++c) CHECK(b[c] - a[c] == doctest::Approx(3.25).epsilon(1e-12));
    }
}

TEST_CASE("tsa_loss hand-evaluated values") {
    const ClassifierHead head = tiny_head();
    const StatsBank bank = tiny_bank();
    const PixelFeatures f(1, 1);
    const std::vector<Label> y{0};
    CHECK(tsa_loss(f, y, head, bank, 0.5).value == doctest::Approx(std::log(1.0 + std::exp(1.0))).epsilon(1e-14));
    CHECK(tsa_loss(f, y, head, bank, 0.0).value == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("alpha 0 is the plain cross-entropy on the same arithmetic path") {
    Rng rng(3);
    for (int trial = 0; trial < 100; ++trial) {
        const Instance in = random_instance(rng, false);
        CHECK(tsa_loss(in.features, in.labels, in.head, in.bank, 0.0).value ==
              mean_cross_entropy(in.features, in.labels, in.head));
    }
}

TEST_CASE("classes without statistics on both sides fall back to cross-entropy") {
    const ClassifierHead head = tiny_head();
    StatsBank bank(2, 1, 0.99);
    bank.ema_update(Domain::target, 0, {Vec{2.0}, SymMat::identity(1), 3});
    const PixelFeatures f(1, 1);
    const std::vector<Label> y{0};
    CHECK(tsa_loss(f, y, head, bank, 1.0).value == mean_cross_entropy(f, y, head));
}

TEST_CASE("loss properties on random instances") {
    Rng rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        Instance in = random_instance(rng, false);
        const double alpha = rng.uniform(0.0, 1.0);
        const double base = tsa_loss(in.features, in.labels, in.head, in.bank, alpha).value;
        CHECK(base >= 0.0);

        ClassifierHead shifted = in.head;
        for (double& b : shifted.biases) b += 1.75;
        CHECK(std::abs(tsa_loss(in.features, in.labels, shifted, in.bank, alpha).value - base) <= 1e-12 * (1 + base));

        const std::size_t n = in.labels.size();
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::reverse(perm.begin(), perm.end());
        PixelFeatures pf(n, in.features.dim);
        std::vector<Label> py(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(in.features.row(perm[i]).begin(), in.features.row(perm[i]).end(), pf.row(i).begin());
            py[i] = in.labels[perm[i]];
        }
        CHECK(std::abs(tsa_loss(pf, py, in.head, in.bank, alpha).value - base) <= 1e-12 * (1 + base));
    }
}

TEST_CASE("without a mean shift the loss grows with alpha") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Instance in = random_instance(rng, true);
        double previous = -1.0;
        for (double alpha : {0.0, 0.1, 0.25, 0.5, 0.75, 1.0}) {
            const double v = tsa_loss(in.features, in.labels, in.head, in.bank, alpha).value;
            CHECK(v >= previous);
            previous = v;
        }
    }
}

TEST_CASE("tsa_loss input validation") {
    const ClassifierHead head = tiny_head();
    const StatsBank bank = tiny_bank();
    CHECK_THROWS(tsa_loss(PixelFeatures(0, 1), std::vector<Label>{}, head, bank, 0.5));
    CHECK_THROWS_AS(tsa_loss(PixelFeatures(2, 1), std::vector<Label>{0}, head, bank, 0.5), DimensionError);
    CHECK_THROWS_AS(tsa_loss(PixelFeatures(1, 2), std::vector<Label>{0}, head, bank, 0.5), DimensionError);
    CHECK_THROWS(tsa_loss(PixelFeatures(1, 1), std::vector<Label>{0}, head, bank, -0.1));
    CHECK_THROWS_AS(tsa_loss(PixelFeatures(1, 1), std::vector<Label>{2}, head, bank, 0.5), std::out_of_range);
}

TEST_CASE("mc_explicit_loss") {
    const ClassifierHead head = tiny_head();
    const Vec f{0.4};
    SUBCASE("alpha 0 is exactly the cross-entropy") {
        Rng rng(6);
        const McEstimate mc = mc_explicit_loss(f.span(), 1, head, Vec{2.0}, SymMat::identity(1), 0.0, 64, rng);
        CHECK(mc.mean == softmax_cross_entropy(head.logits(f.span()), 1));
        CHECK(mc.std_error == 0.0);
    }
    SUBCASE("zero covariance is a deterministic shift") {
        Rng rng(7);
        const double alpha = 0.5;
        const Vec dmu{1.5};
        const McEstimate mc = mc_explicit_loss(f.span(), 0, head, dmu, SymMat(1), alpha, 64, rng);
        const Vec moved{f[0] + alpha * dmu[0]};
        CHECK(mc.mean == softmax_cross_entropy(head.logits(moved.span()), 0));
    }
    SUBCASE("hand-evaluated instance respects the bound") {
        Rng rng(8);
        const McEstimate mc =
            mc_explicit_loss(Vec{0.0}.span(), 0, head, Vec{0.0}, SymMat::identity(1), 0.5, 100000, rng);
        const double closed = std::log(1.0 + std::exp(1.0));
        CHECK(mc.std_error > 0.0);
        CHECK(mc.mean <= closed + 3.0 * mc.std_error);
        // the bound is not loose to the point of meaninglessness here
        CHECK(mc.mean > std::log(2.0));
    }
}

TEST_CASE("mc_bound_tightness") {
    SUBCASE("zero covariance is exact") {
        Rng rng(9);
        ClassifierHead head(3, 2);
        for (double& w : head.weights) w = rng.normal();
        const BoundTightness t =
            mc_bound_tightness(Vec{0.2, 0.1}.span(), 1, head, Vec{0.5, -1.0}, SymMat(2), 0.5, 128, rng);
        CHECK(std::abs(t.mc_of_bound - t.closed_form) <= 1e-12);
    }
    SUBCASE("alpha 0 collapses to the cross-entropy") {
        Rng rng(10);
        ClassifierHead head(3, 2);
        for (double& w : head.weights) w = rng.normal();
        const Vec f{-0.3, 0.8};
        const BoundTightness t = mc_bound_tightness(f.span(), 2, head, Vec{1.0, 1.0}, SymMat::identity(2), 0.0, 32, rng);
        const double ce = softmax_cross_entropy(head.logits(f.span()), 2);
        CHECK(t.closed_form == doctest::Approx(ce).epsilon(1e-14));
        CHECK(t.mc_of_bound == doctest::Approx(ce).epsilon(1e-12));
    }
    SUBCASE("random d = 2, C = 3 instance agrees within three standard errors") {
        Rng rng(11);
        ClassifierHead head(3, 2);
        for (double& w : head.weights) w = 0.5 * rng.normal();
        for (double& b : head.biases) b = 0.5 * rng.normal();
        SymMat cov(2);
        cov.set(0, 0, 0.6);
        cov.set(0, 1, 0.2);
        cov.set(1, 1, 0.4);
        const BoundTightness t =
            mc_bound_tightness(Vec{0.3, -0.2}.span(), 0, head, Vec{0.4, 0.1}, cov, 0.5, 100000, rng);
        CHECK(t.std_error > 0.0);
        CHECK(std::abs(t.mc_of_bound - t.closed_form) <= 3.0 * t.std_error);
    }
}

}
