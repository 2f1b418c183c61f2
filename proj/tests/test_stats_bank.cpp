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
#include "tsaseg/stats_bank.hpp"
#include "tsaseg/verify.hpp"

using namespace tsaseg;

namespace {

PixelFeatures rows(std::initializer_list<std::initializer_list<double>> data) {
    const std::size_t d = data.begin()->size();
    PixelFeatures p(data.size(), d);
    std::size_t i = 0;
    for (const auto& r : data) std::copy(r.begin(), r.end(), p.row(i++).begin());
    return p;
}

double max_abs_diff(const SymMat& a, const SymMat& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.packed().size(); ++i) m = std::max(m, std::abs(a.packed()[i] - b.packed()[i]));
    return m;
}

bool psd_by_cholesky(const SymMat& a) {
    // the tiny jitter keeps semidefinite matrices factorable
    try {
        cholesky(a, 1e-12);
        return true;
    } catch (const NotPositiveDefinite&) {
        return false;
    }
}

BatchMoments random_moments(Rng& rng, std::size_t d, std::size_t n) {
    PixelFeatures p(n, d);
    for (double& v : p.values) v = rng.normal();
    return batch_class_stats(p, std::vector<Label>(n, 0), 0);
}

} // namespace

TEST_SUITE("stats_bank") {

TEST_CASE("batch_class_stats small cases") {
    SUBCASE("single pixel") {
        const BatchMoments m = batch_class_stats(rows({{1.0, 2.0}}), std::vector<Label>{1}, 1);
        CHECK(m.count == 1);
        CHECK(m.mean == Vec{1.0, 2.0});
        CHECK(m.cov == SymMat(2));
    }
    SUBCASE("identical pixels have zero covariance") {
        const BatchMoments m = batch_class_stats(rows({{0.3, -1.0}, {0.3, -1.0}}), std::vector<Label>{0, 0}, 0);
        CHECK(m.count == 2);
        CHECK(max_abs_diff(m.cov, SymMat(2)) == 0.0);
    }
    SUBCASE("other labels are ignored") {
        const BatchMoments m = batch_class_stats(rows({{1.0}, {5.0}, {3.0}}), std::vector<Label>{2, 0, 2}, 2);
        CHECK(m.count == 2);
        CHECK(m.mean[0] == 2.0);
        CHECK(m.cov(0, 0) == 1.0);
    }
    SUBCASE("misaligned labels") {
        CHECK_THROWS_AS(batch_class_stats(rows({{1.0}}), std::vector<Label>{0, 0}, 0), DimensionError);
    }
}

TEST_CASE("batch_class_stats recovers sampling moments") {
    Rng rng(21);
    const std::size_t d = 3, n = 1000;
    const Vec mu{0.5, -1.0, 2.0};
    SymMat sigma(d);
    sigma.set(0, 0, 1.0);
    sigma.set(1, 1, 0.5);
    sigma.set(2, 2, 0.8);
    sigma.set(0, 1, 0.3);
    sigma.set(1, 2, -0.2);
    const LowerTriangular chol = cholesky(sigma, 0.0);
    PixelFeatures p(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec x = sample_gaussian(mu, chol, rng);
        std::copy(x.begin(), x.end(), p.row(i).begin());
    }
    const BatchMoments m = batch_class_stats(p, std::vector<Label>(n, 0), 0);
    for (std::size_t i = 0; i < d; ++i) CHECK(std::abs(m.mean[i] - mu[i]) <= 0.1);
    CHECK(max_abs_diff(m.cov, sigma) <= 0.15);
}

TEST_CASE("batch_class_stats is invariant to pixel order") {
    Rng rng(4);
    const std::size_t n = 40, d = 4;
    PixelFeatures p(n, d);
    for (double& v : p.values) v = rng.normal();
    std::vector<Label> y(n);
    for (auto& v : y) v = static_cast<Label>(rng.uniform_index(2));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_index(i + 1)]);
    PixelFeatures q(n, d);
    std::vector<Label> z(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(p.row(perm[i]).begin(), p.row(perm[i]).end(), q.row(i).begin());
        z[i] = y[perm[i]];
    }
    for (Label c : {Label{0}, Label{1}}) {
        const BatchMoments a = batch_class_stats(p, y, c);
        const BatchMoments b = batch_class_stats(q, z, c);
        CHECK(a.count == b.count);
        for (std::size_t k = 0; k < d; ++k) CHECK(a.mean[k] == doctest::Approx(b.mean[k]).epsilon(1e-13));
        CHECK(max_abs_diff(a.cov, b.cov) <= 1e-13);
    }
}

TEST_CASE("pooled moments of disjoint sets equal the union") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 1 + rng.uniform_index(6);
        const std::size_t n = 2 + rng.uniform_index(60);
        PixelFeatures p(n, d);
        for (double& v : p.values) v = 3.0 * rng.normal() + 1.0;
        std::vector<Label> split(n), all(n, 0);
        for (auto& v : split) v = static_cast<Label>(rng.uniform_index(2));
        split[0] = 0;
        split[1] = 1;
        const BatchMoments pooled = verify::oracle::pool(batch_class_stats(p, split, 0), batch_class_stats(p, split, 1));
        const BatchMoments direct = batch_class_stats(p, all, 0);
        CHECK(pooled.count == direct.count);
        for (std::size_t k = 0; k < d; ++k)
            CHECK(verify::relative_error(pooled.mean[k], direct.mean[k]) <= 1e-10);
        for (std::size_t k = 0; k < direct.cov.packed().size(); ++k)
            CHECK(verify::relative_error(pooled.cov.packed()[k], direct.cov.packed()[k]) <= 1e-10);
    }
}

TEST_CASE("ema_update") {
    const std::size_t d = 2;
    BatchMoments batch{Vec{1.0, -2.0}, SymMat::identity(d), 5};
    batch.cov.set(0, 1, 0.25);

    SUBCASE("empty batch leaves the bank alone") {
        StatsBank bank(2, d, 0.99);
        const StatsBank before = bank;
        bank.ema_update(Domain::source, 0, BatchMoments{Vec(d), SymMat(d), 0});
        CHECK(bank == before);
    }
    SUBCASE("first batch is installed exactly") {
        StatsBank bank(2, d, 0.99);
        bank.ema_update(Domain::target, 1, batch);
        const ClassStats& s = bank.stats(Domain::target, 1);
        CHECK(s.mean == batch.mean);
        CHECK(s.cov == batch.cov);
        CHECK(s.initialized());
        CHECK_FALSE(bank.stats(Domain::source, 1).initialized());
    }
    SUBCASE("a constant stream stays at its fixed point") {
        StatsBank bank(1, d, 0.99);
        for (int i = 0; i < 10000; ++i) bank.ema_update(Domain::source, 0, batch);
        const ClassStats& s = bank.stats(Domain::source, 0);
        for (std::size_t k = 0; k < d; ++k) CHECK(std::abs(s.mean[k] - batch.mean[k]) <= 1e-6);
        CHECK(max_abs_diff(s.cov, batch.cov) <= 1e-6);
    }
    SUBCASE("momentum 1 is the identity once initialized") {
        StatsBank bank(1, d, 1.0);
        bank.ema_update(Domain::source, 0, batch);
        const StatsBank before = bank;
        Rng rng(2);
        for (int i = 0; i < 10; ++i) bank.ema_update(Domain::source, 0, random_moments(rng, d, 6));
        CHECK(bank == before);
    }
    SUBCASE("PSD in, PSD out") {
        Rng rng(17);
        StatsBank bank(1, 4, 0.9);
        for (int i = 0; i < 200; ++i) {
            bank.ema_update(Domain::source, 0, random_moments(rng, 4, 1 + rng.uniform_index(8)));
            REQUIRE(psd_by_cholesky(bank.stats(Domain::source, 0).cov));
        }
    }
    SUBCASE("dimension mismatch") {
        StatsBank bank(1, 3, 0.99);
        CHECK_THROWS_AS(bank.ema_update(Domain::source, 0, batch), DimensionError);
    }
}

TEST_CASE("delta_mu and augmentation_cov") {
    StatsBank bank(2, 2, 0.99);
    CHECK(bank.delta_mu(0, ShiftDirection::target_minus_source) == Vec(2));

    SymMat src_cov = SymMat::identity(2);
    SymMat tgt_cov = SymMat::identity(2);
    tgt_cov.scale(3.0);
    bank.ema_update(Domain::source, 0, {Vec{1.0, 0.0}, src_cov, 4});
    CHECK(bank.delta_mu(0, ShiftDirection::target_minus_source) == Vec(2));

    bank.ema_update(Domain::target, 0, {Vec{3.0, 4.0}, tgt_cov, 4});
    CHECK(bank.delta_mu(0, ShiftDirection::target_minus_source) == Vec{2.0, 4.0});
    CHECK(bank.delta_mu(0, ShiftDirection::source_minus_target) == Vec{-2.0, -4.0});
    CHECK(bank.augmentation_cov(0, ShiftDirection::target_minus_source) == tgt_cov);
    CHECK(bank.augmentation_cov(0, ShiftDirection::source_minus_target) == src_cov);

    CHECK_FALSE(bank.class_ready(1));
    CHECK_THROWS_AS(bank.stats(Domain::source, 2), std::out_of_range);
}

TEST_CASE("confident_pixels") {
    SUBCASE("clear confidence") {
        const ConfidentPixels c = confident_pixels(std::vector<double>{0.97, 0.03}, 2, 0.95);
        CHECK(c.selected[0] == 1);
        CHECK(c.pseudo_labels[0] == 0);
        CHECK(c.selected_count == 1);
    }
    SUBCASE("below threshold") {
        const ConfidentPixels c = confident_pixels(std::vector<double>{0.5, 0.5}, 2, 0.95);
        CHECK(c.selected[0] == 0);
        CHECK(c.selected_count == 0);
    }
    SUBCASE("uniform ties go to the lowest class") {
        const ConfidentPixels c = confident_pixels(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 4, 0.25);
        CHECK(c.selected[0] == 1);
        CHECK(c.pseudo_labels[0] == 0);
    }
    SUBCASE("tau 1 rejects strictly sub-unit confidence") {
        const ConfidentPixels c = confident_pixels(std::vector<double>{0.999999, 1e-6, 0.2, 0.8}, 2, 1.0);
        CHECK(c.selected_count == 0);
        CHECK(c.pseudo_labels[1] == 1);
    }
    SUBCASE("bad inputs") {
        CHECK_THROWS_AS(confident_pixels(std::vector<double>{0.5, 0.3, 0.2}, 2, 0.9), DimensionError);
        CHECK_THROWS_AS(confident_pixels(std::vector<double>{0.5, 0.5}, 2, 0.0), std::invalid_argument);
    }
}

}
