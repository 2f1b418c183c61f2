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
#include <map>
#include <numeric>

#include "doctest.h"
#include "tsaseg/mixer.hpp"

using namespace tsaseg;

namespace {

Sample checker(std::size_t h, std::size_t w, float base, Label label) {
    Sample s{h, w, std::vector<float>(h * w), std::vector<Label>(h * w)};
    for (std::size_t p = 0; p < h * w; ++p) {
        s.image[p] = base + static_cast<float>(p) * 1e-3f;
        s.label[p] = static_cast<Label>((label + p) % 3);
    }
    return s;
}

std::size_t popcount(const MixMask& m) { return static_cast<std::size_t>(std::count(m.mask.begin(), m.mask.end(), 1)); }

} // namespace

TEST_SUITE("mixer") {

TEST_CASE("sample_mask geometry") {
    SUBCASE("3x3 has a 2x2 rectangle at four offsets") {
        Rng rng(1);
        std::map<std::pair<std::size_t, std::size_t>, int> seen;
        for (int i = 0; i < 1000; ++i) {
            const MixMask m = sample_mask(rng, 3, 3);
            CHECK(m.rows == 2);
            CHECK(m.cols == 2);
            ++seen[{m.row0, m.col0}];
        }
        CHECK(seen.size() == 4);
    }
    SUBCASE("popcount is always floor(2H/3) * floor(2W/3)") {
        Rng rng(2);
        for (int i = 0; i < 200; ++i) {
            const std::size_t h = 3 + rng.uniform_index(40), w = 3 + rng.uniform_index(40);
            CHECK(popcount(sample_mask(rng, h, w)) == (2 * h / 3) * (2 * w / 3));
        }
    }
    SUBCASE("every offset occurs over 1e4 draws") {
        Rng rng(3);
        const std::size_t h = 16, w = 13;
        const std::size_t ny = h - 2 * h / 3 + 1, nx = w - 2 * w / 3 + 1;
        std::vector<int> count(ny * nx, 0);
        for (int i = 0; i < 10000; ++i) {
            const MixMask m = sample_mask(rng, h, w);
            REQUIRE(m.row0 < ny);
            REQUIRE(m.col0 < nx);
            ++count[m.row0 * nx + m.col0];
        }
        CHECK(std::all_of(count.begin(), count.end(), [](int c) { return c > 0; }));
    }
    SUBCASE("too small") {
        Rng rng(4);
        CHECK_THROWS(sample_mask(rng, 2, 5));
    }
}

TEST_CASE("mix identities") {
    const std::size_t h = 6, w = 5;
    const Sample lab = checker(h, w, 0.1f, 0);
    const Sample unl = checker(h, w, 0.6f, 1);
    const std::vector<Label> pseudo = unl.label;
    const MixWeights mw{1.0, 0.5};
    const MixMask ones = MixMask::rectangle(h, w, 0, 0, h, w);
    const MixMask zeros = MixMask::rectangle(h, w, 0, 0, 0, 0);

    const MixedSample a = mix_out(lab, unl.image, pseudo, ones, mw);
    CHECK(a.image == lab.image);
    CHECK(a.target == lab.label);
    CHECK(std::all_of(a.weight.begin(), a.weight.end(), [](double v) { return v == 1.0; }));

    const MixedSample b = mix_out(lab, unl.image, pseudo, zeros, mw);
    CHECK(b.image == unl.image);
    CHECK(b.target == pseudo);
    CHECK(std::all_of(b.weight.begin(), b.weight.end(), [](double v) { return v == 0.5; }));

    const MixedSample c = mix_in(lab, unl.image, pseudo, ones, mw);
    CHECK(c.image == unl.image);
    CHECK(c.target == pseudo);
    CHECK(std::all_of(c.weight.begin(), c.weight.end(), [](double v) { return v == 0.5; }));

    const MixedSample d = mix_in(lab, unl.image, pseudo, zeros, mw);
    CHECK(d.image == lab.image);
    CHECK(d.target == lab.label);
    CHECK(std::all_of(d.weight.begin(), d.weight.end(), [](double v) { return v == 1.0; }));
}

TEST_CASE("mixing against direct composition") {
    const std::size_t h = 9, w = 12;
    const Sample lab = checker(h, w, 0.0f, 2);
    const Sample unl = checker(h, w, 0.5f, 0);
    std::vector<Label> pseudo(h * w);
    for (std::size_t p = 0; p < h * w; ++p) pseudo[p] = static_cast<Label>(p % 2);
    const MixMask mask = MixMask::rectangle(h, w, 2, 3, 6, 8);
    const MixWeights mw{1.0, 0.25};

    const MixedSample out = mix_out(lab, unl.image, pseudo, mask, mw);
    const MixedSample in = mix_in(lab, unl.image, pseudo, mask, mw);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t p = y * w + x;
            const bool inside = y >= 2 && y < 8 && x >= 3 && x < 11;
            CHECK(out.image[p] == (inside ? lab.image[p] : unl.image[p]));
            CHECK(out.target[p] == (inside ? lab.label[p] : pseudo[p]));
            CHECK(out.weight[p] == (inside ? 1.0 : 0.25));
            CHECK(in.image[p] == (inside ? unl.image[p] : lab.image[p]));
            CHECK(in.target[p] == (inside ? pseudo[p] : lab.label[p]));
            CHECK(in.weight[p] == (inside ? 0.25 : 1.0));
        }
}

TEST_CASE("duality and reconstruction") {
    Rng rng(5);
    const std::size_t h = 10, w = 8;
    const Sample a = checker(h, w, 0.2f, 0);
    const Sample b = checker(h, w, 0.7f, 1);
    for (int i = 0; i < 20; ++i) {
        const MixMask m = sample_mask(rng, h, w);
        const MixMask mc = m.complement();
        CHECK(popcount(m) + popcount(mc) == h * w);

        const MixedSample in = mix_in(a, b.image, b.label, m);
        CHECK(in.image == mix_out(a, b.image, b.label, mc).image);
        CHECK(in.image == mix_out(b, a.image, a.label, m).image);

        // pasting the same region back restores both inputs
        const MixedSample x = mix_out(a, b.image, b.label, m);
        const MixedSample y = mix_in(a, b.image, b.label, m);
        Sample xs{h, w, x.image, x.target};
        CHECK(mix_out(xs, y.image, y.target, m).image == a.image);
        CHECK(mix_in(xs, y.image, y.target, m).image == b.image);
    }
}

TEST_CASE("outputs copy pixels and never blend") {
    Rng rng(6);
    const Sample a = checker(7, 7, 0.1f, 0);
    const Sample b = checker(7, 7, 0.8f, 2);
    const MixMask m = sample_mask(rng, 7, 7);
    const MixedSample out = mix_out(a, b.image, b.label, m);
    for (std::size_t p = 0; p < out.image.size(); ++p) {
        const bool from_a = out.image[p] == a.image[p] && out.target[p] == a.label[p] && out.weight[p] == 1.0;
        const bool from_b = out.image[p] == b.image[p] && out.target[p] == b.label[p] && out.weight[p] == 0.5;
        CHECK(from_a != from_b);
        CHECK(from_a == (m.mask[p] != 0));
    }
}

TEST_CASE("shape validation") {
    const Sample a = checker(4, 4, 0.1f, 0);
    const Sample b = checker(4, 5, 0.1f, 0);
    const MixMask m = MixMask::rectangle(4, 4, 0, 0, 2, 2);
    CHECK_THROWS_AS(mix_out(a, b.image, b.label, m), DimensionError);
    CHECK_THROWS_AS(MixMask::rectangle(4, 4, 3, 0, 2, 2), DimensionError);
}

}
