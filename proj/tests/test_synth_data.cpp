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

#include "doctest.h"
#include "test_util.hpp"
#include "tsaseg/synth_data.hpp"

using namespace tsaseg;
using tsaseg::testing::ScratchDir;

namespace {

FormatErrc error_code(auto&& fn) {
    try {
        fn();
    } catch (const FormatError& e) {
        return e.code();
    }
    FAIL("expected a FormatError");
    return FormatErrc::open_failed;
}

bool touches_other_class(const Sample& s) {
    for (std::size_t y = 0; y < s.height; ++y)
        for (std::size_t x = 0; x < s.width; ++x) {
            const Label c = s.label[y * s.width + x];
            if (c == 0) continue;
            for (std::size_t yy = y == 0 ? 0 : y - 1; yy <= std::min(y + 1, s.height - 1); ++yy)
                for (std::size_t xx = x == 0 ? 0 : x - 1; xx <= std::min(x + 1, s.width - 1); ++xx) {
                    const Label o = s.label[yy * s.width + xx];
                    if (o != 0 && o != c) return true;
                }
        }
    return false;
}

} // namespace

TEST_SUITE("synth_data") {

TEST_CASE("identity domain reproduces the clean intensity map") {
    Rng rng(1);
    const DomainSpec identity{1.0, 0.0, 1.0, 0.0, 0.0};
    const Sample s = gen_sample(rng, identity, 64, 64, 4);
    for (std::size_t p = 0; p < s.image.size(); ++p)
        CHECK(s.image[p] == static_cast<float>(class_intensity(s.label[p])));
}

TEST_CASE("shapes") {
    SUBCASE("different seeds give different geometry") {
        Rng a(1), b(2);
        CHECK(gen_sample(a, DomainSpec::default_source(), 64, 64, 3).label !=
              gen_sample(b, DomainSpec::default_source(), 64, 64, 3).label);
    }
    SUBCASE("every class is present, shapes are disjoint, background dominates") {
        std::size_t background = 0, total = 0;
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            Rng rng(seed);
            const Sample s = gen_sample(rng, DomainSpec::default_source(), 64, 64, 4);
            std::vector<std::size_t> hist(4, 0);
            for (Label l : s.label) ++hist[l];
            for (std::size_t c = 0; c < 4; ++c) CHECK(hist[c] > 0);
            CHECK_FALSE(touches_other_class(s));
            background += hist[0];
            total += s.label.size();
            CHECK(hist[0] == *std::max_element(hist.begin(), hist.end()));
        }
        CHECK(2 * background > total);
    }
    SUBCASE("argument validation") {
        Rng rng(3);
        CHECK_THROWS(gen_sample(rng, DomainSpec::default_source(), 64, 64, 5));
        CHECK_THROWS(gen_sample(rng, DomainSpec::default_source(), 16, 64, 3));
        CHECK_THROWS(gen_sample(rng, DomainSpec{1.0, 0.0, 0.0, 0.0, 0.0}, 64, 64, 3));
    }
}

TEST_CASE("labels do not depend on the domain transform") {
    DatasetSpec a;
    a.n_source = 6;
    a.n_target = 6;
    DatasetSpec b = a;
    b.source = DomainSpec{0.5, 0.3, 2.0, 0.2, 0.3};
    b.target = DomainSpec::default_source();
    const Dataset da = gen_dataset(9, a);
    const Dataset db = gen_dataset(9, b);
    for (std::size_t i = 0; i < da.samples.size(); ++i) {
        CHECK(da.samples[i].label == db.samples[i].label);
        CHECK(da.samples[i].image != db.samples[i].image);
    }
}

TEST_CASE("intensities are clamped to the unit interval") {
    Rng rng(4);
    const DomainSpec harsh{1.6, 0.3, 0.5, 0.4, 0.5};
    const Sample s = gen_sample(rng, harsh, 48, 40, 3);
    CHECK(std::all_of(s.image.begin(), s.image.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
    CHECK(std::any_of(s.image.begin(), s.image.end(), [](float v) { return v == 1.0f; }));
}

TEST_CASE("IMG1 and LBL1 files") {
    ScratchDir dir("io");
    Rng rng(5);
    const Sample s = gen_sample(rng, DomainSpec::default_target(), 40, 36, 3);
    write_image(dir / "a.img", s);
    write_label(dir / "a.lbl", s);

    SUBCASE("round trip is bit exact") {
        Sample r;
        read_image(dir / "a.img", r);
        read_label(dir / "a.lbl", r);
        CHECK(r == s);
        CHECK(std::filesystem::file_size(dir / "a.img") == 12 + 4 * 40 * 36);
        CHECK(std::filesystem::file_size(dir / "a.lbl") == 12 + 40 * 36);
    }
    SUBCASE("corrupted magic") {
        std::string bytes = testing::slurp(dir / "a.img");
        bytes[0] = 'X';
        testing::spit(dir / "bad.img", bytes);
        Sample r;
        CHECK(error_code([&] { read_image(dir / "bad.img", r); }) == FormatErrc::magic_mismatch);
        CHECK(error_code([&] { read_image(dir / "a.lbl", r); }) == FormatErrc::magic_mismatch);
    }
    SUBCASE("truncated payload") {
        const std::string bytes = testing::slurp(dir / "a.img");
        testing::spit(dir / "short.img", bytes.substr(0, bytes.size() / 2));
        testing::spit(dir / "header.lbl", testing::slurp(dir / "a.lbl").substr(0, 7));
        Sample r;
        CHECK(error_code([&] { read_image(dir / "short.img", r); }) == FormatErrc::truncated);
        Sample q;
        CHECK(error_code([&] { read_label(dir / "header.lbl", q); }) == FormatErrc::truncated);
    }
    SUBCASE("oversized header") {
        std::string bytes = testing::slurp(dir / "a.lbl");
        bytes[4] = bytes[5] = bytes[6] = bytes[7] = '\xff';
        testing::spit(dir / "huge.lbl", bytes);
        Sample r;
        CHECK(error_code([&] { read_label(dir / "huge.lbl", r); }) == FormatErrc::dimension_overflow);
    }
    SUBCASE("label shape must match the image") {
        Rng other(6);
        const Sample t = gen_sample(other, DomainSpec::default_source(), 32, 32, 3);
        write_label(dir / "b.lbl", t);
        Sample r;
        read_image(dir / "a.img", r);
        CHECK(error_code([&] { read_label(dir / "b.lbl", r); }) == FormatErrc::dimension_mismatch);
    }
    SUBCASE("missing file") {
        Sample r;
        CHECK(error_code([&] { read_image(dir / "nope.img", r); }) == FormatErrc::open_failed);
    }
}

TEST_CASE("labelled subset size") {
    CHECK(labeled_count(100, 0.05) == 5);
    CHECK(labeled_count(100, 1.0) == 100);
    CHECK(labeled_count(7, 0.5) == 4);
    CHECK(labeled_count(10, 0.3) == 3);
    CHECK_THROWS(labeled_count(10, 0.0));

    DatasetSpec spec;
    spec.n_source = 100;
    spec.n_target = 3;
    spec.height = spec.width = 32;
    const Dataset ds = gen_dataset(1, spec);
    CHECK(std::count_if(ds.records.begin(), ds.records.end(), [](const auto& r) { return r.labeled; }) == 5);
    CHECK(std::none_of(ds.records.begin() + 100, ds.records.end(), [](const auto& r) { return r.labeled; }));

    spec.labeled_fraction = 1.0;
    const Dataset full = gen_dataset(1, spec);
    for (std::size_t i = 0; i < 100; ++i) CHECK(full.records[i].labeled);
}

TEST_CASE("dataset files and manifest") {
    ScratchDir dir("dataset");
    DatasetSpec spec;
    spec.n_source = 5;
    spec.n_target = 4;
    spec.labeled_fraction = 0.4;
    spec.height = spec.width = 32;
    const DatasetManifest written = gen_dataset(3, spec, dir / "a");
    gen_dataset(3, spec, dir / "b");

    SUBCASE("manifest reload reproduces the records") {
        const DatasetManifest m = read_manifest(dir / "a/manifest.tsv");
        CHECK(m.records == written.records);
        const Dataset loaded = load_dataset(m);
        CHECK(loaded.samples == gen_dataset(3, spec).samples);
    }
    SUBCASE("same seed writes byte-identical files") {
        for (const auto& entry : std::filesystem::directory_iterator(dir / "a"))
            CHECK(testing::slurp(entry.path()) == testing::slurp(dir / "b" / entry.path().filename()));
    }
    SUBCASE("malformed manifests") {
        testing::spit(dir / "m1.tsv", "x.img\tx.lbl\tsideways\t1\n");
        testing::spit(dir / "m2.tsv", "x.img\tx.lbl\tsource\n");
        testing::spit(dir / "m3.tsv", "x.img\tx.lbl\tsource\tyes\n");
        for (const char* name : {"m1.tsv", "m2.tsv", "m3.tsv"})
            CHECK(error_code([&] { read_manifest(dir / name); }) == FormatErrc::malformed_manifest);
        CHECK(error_code([&] { read_manifest(dir / "none.tsv"); }) == FormatErrc::open_failed);
    }
}

}
