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

#include "doctest.h"
#include "test_util.hpp"
#include "tsaseg/config.hpp"

using namespace tsaseg;

namespace {

ConfigError config_error(const std::string& text) {
    try {
        parse_config_text(text);
    } catch (const ConfigError& e) {
        return e;
    }
    FAIL("expected a ConfigError for: " << text);
    return ConfigError("", 0, "");
}

} // namespace

TEST_SUITE("config") {

TEST_CASE("empty input gives the defaults") {
    const RunConfig cfg = parse_config_text("");
    CHECK(cfg.train.beta == 0.4);
    CHECK(cfg.train.tau == 0.95);
    CHECK(cfg.train.lambda_teacher == 0.99);
    CHECK(cfg.train.stats_momentum == 0.99);
    CHECK(cfg.train.alpha_max == 0.5);
    CHECK(cfg.data.labeled_fraction == 0.05);
    CHECK(cfg.data.height == 64);
    CHECK(cfg.eval_split == "target");
    CHECK(parse_config_text("# only a comment\n\n   \n").train.beta == 0.4);
}

TEST_CASE("assignments, comments and whitespace") {
    const RunConfig cfg = parse_config_text(
        "beta = 0.1   # trailing comment\n"
        "  iterations=250\n"
        "direction = source_minus_target\n"
        "classes = 4\n"
        "target_gamma = 1.8\n"
        "eval_split = source_labeled\n");
    CHECK(cfg.train.beta == 0.1);
    CHECK(cfg.train.iterations == 250);
    CHECK(cfg.train.direction == ShiftDirection::source_minus_target);
    CHECK(cfg.train.classes == 4);
    CHECK(cfg.data.classes == 4);
    CHECK(cfg.data.target.gamma == 1.8);
    CHECK(cfg.eval_split == "source_labeled");
}

TEST_CASE("errors name the key and line") {
    const ConfigError range = config_error("tau = 0.9\nbeta = -1\n");
    CHECK(range.key() == "beta");
    CHECK(range.line() == 2);
    CHECK(std::string(range.what()).find("beta") != std::string::npos);

    const ConfigError unknown = config_error("betaa = 0.4");
    CHECK(unknown.key() == "betaa");
    CHECK(std::string(unknown.what()).find("unknown key") != std::string::npos);

    CHECK(config_error("lr = fast").key() == "lr");
    CHECK(config_error("iterations = 12.5").key() == "iterations");
    CHECK(config_error("tau = 0").key() == "tau");
    CHECK(config_error("direction = sideways").key() == "direction");
    CHECK(config_error("eval_split = validation").key() == "eval_split");
    CHECK(config_error("beta 0.4").line() == 1);
}

TEST_CASE("set_config_value validates like the parser") {
    RunConfig cfg;
    set_config_value(cfg, "seed", "17");
    CHECK(cfg.train.seed == 17);
    CHECK_THROWS_AS(set_config_value(cfg, "grad_clip", "-2"), ConfigError);
    CHECK_THROWS_AS(set_config_value(cfg, "nonsense", "1"), ConfigError);
}

TEST_CASE("resolved text parses back to the same configuration") {
    RunConfig cfg = parse_config_text("beta = 0.25\nseed = 99\nsource_noise_sigma = 0.03\nmanifest = data/m.tsv\n");
    const std::string text = resolved_config_text(cfg);
    const RunConfig again = parse_config_text(text);
    CHECK(resolved_config_text(again) == text);
    CHECK(again.train.beta == 0.25);
    CHECK(again.train.seed == 99);
    CHECK(again.data.source.noise_sigma == 0.03);
    CHECK(again.manifest == "data/m.tsv");
}

TEST_CASE("files") {
    testing::ScratchDir dir("config");
    testing::spit(dir / "run.cfg", "beta = 0\n");
    CHECK(parse_config(dir / "run.cfg").train.beta == 0.0);
    CHECK_THROWS_AS(parse_config(dir / "missing.cfg"), FormatError);
}

}
