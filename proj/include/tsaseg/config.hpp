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

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "tsaseg/synth_data.hpp"
#include "tsaseg/trainer.hpp"

namespace tsaseg {

/// Everything a CLI run needs; every field has a documented default.
struct RunConfig {
    TrainConfig train;
    DatasetSpec data;
    std::string manifest;               // dataset manifest for train/eval/export-features
    std::string checkpoint;             // checkpoint for eval/export-features
    std::string eval_split = "target";  // split evaluated by train (periodic) and eval
    std::string eval_network = "student";
    std::size_t export_samples = 2000;  // pixels written by export-features
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, std::size_t line, const std::string& what)
        : std::runtime_error(what), key_(key), line_(line) {}
    const std::string& key() const { return key_; }
    std::size_t line() const { return line_; }

private:
    std::string key_;
    std::size_t line_;
};

/// Lines "key = value"; '#' starts a comment. Unknown keys and out-of-range values are rejected.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

/// Applies one assignment with the same validation as the file parser (line 0).
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);

/// Every key with its resolved value, in the file syntax.
std::string resolved_config_text(const RunConfig& cfg);

} // namespace tsaseg
