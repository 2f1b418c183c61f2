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

#include "tsaseg/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

namespace tsaseg {

namespace {

struct Bad {
    std::string why;
};

double parse_double(const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) throw Bad{"not a finite number"};
    return out;
}

std::int64_t parse_int(const std::string& v) {
    std::int64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw Bad{"not an integer"};
    return out;
}

std::uint64_t parse_uint(const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) throw Bad{"not a nonnegative integer"};
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

struct Key {
    std::string name;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class Field>
Key real(std::string name, Field field, double lo, double hi, bool lo_open = false, bool hi_open = false) {
    return {name,
            [=](RunConfig& c, const std::string& v) {
                const double x = parse_double(v);
                const bool ok_lo = lo_open ? x > lo : x >= lo;
                const bool ok_hi = hi_open ? x < hi : x <= hi;
                if (!ok_lo || !ok_hi) {
                    const std::string range = std::string(lo_open ? "(" : "[") + fmt(lo) + ", " +
                                              (std::isinf(hi) ? std::string("inf") : fmt(hi)) + (hi_open ? ")" : "]");
                    throw Bad{"value " + v + " outside " + range};
                }
                field(c) = x;
            },
            [=](const RunConfig& c) { return fmt(field(const_cast<RunConfig&>(c))); }};
}

template <class T, class Field>
Key integer(std::string name, Field field, std::int64_t lo, std::int64_t hi) {
    return {name,
            [=](RunConfig& c, const std::string& v) {
                const std::int64_t x = parse_int(v);
                if (x < lo || x > hi)
                    throw Bad{"value " + v + " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]"};
                field(c) = static_cast<T>(x);
            },
            [=](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); }};
}

template <class Field>
Key text(std::string name, Field field, std::vector<std::string> allowed = {}) {
    return {name,
            [=](RunConfig& c, const std::string& v) {
                if (!allowed.empty()) {
                    bool ok = false;
                    for (const auto& a : allowed) ok = ok || a == v;
                    if (!ok) {
                        std::string list;
                        for (const auto& a : allowed) list += (list.empty() ? "" : "|") + a;
                        throw Bad{"value '" + v + "' not one of " + list};
                    }
                }
                field(c) = v;
            },
            [=](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); }};
}

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::int64_t kBig = std::numeric_limits<std::int32_t>::max();

void add_domain_keys(std::vector<Key>& keys, const std::string& prefix, DomainSpec DatasetSpec::*spec) {
    keys.push_back(real(prefix + "_gain", [=](RunConfig& c) -> double& { return (c.data.*spec).gain; }, -kInf, kInf));
    keys.push_back(real(prefix + "_offset", [=](RunConfig& c) -> double& { return (c.data.*spec).offset; }, -kInf, kInf));
    keys.push_back(real(prefix + "_gamma", [=](RunConfig& c) -> double& { return (c.data.*spec).gamma; }, 0.0, kInf, true));
    keys.push_back(real(prefix + "_noise_sigma", [=](RunConfig& c) -> double& { return (c.data.*spec).noise_sigma; },
                        0.0, kInf));
    keys.push_back(real(prefix + "_bias_field_amp",
                        [=](RunConfig& c) -> double& { return (c.data.*spec).bias_field_amp; }, 0.0, kInf));
}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        k.push_back(real("beta", [](RunConfig& c) -> double& { return c.train.beta; }, 0.0, kInf));
        k.push_back(real("lambda_teacher", [](RunConfig& c) -> double& { return c.train.lambda_teacher; }, 0.0, 1.0));
        k.push_back(real("stats_momentum", [](RunConfig& c) -> double& { return c.train.stats_momentum; }, 0.0, 1.0));
        k.push_back(real("tau", [](RunConfig& c) -> double& { return c.train.tau; }, 0.0, 1.0, true));
        k.push_back(real("alpha_max", [](RunConfig& c) -> double& { return c.train.alpha_max; }, 0.0, 1.0));
        k.push_back(integer<std::int64_t>("ramp_steps", [](RunConfig& c) -> std::int64_t& { return c.train.ramp_steps; },
                                          -1, kBig));
        k.push_back({"direction",
                     [](RunConfig& c, const std::string& v) {
                         if (v == "target_minus_source") c.train.direction = ShiftDirection::target_minus_source;
                         else if (v == "source_minus_target") c.train.direction = ShiftDirection::source_minus_target;
                         else throw Bad{"value '" + v + "' not one of target_minus_source|source_minus_target"};
                     },
                     [](const RunConfig& c) {
                         return std::string(c.train.direction == ShiftDirection::target_minus_source
                                                ? "target_minus_source"
                                                : "source_minus_target");
                     }});
        k.push_back(real("lr", [](RunConfig& c) -> double& { return c.train.lr; }, 0.0, kInf, true));
        k.push_back(real("sgd_momentum", [](RunConfig& c) -> double& { return c.train.sgd_momentum; }, 0.0, 1.0, false,
                         true));
        k.push_back(real("grad_clip", [](RunConfig& c) -> double& { return c.train.grad_clip; }, 0.0, kInf));
        k.push_back(integer<std::int64_t>("iterations", [](RunConfig& c) -> std::int64_t& { return c.train.iterations; },
                                          0, kBig));
        k.push_back(integer<std::size_t>("batch_labeled",
                                         [](RunConfig& c) -> std::size_t& { return c.train.batch_labeled; }, 1, 64));
        k.push_back(integer<std::size_t>("batch_unlabeled",
                                         [](RunConfig& c) -> std::size_t& { return c.train.batch_unlabeled; }, 0, 64));
        k.push_back({"seed",
                     [](RunConfig& c, const std::string& v) { c.train.seed = parse_uint(v); },
                     [](const RunConfig& c) { return std::to_string(c.train.seed); }});
        k.push_back(real("w_l", [](RunConfig& c) -> double& { return c.train.mix.labeled; }, 0.0, kInf));
        k.push_back(real("w_u", [](RunConfig& c) -> double& { return c.train.mix.unlabeled; }, 0.0, kInf));
        k.push_back(integer<std::int64_t>("eval_interval",
                                          [](RunConfig& c) -> std::int64_t& { return c.train.eval_interval; }, 0, kBig));
        k.push_back(integer<std::size_t>("feature_dim", [](RunConfig& c) -> std::size_t& { return c.train.feature_dim; },
                                         1, 256));
        k.push_back({"classes",
                     [](RunConfig& c, const std::string& v) {
                         const std::int64_t x = parse_int(v);
                         if (x < 2 || x > 4) throw Bad{"value " + v + " outside [2, 4]"};
                         c.train.classes = c.data.classes = static_cast<std::size_t>(x);
                     },
                     [](const RunConfig& c) { return std::to_string(c.train.classes); }});
        k.push_back(integer<std::size_t>("height", [](RunConfig& c) -> std::size_t& { return c.data.height; }, 32, 4096));
        k.push_back(integer<std::size_t>("width", [](RunConfig& c) -> std::size_t& { return c.data.width; }, 32, 4096));
        k.push_back(integer<std::size_t>("n_source", [](RunConfig& c) -> std::size_t& { return c.data.n_source; }, 1,
                                         kBig));
        k.push_back(integer<std::size_t>("n_target", [](RunConfig& c) -> std::size_t& { return c.data.n_target; }, 0,
                                         kBig));
        k.push_back(real("labeled_fraction", [](RunConfig& c) -> double& { return c.data.labeled_fraction; }, 0.0, 1.0,
                         true));
        add_domain_keys(k, "source", &DatasetSpec::source);
        add_domain_keys(k, "target", &DatasetSpec::target);
        k.push_back(text("manifest", [](RunConfig& c) -> std::string& { return c.manifest; }));
        k.push_back(text("checkpoint", [](RunConfig& c) -> std::string& { return c.checkpoint; }));
        k.push_back(text("eval_split", [](RunConfig& c) -> std::string& { return c.eval_split; },
                         {"source", "target", "source_labeled", "source_unlabeled", "all"}));
        k.push_back(text("eval_network", [](RunConfig& c) -> std::string& { return c.eval_network; },
                         {"student", "teacher"}));
        k.push_back(integer<std::size_t>("export_samples",
                                         [](RunConfig& c) -> std::size_t& { return c.export_samples; }, 1, kBig));
        return k;
    }();
    return table;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value, std::size_t line) {
    const std::string where = line ? "line " + std::to_string(line) + ": " : "";
    for (const Key& k : keys()) {
        if (k.name != key) continue;
        try {
            k.set(cfg, value);
        } catch (const Bad& b) {
            throw ConfigError(key, line, where + "key '" + key + "': " + b.why);
        }
        return;
    }
    throw ConfigError(key, line, where + "unknown key '" + key + "'");
}

} // namespace

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) { apply(cfg, key, value, 0); }

RunConfig parse_config_text(std::string_view text) {
    RunConfig cfg;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        std::string_view raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (const auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("", line_no, "line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) throw ConfigError("", line_no, "line " + std::to_string(line_no) + ": missing key");
        apply(cfg, key, value, line_no);
    }
    return cfg;
}

RunConfig parse_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatErrc::open_failed, "cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string resolved_config_text(const RunConfig& cfg) {
    std::string out;
    for (const Key& k : keys()) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

} // namespace tsaseg
