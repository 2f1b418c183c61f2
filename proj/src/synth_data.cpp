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

#include "tsaseg/synth_data.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "binary_io.hpp"
#include "tsaseg/network.hpp"

namespace tsaseg {

void DomainSpec::validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("DomainSpec: gamma must be positive");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("DomainSpec: noise_sigma must be nonnegative");
    if (!(bias_field_amp >= 0.0)) throw std::invalid_argument("DomainSpec: bias_field_amp must be nonnegative");
}

Tensor3 to_tensor(const Sample& s) {
    Tensor3 t(1, s.height, s.width);
    for (std::size_t i = 0; i < s.image.size(); ++i) t.values[i] = s.image[i];
    return t;
}

double class_intensity(Label c) {
    switch (c) {
    case 0: return 0.1;
    case 1: return 0.8;
    case 2: return 0.55;
    case 3: return 0.35;
    default: throw std::out_of_range("class_intensity: class out of range");
    }
}

namespace {

struct Canvas {
    std::size_t h, w;
    std::vector<Label> label;
};

/// Rasterizes one candidate shape for class c; returns false on overlap with (or contact to) existing shapes.
bool place_shape(Rng& rng, Canvas& canvas, Label c, double scale) {
    const double h = static_cast<double>(canvas.h);
    const double w = static_cast<double>(canvas.w);
    std::vector<std::size_t> pixels;
    auto inside_ellipse = [](double dy, double dx, double ry, double rx) {
        return (dy * dy) / (ry * ry) + (dx * dx) / (rx * rx) <= 1.0;
    };

    double ry = 0, rx = 0, inner = 0;
    switch (c) {
    case 1:
        ry = rng.uniform(5.0, 12.0) * scale;
        rx = rng.uniform(5.0, 12.0) * scale;
        break;
    case 2:
        ry = rng.uniform(4.0, 10.0) * scale;
        rx = rng.uniform(4.0, 10.0) * scale;
        break;
    default:
        ry = rx = rng.uniform(7.0, 12.0) * scale;
        inner = ry - rng.uniform(3.0, 5.0) * scale;
        break;
    }
    const double cy = rng.uniform(ry + 1.0, h - ry - 1.0);
    const double cx = rng.uniform(rx + 1.0, w - rx - 1.0);

    for (std::size_t y = 0; y < canvas.h; ++y)
        for (std::size_t x = 0; x < canvas.w; ++x) {
            const double dy = static_cast<double>(y) + 0.5 - cy;
            const double dx = static_cast<double>(x) + 0.5 - cx;
            bool in = false;
            if (c == 1) {
                in = inside_ellipse(dy, dx, ry, rx);
            } else if (c == 2) {
                in = std::abs(dy) <= ry && std::abs(dx) <= rx;
            } else {
                const double r = std::hypot(dy, dx);
                in = r <= ry && r >= inner;
            }
            if (in) pixels.push_back(y * canvas.w + x);
        }
    if (pixels.empty()) return false;

    for (std::size_t p : pixels) {
        const std::size_t y = p / canvas.w;
        const std::size_t x = p % canvas.w;
        for (std::size_t yy = y == 0 ? 0 : y - 1; yy <= std::min(y + 1, canvas.h - 1); ++yy)
            for (std::size_t xx = x == 0 ? 0 : x - 1; xx <= std::min(x + 1, canvas.w - 1); ++xx)
                if (canvas.label[yy * canvas.w + xx] != 0) return false;
    }
    for (std::size_t p : pixels) canvas.label[p] = c;
    return true;
}

} // namespace

Sample gen_sample(Rng& rng, const DomainSpec& spec, std::size_t height, std::size_t width, std::size_t classes) {
    spec.validate();
    if (classes < 2 || classes > 4) throw std::invalid_argument("gen_sample: classes must be 2, 3, or 4");
    if (height < 32 || width < 32) throw std::invalid_argument("gen_sample: image must be at least 32x32");

    Canvas canvas{height, width, std::vector<Label>(height * width, 0)};
    const double scale = static_cast<double>(std::min(height, width)) / 64.0;
    for (std::size_t c = 1; c < classes; ++c) {
        int attempt = 0;
        while (!place_shape(rng, canvas, static_cast<Label>(c), scale)) {
            if (++attempt >= 100)
                throw std::runtime_error("gen_sample: could not place class " + std::to_string(c) +
                                         " disjointly after 100 retries");
        }
    }

    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ct = std::cos(theta) / std::numbers::sqrt2;
    const double st = std::sin(theta) / std::numbers::sqrt2;

    Sample s;
    s.height = height;
    s.width = width;
    s.label = std::move(canvas.label);
    s.image.resize(height * width);
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t p = y * width + x;
            const double yn = 2.0 * (static_cast<double>(y) + 0.5) / static_cast<double>(height) - 1.0;
            const double xn = 2.0 * (static_cast<double>(x) + 0.5) / static_cast<double>(width) - 1.0;
            const double bias = spec.bias_field_amp * (ct * xn + st * yn);
            const double clean = class_intensity(s.label[p]);
            const double noise = spec.noise_sigma * rng.normal();
            const double v = spec.gain * std::pow(clean, spec.gamma) + spec.offset + bias + noise;
            s.image[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    return s;
}

const char* to_string(FormatErrc code) {
    switch (code) {
    case FormatErrc::open_failed: return "open_failed";
    case FormatErrc::magic_mismatch: return "magic_mismatch";
    case FormatErrc::truncated: return "truncated";
    case FormatErrc::dimension_overflow: return "dimension_overflow";
    case FormatErrc::write_failed: return "write_failed";
    case FormatErrc::malformed_manifest: return "malformed_manifest";
    case FormatErrc::version_mismatch: return "version_mismatch";
    case FormatErrc::dimension_mismatch: return "dimension_mismatch";
    }
    return "unknown";
}

namespace {

void write_or_throw(const std::filesystem::path& path, const io::ByteWriter& w) {
    if (!io::write_file(path, w.buffer()))
        throw FormatError(FormatErrc::write_failed, "cannot write " + path.string());
}

std::vector<unsigned char> read_or_throw(const std::filesystem::path& path) {
    std::vector<unsigned char> data;
    if (!io::read_file(path, data)) throw FormatError(FormatErrc::open_failed, "cannot open " + path.string());
    return data;
}

struct Header {
    std::uint32_t h, w;
};

template <class Reader>
Header read_header(Reader& r, const char* magic, const std::filesystem::path& path) {
    char m[4];
    r.bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0)
        throw FormatError(FormatErrc::magic_mismatch, path.string() + ": expected magic " + magic);
    Header hd{r.u32(), r.u32()};
    if (hd.h == 0 || hd.w == 0 || hd.h > kMaxSide || hd.w > kMaxSide)
        throw FormatError(FormatErrc::dimension_overflow, path.string() + ": dimensions " + std::to_string(hd.h) +
                                                              "x" + std::to_string(hd.w) + " out of range");
    return hd;
}

} // namespace

void write_image(const std::filesystem::path& path, const Sample& s) {
    if (s.image.size() != s.height * s.width) throw DimensionError("write_image: image buffer does not match shape");
    io::ByteWriter w;
    w.bytes("IMG1", 4);
    w.u32(static_cast<std::uint32_t>(s.height));
    w.u32(static_cast<std::uint32_t>(s.width));
    for (float v : s.image) w.f32(v);
    write_or_throw(path, w);
}

void write_label(const std::filesystem::path& path, const Sample& s) {
    if (s.label.size() != s.height * s.width) throw DimensionError("write_label: label buffer does not match shape");
    io::ByteWriter w;
    w.bytes("LBL1", 4);
    w.u32(static_cast<std::uint32_t>(s.height));
    w.u32(static_cast<std::uint32_t>(s.width));
    w.bytes(s.label.data(), s.label.size());
    write_or_throw(path, w);
}

void read_image(const std::filesystem::path& path, Sample& s) {
    const auto data = read_or_throw(path);
    auto on_short = [&] { throw FormatError(FormatErrc::truncated, path.string() + ": truncated"); };
    io::ByteReader r(data, on_short);
    const Header hd = read_header(r, "IMG1", path);
    const std::size_t n = std::size_t{hd.h} * hd.w;
    r.need(n * 4);
    s.height = hd.h;
    s.width = hd.w;
    s.image.resize(n);
    for (float& v : s.image) v = r.f32();
}

void read_label(const std::filesystem::path& path, Sample& s) {
    const auto data = read_or_throw(path);
    auto on_short = [&] { throw FormatError(FormatErrc::truncated, path.string() + ": truncated"); };
    io::ByteReader r(data, on_short);
    const Header hd = read_header(r, "LBL1", path);
    if (!s.image.empty() && (hd.h != s.height || hd.w != s.width))
        throw FormatError(FormatErrc::dimension_mismatch, path.string() + ": label shape differs from image shape");
    const std::size_t n = std::size_t{hd.h} * hd.w;
    s.height = hd.h;
    s.width = hd.w;
    s.label.resize(n);
    r.bytes(s.label.data(), n);
}

std::filesystem::path DatasetManifest::resolve(const std::string& p) const {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError(FormatErrc::write_failed, "cannot write " + path.string());
    for (const auto& r : manifest.records)
        out << r.image_path << '\t' << r.label_path << '\t' << (r.domain == Domain::source ? "source" : "target")
            << '\t' << (r.labeled ? 1 : 0) << '\n';
    if (!out) throw FormatError(FormatErrc::write_failed, "cannot write " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError(FormatErrc::open_failed, "cannot open " + path.string());
    DatasetManifest m;
    m.base_dir = path.parent_path();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, '\t')) fields.push_back(field);
        auto bad = [&](const std::string& why) {
            return FormatError(FormatErrc::malformed_manifest,
                               path.string() + ":" + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() != 4) throw bad("expected 4 tab-separated fields");
        ManifestRecord r;
        r.image_path = fields[0];
        r.label_path = fields[1];
        if (fields[2] == "source") r.domain = Domain::source;
        else if (fields[2] == "target") r.domain = Domain::target;
        else throw bad("domain must be 'source' or 'target'");
        if (fields[3] == "1") r.labeled = true;
        else if (fields[3] == "0") r.labeled = false;
        else throw bad("labeled flag must be 0 or 1");
        if (r.labeled && r.label_path.empty()) throw bad("labeled record without a label file");
        m.records.push_back(std::move(r));
    }
    return m;
}

std::size_t labeled_count(std::size_t n_source, double labeled_fraction) {
    if (!(labeled_fraction > 0.0 && labeled_fraction <= 1.0))
        throw std::invalid_argument("labeled_fraction must lie in (0, 1]");
    const double exact = labeled_fraction * static_cast<double>(n_source);
    return std::min(n_source, static_cast<std::size_t>(std::ceil(exact - 1e-9)));
}

Dataset gen_dataset(std::uint64_t seed, const DatasetSpec& spec) {
    const std::size_t n_labeled = labeled_count(spec.n_source, spec.labeled_fraction);
    Dataset ds;
    const std::size_t total = spec.n_source + spec.n_target;
    for (std::size_t i = 0; i < total; ++i) {
        const bool source = i < spec.n_source;
        const std::size_t local = source ? i : i - spec.n_source;
        Rng rng(derive_seed(seed, i));
        ds.samples.push_back(gen_sample(rng, source ? spec.source : spec.target, spec.height, spec.width,
                                        spec.classes));
        char stem[32];
        std::snprintf(stem, sizeof stem, "%s_%04zu", source ? "src" : "tgt", local);
        ManifestRecord r;
        r.image_path = std::string(stem) + ".img";
        r.label_path = std::string(stem) + ".lbl";
        r.domain = source ? Domain::source : Domain::target;
        r.labeled = source && local < n_labeled;
        ds.records.push_back(std::move(r));
    }
    return ds;
}

DatasetManifest gen_dataset(std::uint64_t seed, const DatasetSpec& spec, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw FormatError(FormatErrc::write_failed, "cannot create " + out_dir.string() + ": " + ec.message());
    const Dataset ds = gen_dataset(seed, spec);
    DatasetManifest m;
    m.base_dir = out_dir;
    m.records = ds.records;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        write_image(out_dir / ds.records[i].image_path, ds.samples[i]);
        write_label(out_dir / ds.records[i].label_path, ds.samples[i]);
    }
    write_manifest(out_dir / "manifest.tsv", m);
    return m;
}

Dataset load_dataset(const DatasetManifest& manifest) {
    Dataset ds;
    ds.records = manifest.records;
    for (const auto& r : manifest.records) {
        Sample s;
        read_image(manifest.resolve(r.image_path), s);
        if (!r.label_path.empty()) read_label(manifest.resolve(r.label_path), s);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

} // namespace tsaseg
