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

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsaseg/numerics.hpp"
#include "tsaseg/stats_bank.hpp"

namespace tsaseg {

struct Tensor3;

/// Intensity transform applied to a clean class-intensity map:
///   x -> clamp(gain * x^gamma + offset + bias_field + N(0, noise_sigma^2), 0, 1)
/// The bias field is a linear ramp of amplitude bias_field_amp along a random direction.
struct DomainSpec {
    double gain = 1.0;
    double offset = 0.0;
    double gamma = 1.0;
    double noise_sigma = 0.0;
    double bias_field_amp = 0.0;

    void validate() const;

    static DomainSpec default_source() { return {1.0, 0.0, 1.0, 0.02, 0.0}; }
    static DomainSpec default_target() { return {0.7, 0.15, 1.4, 0.05, 0.1}; }
};

struct Sample {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> image; // row-major, values in [0, 1]
    std::vector<Label> label; // row-major

    bool operator==(const Sample&) const = default;
};

Tensor3 to_tensor(const Sample& s);

/// Clean intensity of each class before the domain transform.
double class_intensity(Label c);

/// One shape per foreground class: 1 ellipse, 2 rectangle, 3 annulus, pairwise disjoint.
Sample gen_sample(Rng& rng, const DomainSpec& spec, std::size_t height, std::size_t width, std::size_t classes);

enum class FormatErrc {
    open_failed,
    magic_mismatch,
    truncated,
    dimension_overflow,
    write_failed,
    malformed_manifest,
    version_mismatch,
    dimension_mismatch,
};

const char* to_string(FormatErrc code);

class FormatError : public std::runtime_error {
public:
    FormatError(FormatErrc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    FormatErrc code() const { return code_; }

private:
    FormatErrc code_;
};

/// Largest side accepted by the IMG1/LBL1 readers.
inline constexpr std::uint32_t kMaxSide = 1u << 15;

/// IMG1: "IMG1", u32 H, u32 W, H*W f32 (all little-endian, row-major).
void write_image(const std::filesystem::path& path, const Sample& s);
/// LBL1: "LBL1", u32 H, u32 W, H*W u8.
void write_label(const std::filesystem::path& path, const Sample& s);
/// Reads the image into `s.image` (and its shape).
void read_image(const std::filesystem::path& path, Sample& s);
/// Reads the label map into `s.label`; the shape must match if an image was already read.
void read_label(const std::filesystem::path& path, Sample& s);

struct ManifestRecord {
    std::string image_path; // relative to the manifest directory unless absolute
    std::string label_path;
    Domain domain = Domain::source;
    bool labeled = false;

    bool operator==(const ManifestRecord&) const = default;
};

struct DatasetManifest {
    std::filesystem::path base_dir;
    std::vector<ManifestRecord> records;

    std::filesystem::path resolve(const std::string& p) const;
};

/// Lines "image_path<TAB>label_path<TAB>source|target<TAB>1|0".
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

struct DatasetSpec {
    DomainSpec source = DomainSpec::default_source();
    DomainSpec target = DomainSpec::default_target();
    std::size_t n_source = 100;
    std::size_t n_target = 100;
    double labeled_fraction = 0.05;
    std::size_t height = 64;
    std::size_t width = 64;
    std::size_t classes = 3;
};

/// Number of labelled source samples: ceil(fraction * n_source).
std::size_t labeled_count(std::size_t n_source, double labeled_fraction);

struct Dataset {
    std::vector<Sample> samples;
    std::vector<ManifestRecord> records;
};

/// In-memory generation; sample i uses seed derive_seed(seed, i).
Dataset gen_dataset(std::uint64_t seed, const DatasetSpec& spec);

/// Generates, writes IMG1/LBL1 files plus "manifest.tsv" into out_dir.
DatasetManifest gen_dataset(std::uint64_t seed, const DatasetSpec& spec, const std::filesystem::path& out_dir);

Dataset load_dataset(const DatasetManifest& manifest);

} // namespace tsaseg
