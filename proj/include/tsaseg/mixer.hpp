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
#include <span>
#include <vector>

#include "tsaseg/numerics.hpp"
#include "tsaseg/synth_data.hpp"

namespace tsaseg {

struct MixMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t row0 = 0, col0 = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> mask; // 1 inside the rectangle

    static MixMask rectangle(std::size_t height, std::size_t width, std::size_t row0, std::size_t col0,
                             std::size_t rows, std::size_t cols);
    MixMask complement() const;
    bool operator==(const MixMask&) const = default;
};

/// floor(2H/3) x floor(2W/3) rectangle at a uniformly random offset.
MixMask sample_mask(Rng& rng, std::size_t height, std::size_t width);

struct MixWeights {
    double labeled = 1.0;
    double unlabeled = 0.5;
};

struct MixedSample {
    std::vector<float> image;
    std::vector<Label> target;
    std::vector<double> weight;
};

/// Region of the labelled image pasted onto the unlabelled one (mask selects the labelled pixels).
MixedSample mix_out(const Sample& labeled, std::span<const float> unlabeled_image, std::span<const Label> pseudo,
                    const MixMask& mask, const MixWeights& weights = {});

/// Region of the unlabelled image pasted onto the labelled one (mask selects the unlabelled pixels).
MixedSample mix_in(const Sample& labeled, std::span<const float> unlabeled_image, std::span<const Label> pseudo,
                   const MixMask& mask, const MixWeights& weights = {});

} // namespace tsaseg
