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

#include "tsaseg/mixer.hpp"

#include <stdexcept>

namespace tsaseg {

MixMask MixMask::rectangle(std::size_t height, std::size_t width, std::size_t row0, std::size_t col0,
                           std::size_t rows, std::size_t cols) {
    if (row0 + rows > height || col0 + cols > width) throw DimensionError("MixMask: rectangle exceeds the image");
    MixMask m{height, width, row0, col0, rows, cols, std::vector<std::uint8_t>(height * width, 0)};
    for (std::size_t y = row0; y < row0 + rows; ++y)
        for (std::size_t x = col0; x < col0 + cols; ++x) m.mask[y * width + x] = 1;
    return m;
}

MixMask MixMask::complement() const {
    MixMask m = *this;
    for (auto& v : m.mask) v = v ? 0 : 1;
    return m;
}

MixMask sample_mask(Rng& rng, std::size_t height, std::size_t width) {
    if (height < 3 || width < 3) throw std::invalid_argument("sample_mask: image must be at least 3x3");
    const std::size_t rows = 2 * height / 3;
    const std::size_t cols = 2 * width / 3;
    const std::size_t row0 = rng.uniform_index(height - rows + 1);
    const std::size_t col0 = rng.uniform_index(width - cols + 1);
    return MixMask::rectangle(height, width, row0, col0, rows, cols);
}

namespace {

/// Takes `a` where the mask is set, `b` elsewhere.
MixedSample compose(std::span<const float> image_a, std::span<const Label> target_a, double weight_a,
                    std::span<const float> image_b, std::span<const Label> target_b, double weight_b,
                    const MixMask& mask) {
    const std::size_t n = mask.mask.size();
    if (image_a.size() != n || target_a.size() != n || image_b.size() != n || target_b.size() != n)
        throw DimensionError("mix: input shapes disagree with the mask");
    MixedSample out{std::vector<float>(n), std::vector<Label>(n), std::vector<double>(n)};
    for (std::size_t p = 0; p < n; ++p) {
        const bool a = mask.mask[p] != 0;
        out.image[p] = a ? image_a[p] : image_b[p];
        out.target[p] = a ? target_a[p] : target_b[p];
        out.weight[p] = a ? weight_a : weight_b;
    }
    return out;
}

} // namespace

MixedSample mix_out(const Sample& labeled, std::span<const float> unlabeled_image, std::span<const Label> pseudo,
                    const MixMask& mask, const MixWeights& weights) {
    return compose(labeled.image, labeled.label, weights.labeled, unlabeled_image, pseudo, weights.unlabeled, mask);
}

MixedSample mix_in(const Sample& labeled, std::span<const float> unlabeled_image, std::span<const Label> pseudo,
                   const MixMask& mask, const MixWeights& weights) {
    return compose(unlabeled_image, pseudo, weights.unlabeled, labeled.image, labeled.label, weights.labeled, mask);
}

} // namespace tsaseg
