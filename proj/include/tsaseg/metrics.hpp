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
#include <utility>
#include <vector>

#include "tsaseg/stats_bank.hpp"

namespace tsaseg {

/// Binary H x W mask, row-major, nonzero = foreground.
struct MaskView {
    std::size_t height = 0;
    std::size_t width = 0;
    std::span<const std::uint8_t> data;
};

double dice(MaskView pred, MaskView gt);
double jaccard(MaskView pred, MaskView gt);

struct Point {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const Point&) const = default;
};

/// Foreground pixels with a 4-neighbour that is background or outside the image.
std::vector<Point> surface_points(MaskView mask);

struct SurfaceDistance {
    double hd95 = 0.0;
    double asd = 0.0;
    bool sentinel = false; // exactly one mask empty; both values set to the image diagonal
};

/// 95th percentile (linear interpolation) and mean of the pooled symmetric surface distances.
SurfaceDistance surface_distance(MaskView pred, MaskView gt);
double hd95(MaskView pred, MaskView gt);
double asd(MaskView pred, MaskView gt);

/// Linear-interpolation percentile of `values` (sorted in place); q in [0, 1].
double percentile(std::vector<double>& values, double q);

struct ClassMetrics {
    double dice = 0.0;
    double jaccard = 0.0;
    double hd95 = 0.0;
    double asd = 0.0;
    bool sentinel = false;
};

/// Per-foreground-class metrics plus their means.
struct MetricsRow {
    std::vector<ClassMetrics> per_class; // index k holds class k + 1
    double dice = 0.0;
    double jaccard = 0.0;
    double hd95 = 0.0;
    double asd = 0.0;
    std::size_t sentinel_count = 0;
};

MetricsRow segmentation_metrics(std::span<const Label> pred, std::span<const Label> gt, std::size_t height,
                                std::size_t width, std::size_t classes);

/// Elementwise mean of rows (per class and overall); sentinel counts are summed.
MetricsRow average_rows(std::span<const MetricsRow> rows);

} // namespace tsaseg
