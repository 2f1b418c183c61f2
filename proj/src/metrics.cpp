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

#include "tsaseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tsaseg {

namespace {

void check_pair(MaskView a, MaskView b) {
    if (a.height != b.height || a.width != b.width || a.data.size() != a.height * a.width ||
        b.data.size() != b.height * b.width)
        throw DimensionError("metrics: mask shapes differ");
}

struct Overlap {
    std::size_t a = 0, b = 0, both = 0;
};

Overlap overlap(MaskView pred, MaskView gt) {
    check_pair(pred, gt);
    Overlap o;
    for (std::size_t p = 0; p < pred.data.size(); ++p) {
        const bool x = pred.data[p] != 0;
        const bool y = gt.data[p] != 0;
        o.a += x;
        o.b += y;
        o.both += x && y;
    }
    return o;
}

/// 1D squared Euclidean distance transform (lower envelope of parabolas).
void edt_1d(const double* f, std::size_t n, double* out, std::vector<std::size_t>& v, std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    std::size_t k = 0;
    std::size_t first = n;
    for (std::size_t q = 0; q < n; ++q)
        if (f[q] < inf) {
            first = q;
            break;
        }
    if (first == n) {
        std::fill(out, out + n, inf);
        return;
    }
    v[0] = first;
    z[0] = -inf;
    z[1] = inf;
    for (std::size_t q = first + 1; q < n; ++q) {
        if (!(f[q] < inf)) continue;
        const double qd = static_cast<double>(q);
        double s;
        while (true) {
            const double vk = static_cast<double>(v[k]);
            s = ((f[q] + qd * qd) - (f[v[k]] + vk * vk)) / (2.0 * qd - 2.0 * vk);
            if (s <= z[k] && k > 0) {
                --k;
                continue;
            }
            break;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (std::size_t q = 0; q < n; ++q) {
        const double qd = static_cast<double>(q);
        while (z[k + 1] < qd) ++k;
        const double diff = qd - static_cast<double>(v[k]);
        out[q] = diff * diff + f[v[k]];
    }
}

/// Squared distance from every pixel to the nearest point in `points`.
std::vector<double> squared_distance_map(std::size_t h, std::size_t w, const std::vector<Point>& points) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid(h * w, inf);
    for (const Point& p : points) grid[p.row * w + p.col] = 0.0;
    std::vector<std::size_t> v;
    std::vector<double> z;
    std::vector<double> col_in(h), col_out(h);
    for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t y = 0; y < h; ++y) col_in[y] = grid[y * w + x];
        edt_1d(col_in.data(), h, col_out.data(), v, z);
        for (std::size_t y = 0; y < h; ++y) grid[y * w + x] = col_out[y];
    }
    std::vector<double> row_out(w);
    for (std::size_t y = 0; y < h; ++y) {
        edt_1d(&grid[y * w], w, row_out.data(), v, z);
        std::copy(row_out.begin(), row_out.end(), grid.begin() + static_cast<std::ptrdiff_t>(y * w));
    }
    return grid;
}

} // namespace

double dice(MaskView pred, MaskView gt) {
    const Overlap o = overlap(pred, gt);
    if (o.a + o.b == 0) return 1.0;
    return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.a + o.b);
}

double jaccard(MaskView pred, MaskView gt) {
    const Overlap o = overlap(pred, gt);
    const std::size_t uni = o.a + o.b - o.both;
    if (uni == 0) return 1.0;
    return static_cast<double>(o.both) / static_cast<double>(uni);
}

std::vector<Point> surface_points(MaskView mask) {
    const std::size_t h = mask.height;
    const std::size_t w = mask.width;
    if (mask.data.size() != h * w) throw DimensionError("surface_points: mask shape mismatch");
    auto fg = [&](std::size_t y, std::size_t x) { return mask.data[y * w + x] != 0; };
    std::vector<Point> out;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            if (!fg(y, x)) continue;
            const bool border = y == 0 || x == 0 || y + 1 == h || x + 1 == w;
            if (border || !fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)) out.push_back({y, x});
        }
    return out;
}

double percentile(std::vector<double>& values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty input");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

SurfaceDistance surface_distance(MaskView pred, MaskView gt) {
    check_pair(pred, gt);
    const auto sp = surface_points(pred);
    const auto sg = surface_points(gt);
    SurfaceDistance out;
    if (sp.empty() && sg.empty()) return out;
    if (sp.empty() || sg.empty()) {
        const double diag = std::hypot(static_cast<double>(pred.height), static_cast<double>(pred.width));
        out.hd95 = out.asd = diag;
        out.sentinel = true;
        return out;
    }
    const std::size_t w = pred.width;
    const auto to_gt = squared_distance_map(pred.height, w, sg);
    const auto to_pred = squared_distance_map(pred.height, w, sp);
    std::vector<double> pooled;
    pooled.reserve(sp.size() + sg.size());
    for (const Point& p : sp) pooled.push_back(std::sqrt(to_gt[p.row * w + p.col]));
    for (const Point& p : sg) pooled.push_back(std::sqrt(to_pred[p.row * w + p.col]));
    double sum = 0.0;
    for (double d : pooled) sum += d;
    out.asd = sum / static_cast<double>(pooled.size());
    out.hd95 = percentile(pooled, 0.95);
    return out;
}

double hd95(MaskView pred, MaskView gt) { return surface_distance(pred, gt).hd95; }
double asd(MaskView pred, MaskView gt) { return surface_distance(pred, gt).asd; }

MetricsRow segmentation_metrics(std::span<const Label> pred, std::span<const Label> gt, std::size_t height,
                                std::size_t width, std::size_t classes) {
    if (pred.size() != height * width || gt.size() != height * width)
        throw DimensionError("segmentation_metrics: label map shape mismatch");
    if (classes < 2) throw std::invalid_argument("segmentation_metrics: need at least one foreground class");
    MetricsRow row;
    std::vector<std::uint8_t> pm(pred.size()), gm(gt.size());
    for (std::size_t c = 1; c < classes; ++c) {
        for (std::size_t p = 0; p < pred.size(); ++p) {
            pm[p] = pred[p] == c;
            gm[p] = gt[p] == c;
        }
        const MaskView a{height, width, pm};
        const MaskView b{height, width, gm};
        const SurfaceDistance sd = surface_distance(a, b);
        ClassMetrics m{dice(a, b), jaccard(a, b), sd.hd95, sd.asd, sd.sentinel};
        row.dice += m.dice;
        row.jaccard += m.jaccard;
        row.hd95 += m.hd95;
        row.asd += m.asd;
        row.sentinel_count += m.sentinel;
        row.per_class.push_back(m);
    }
    const double k = static_cast<double>(classes - 1);
    row.dice /= k;
    row.jaccard /= k;
    row.hd95 /= k;
    row.asd /= k;
    return row;
}

MetricsRow average_rows(std::span<const MetricsRow> rows) {
    if (rows.empty()) throw std::invalid_argument("average_rows: no rows");
    MetricsRow out;
    out.per_class.resize(rows.front().per_class.size());
    for (const MetricsRow& r : rows) {
        if (r.per_class.size() != out.per_class.size()) throw DimensionError("average_rows: class counts differ");
        out.dice += r.dice;
        out.jaccard += r.jaccard;
        out.hd95 += r.hd95;
        out.asd += r.asd;
        out.sentinel_count += r.sentinel_count;
        for (std::size_t k = 0; k < r.per_class.size(); ++k) {
            out.per_class[k].dice += r.per_class[k].dice;
            out.per_class[k].jaccard += r.per_class[k].jaccard;
            out.per_class[k].hd95 += r.per_class[k].hd95;
            out.per_class[k].asd += r.per_class[k].asd;
            out.per_class[k].sentinel = out.per_class[k].sentinel || r.per_class[k].sentinel;
        }
    }
    const double n = static_cast<double>(rows.size());
    out.dice /= n;
    out.jaccard /= n;
    out.hd95 /= n;
    out.asd /= n;
    for (auto& m : out.per_class) {
        m.dice /= n;
        m.jaccard /= n;
        m.hd95 /= n;
        m.asd /= n;
    }
    return out;
}

} // namespace tsaseg
