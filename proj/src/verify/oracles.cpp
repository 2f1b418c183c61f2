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
#include <limits>
#include <stdexcept>

#include "tsaseg/verify.hpp"

namespace tsaseg::verify::oracle {

double quad_form(std::span<const double> dense, std::span<const double> v) {
    const std::size_t d = v.size();
    long double s = 0.0L;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) s += static_cast<long double>(v[i]) * dense[i * d + j] * v[j];
    return static_cast<double>(s);
}

namespace {

long double lse_ce(const std::vector<long double>& z, Label y) {
    long double m = -std::numeric_limits<long double>::infinity();
    for (long double v : z) m = std::max(m, v);
    long double s = 0.0L;
    for (long double v : z) s += std::exp(v - m);
    return m + std::log(s) - z[y];
}

} // namespace

double cross_entropy(std::span<const double> logits, Label y) {
    std::vector<long double> z(logits.begin(), logits.end());
    return static_cast<double>(lse_ce(z, y));
}

double bound_loss(std::span<const double> f, Label y, const ClassifierHead& head, std::span<const double> dmu,
                  std::span<const double> cov_dense, double alpha) {
    const std::size_t d = head.dim;
    std::vector<long double> z(head.classes);
    std::vector<double> dw(d);
    for (std::size_t c = 0; c < head.classes; ++c) {
        long double v = head.biases[c];
        for (std::size_t k = 0; k < d; ++k) v += static_cast<long double>(head.weights[c * d + k]) * f[k];
        long double shift = 0.0L;
        for (std::size_t k = 0; k < d; ++k) {
            dw[k] = head.weights[c * d + k] - head.weights[y * d + k];
            shift += static_cast<long double>(dw[k]) * dmu[k];
        }
        z[c] = v + alpha * shift + 0.5L * alpha * quad_form(cov_dense, dw);
    }
    return static_cast<double>(lse_ce(z, y));
}

NetOutput forward(const SegNetParams& params, const Tensor3& image) {
    auto conv = [](const Conv3x3& k, const Tensor3& in, bool relu) {
        const long h = static_cast<long>(in.height);
        const long w = static_cast<long>(in.width);
        Tensor3 out(k.out, in.height, in.width);
        for (std::size_t o = 0; o < k.out; ++o)
            for (long y = 0; y < h; ++y)
                for (long x = 0; x < w; ++x) {
                    long double s = k.biases[o];
                    for (std::size_t i = 0; i < k.in; ++i)
                        for (long ky = 0; ky < 3; ++ky)
                            for (long kx = 0; kx < 3; ++kx) {
                                const long sy = y + ky - 1;
                                const long sx = x + kx - 1;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                                s += static_cast<long double>(k.kernel(o, i, static_cast<std::size_t>(ky),
                                                                       static_cast<std::size_t>(kx))) *
                                     in.at(i, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
                            }
                    const double v = static_cast<double>(s);
                    out.at(o, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = relu ? std::max(v, 0.0) : v;
                }
        return out;
    };
    NetOutput r;
    r.features = conv(params.conv3, conv(params.conv2, conv(params.conv1, image, true), true), true);
    const ClassifierHead& head = params.head;
    r.logits = Tensor3(head.classes, image.height, image.width);
    for (std::size_t c = 0; c < head.classes; ++c)
        for (std::size_t y = 0; y < image.height; ++y)
            for (std::size_t x = 0; x < image.width; ++x) {
                long double s = head.biases[c];
                for (std::size_t k = 0; k < head.dim; ++k)
                    s += static_cast<long double>(head.weights[c * head.dim + k]) * r.features.at(k, y, x);
                r.logits.at(c, y, x) = static_cast<double>(s);
            }
    return r;
}

BatchMoments pool(const BatchMoments& a, const BatchMoments& b) {
    const std::size_t d = a.mean.size();
    BatchMoments out{Vec(d), SymMat(d), a.count + b.count};
    if (out.count == 0) return out;
    const long double na = static_cast<long double>(a.count);
    const long double nb = static_cast<long double>(b.count);
    const long double n = na + nb;
    for (std::size_t i = 0; i < d; ++i) out.mean[i] = static_cast<double>((na * a.mean[i] + nb * b.mean[i]) / n);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i; j < d; ++j) {
            const long double ca = a.cov(i, j) + static_cast<long double>(a.mean[i] - out.mean[i]) * (a.mean[j] - out.mean[j]);
            const long double cb = b.cov(i, j) + static_cast<long double>(b.mean[i] - out.mean[i]) * (b.mean[j] - out.mean[j]);
            out.cov.set(i, j, static_cast<double>((na * ca + nb * cb) / n));
        }
    return out;
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile of an empty set");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Surface surface_distance(std::size_t height, std::size_t width, std::span<const std::uint8_t> pred,
                         std::span<const std::uint8_t> gt) {
    auto border = [&](std::span<const std::uint8_t> m) {
        std::vector<std::pair<long, long>> pts;
        const long h = static_cast<long>(height);
        const long w = static_cast<long>(width);
        auto fg = [&](long y, long x) {
            return y >= 0 && y < h && x >= 0 && x < w && m[static_cast<std::size_t>(y * w + x)] != 0;
        };
        for (long y = 0; y < h; ++y)
            for (long x = 0; x < w; ++x)
                if (fg(y, x) && !(fg(y - 1, x) && fg(y + 1, x) && fg(y, x - 1) && fg(y, x + 1))) pts.emplace_back(y, x);
        return pts;
    };
    const auto a = border(pred);
    const auto b = border(gt);
    if (a.empty() && b.empty()) return {};
    if (a.empty() || b.empty()) {
        const double diag = std::hypot(static_cast<double>(height), static_cast<double>(width));
        return {diag, diag, true};
    }
    std::vector<double> pooled;
    auto directed = [&](const auto& from, const auto& to) {
        for (const auto& p : from) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& q : to)
                best = std::min(best, std::hypot(static_cast<double>(p.first - q.first),
                                                 static_cast<double>(p.second - q.second)));
            pooled.push_back(best);
        }
    };
    directed(a, b);
    directed(b, a);
    long double sum = 0.0L;
    for (double v : pooled) sum += v;
    return {percentile(pooled, 0.95), static_cast<double>(sum / static_cast<long double>(pooled.size())), false};
}

} // namespace tsaseg::verify::oracle
