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

#include "tsaseg/network.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <Eigen/Core>

namespace tsaseg {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

// Per-thread buffer reused across passes so large temporaries do not fault in fresh pages.
std::vector<double>& scratch() {
    thread_local std::vector<double> buffer;
    return buffer;
}

void im2col(const Tensor3& in, std::vector<double>& cols) {
    const std::size_t h = in.height;
    const std::size_t w = in.width;
    const std::size_t p = h * w;
    cols.assign(in.channels * 9 * p, 0.0);
    for (std::size_t i = 0; i < in.channels; ++i)
        for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
                double* row = &cols[((i * 3 + ky) * 3 + kx) * p];
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - 1;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - 1;
                const std::size_t x0 = dx < 0 ? 1 : 0;
                const std::size_t x1 = dx > 0 ? w - 1 : w;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    const double* src = &in.values[(i * h + static_cast<std::size_t>(sy)) * w];
                    double* dst = row + y * w;
                    for (std::size_t x = x0; x < x1; ++x) dst[x] = src[static_cast<std::ptrdiff_t>(x) + dx];
                }
            }
}

void col2im(const std::vector<double>& cols, Tensor3& out) {
    const std::size_t h = out.height;
    const std::size_t w = out.width;
    const std::size_t p = h * w;
    std::fill(out.values.begin(), out.values.end(), 0.0);
    for (std::size_t i = 0; i < out.channels; ++i)
        for (std::size_t ky = 0; ky < 3; ++ky)
            for (std::size_t kx = 0; kx < 3; ++kx) {
                const double* row = &cols[((i * 3 + ky) * 3 + kx) * p];
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - 1;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - 1;
                const std::size_t x0 = dx < 0 ? 1 : 0;
                const std::size_t x1 = dx > 0 ? w - 1 : w;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + dy;
                    if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) continue;
                    double* dst = &out.values[(i * h + static_cast<std::size_t>(sy)) * w];
                    const double* src = row + y * w;
                    for (std::size_t x = x0; x < x1; ++x) dst[static_cast<std::ptrdiff_t>(x) + dx] += src[x];
                }
            }
}

/// Left-to-right sum. Eigen's vectorized reductions start at an address-dependent offset, so their
/// rounding would vary between otherwise identical runs.
double ordered_sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

void conv_forward(const Conv3x3& conv, const std::vector<double>& cols, std::size_t h, std::size_t w, Tensor3& out) {
    const std::size_t p = h * w;
    out = Tensor3(conv.out, h, w);
    ConstMatMap k(conv.kernels.data(), static_cast<Eigen::Index>(conv.out), static_cast<Eigen::Index>(conv.in * 9));
    ConstMatMap c(cols.data(), static_cast<Eigen::Index>(conv.in * 9), static_cast<Eigen::Index>(p));
    MatMap o(out.values.data(), static_cast<Eigen::Index>(conv.out), static_cast<Eigen::Index>(p));
    o.noalias() = k * c;
    for (std::size_t ch = 0; ch < conv.out; ++ch) o.row(static_cast<Eigen::Index>(ch)).array() += conv.biases[ch];
}

Tensor3 relu(const Tensor3& pre) {
    Tensor3 out = pre;
    for (double& v : out.values) v = v > 0.0 ? v : 0.0;
    return out;
}

void head_forward(const ClassifierHead& head, const Tensor3& features, Tensor3& logits) {
    const std::size_t p = features.pixels();
    logits = Tensor3(head.classes, features.height, features.width);
    ConstMatMap wm(head.weights.data(), static_cast<Eigen::Index>(head.classes), static_cast<Eigen::Index>(head.dim));
    ConstMatMap f(features.values.data(), static_cast<Eigen::Index>(head.dim), static_cast<Eigen::Index>(p));
    MatMap z(logits.values.data(), static_cast<Eigen::Index>(head.classes), static_cast<Eigen::Index>(p));
    z.noalias() = wm * f;
    for (std::size_t c = 0; c < head.classes; ++c) z.row(static_cast<Eigen::Index>(c)).array() += head.biases[c];
}

/// Returns dL/d(input) given dL/d(output) of a convolution and accumulates kernel/bias grads.
Tensor3 conv_backward(const Conv3x3& conv, const std::vector<double>& cols, const Tensor3& grad_out,
                      Conv3x3& grad, bool need_input_grad) {
    const std::size_t p = grad_out.pixels();
    ConstMatMap g(grad_out.values.data(), static_cast<Eigen::Index>(conv.out), static_cast<Eigen::Index>(p));
    ConstMatMap c(cols.data(), static_cast<Eigen::Index>(conv.in * 9), static_cast<Eigen::Index>(p));
    MatMap gk(grad.kernels.data(), static_cast<Eigen::Index>(conv.out), static_cast<Eigen::Index>(conv.in * 9));
    gk.noalias() = g * c.transpose();
    for (std::size_t ch = 0; ch < conv.out; ++ch) grad.biases[ch] = ordered_sum(grad_out.channel(ch));

    Tensor3 grad_in(conv.in, grad_out.height, grad_out.width);
    if (!need_input_grad) return grad_in;
    ConstMatMap k(conv.kernels.data(), static_cast<Eigen::Index>(conv.out), static_cast<Eigen::Index>(conv.in * 9));
    std::vector<double>& grad_cols = scratch();
    grad_cols.resize(conv.in * 9 * p);
    MatMap gc(grad_cols.data(), static_cast<Eigen::Index>(conv.in * 9), static_cast<Eigen::Index>(p));
    gc.noalias() = k.transpose() * g;
    col2im(grad_cols, grad_in);
    return grad_in;
}

void relu_backward(const Tensor3& pre, Tensor3& grad) {
    for (std::size_t k = 0; k < grad.values.size(); ++k)
        if (!(pre.values[k] > 0.0)) grad.values[k] = 0.0;
}

void glorot(std::vector<double>& w, double fan_in, double fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : w) x = rng.uniform(-limit, limit);
}

void check_image(const Tensor3& image) {
    if (image.channels != 1) throw DimensionError("forward: expected a single-channel image");
    if (image.height < 8 || image.width < 8) throw DimensionError("forward: image must be at least 8x8");
    for (double v : image.values)
        if (!std::isfinite(v)) throw std::invalid_argument("forward: image contains a non-finite value");
}

} // namespace

PixelFeatures to_pixel_features(const Tensor3& t) {
    PixelFeatures p(t.pixels(), t.channels);
    for (std::size_t c = 0; c < t.channels; ++c) {
        const auto ch = t.channel(c);
        for (std::size_t i = 0; i < ch.size(); ++i) p.values[i * t.channels + c] = ch[i];
    }
    return p;
}

Tensor3 from_pixel_features(const PixelFeatures& p, std::size_t height, std::size_t width) {
    if (p.count != height * width) throw DimensionError("from_pixel_features: pixel count mismatch");
    Tensor3 t(p.dim, height, width);
    for (std::size_t i = 0; i < p.count; ++i)
        for (std::size_t c = 0; c < p.dim; ++c) t.values[c * p.count + i] = p.values[i * p.dim + c];
    return t;
}

SegNetParams::SegNetParams(std::size_t feature_dim, std::size_t classes)
    : conv1(1, kHiddenChannels), conv2(kHiddenChannels, kHiddenChannels), conv3(kHiddenChannels, feature_dim),
      head(classes, feature_dim) {}

SegNetParams SegNetParams::initialize(std::size_t feature_dim, std::size_t classes, Rng& rng) {
    SegNetParams p(feature_dim, classes);
    for (Conv3x3* conv : {&p.conv1, &p.conv2, &p.conv3})
        glorot(conv->kernels, static_cast<double>(conv->in * 9), static_cast<double>(conv->out * 9), rng);
    glorot(p.head.weights, static_cast<double>(feature_dim), static_cast<double>(classes), rng);
    return p;
}

std::vector<std::span<double>> SegNetParams::blocks() {
    return {conv1.kernels, conv1.biases, conv2.kernels, conv2.biases,
            conv3.kernels, conv3.biases, head.weights,  head.biases};
}

std::vector<std::span<const double>> SegNetParams::blocks() const {
    return {conv1.kernels, conv1.biases, conv2.kernels, conv2.biases,
            conv3.kernels, conv3.biases, head.weights,  head.biases};
}

std::size_t SegNetParams::parameter_count() const {
    std::size_t n = 0;
    for (auto b : blocks()) n += b.size();
    return n;
}

bool SegNetParams::same_shape(const SegNetParams& o) const {
    return conv1.in == o.conv1.in && conv1.out == o.conv1.out && conv2.in == o.conv2.in &&
           conv2.out == o.conv2.out && conv3.in == o.conv3.in && conv3.out == o.conv3.out &&
           head.classes == o.head.classes && head.dim == o.head.dim;
}

ForwardResult forward(const SegNetParams& params, const Tensor3& image) {
    check_image(image);
    const std::size_t h = image.height;
    const std::size_t w = image.width;
    ForwardResult r;
    ForwardCache& c = r.cache;
    c.input = image;
    im2col(c.input, c.cols1);
    conv_forward(params.conv1, c.cols1, h, w, c.pre1);
    c.act1 = relu(c.pre1);
    im2col(c.act1, c.cols2);
    conv_forward(params.conv2, c.cols2, h, w, c.pre2);
    c.act2 = relu(c.pre2);
    im2col(c.act2, c.cols3);
    conv_forward(params.conv3, c.cols3, h, w, c.pre3);
    r.features = relu(c.pre3);
    head_forward(params.head, r.features, r.logits);
    return r;
}

void infer(const SegNetParams& params, const Tensor3& image, Tensor3& features, Tensor3& logits) {
    check_image(image);
    const std::size_t h = image.height;
    const std::size_t w = image.width;
    std::vector<double>& cols = scratch();
    Tensor3 pre;
    im2col(image, cols);
    conv_forward(params.conv1, cols, h, w, pre);
    Tensor3 act = relu(pre);
    im2col(act, cols);
    conv_forward(params.conv2, cols, h, w, pre);
    act = relu(pre);
    im2col(act, cols);
    conv_forward(params.conv3, cols, h, w, pre);
    features = relu(pre);
    head_forward(params.head, features, logits);
}

SegNetParams backward(const SegNetParams& params, const ForwardCache& cache, const Tensor3& grad_logits,
                      const Tensor3& grad_features) {
    const std::size_t h = cache.input.height;
    const std::size_t w = cache.input.width;
    const std::size_t p = h * w;
    const std::size_t d = params.feature_dim();
    const std::size_t classes = params.classes();
    if (grad_logits.channels != classes || grad_logits.height != h || grad_logits.width != w)
        throw DimensionError("backward: grad_logits shape does not match the forward pass");
    if (grad_features.channels != d || grad_features.height != h || grad_features.width != w)
        throw DimensionError("backward: grad_features shape does not match the forward pass");
    if (cache.pre3.channels != d || cache.pre3.height != h || cache.pre3.width != w)
        throw DimensionError("backward: cache does not match the parameters");

    SegNetParams grads(d, classes);

    Tensor3 features = relu(cache.pre3);
    ConstMatMap gz(grad_logits.values.data(), static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(p));
    ConstMatMap f(features.values.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(p));
    MatMap gw(grads.head.weights.data(), static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(d));
    gw.noalias() = gz * f.transpose();
    for (std::size_t c = 0; c < classes; ++c) grads.head.biases[c] = ordered_sum(grad_logits.channel(c));

    Tensor3 g3 = grad_features;
    ConstMatMap wm(params.head.weights.data(), static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(d));
    MatMap g3m(g3.values.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(p));
    g3m.noalias() += wm.transpose() * gz;
    relu_backward(cache.pre3, g3);

    Tensor3 g2 = conv_backward(params.conv3, cache.cols3, g3, grads.conv3, true);
    relu_backward(cache.pre2, g2);
    Tensor3 g1 = conv_backward(params.conv2, cache.cols2, g2, grads.conv2, true);
    relu_backward(cache.pre1, g1);
    conv_backward(params.conv1, cache.cols1, g1, grads.conv1, false);
    return grads;
}

void accumulate(SegNetParams& params, const SegNetParams& other, double scale) {
    if (!params.same_shape(other)) throw DimensionError("accumulate: parameter shapes differ");
    auto dst = params.blocks();
    const auto src = other.blocks();
    for (std::size_t b = 0; b < dst.size(); ++b)
        for (std::size_t k = 0; k < dst[b].size(); ++k) dst[b][k] += scale * src[b][k];
}

double global_norm(const SegNetParams& params) {
    double s = 0.0;
    for (auto block : params.blocks())
        for (double v : block) s += v * v;
    return std::sqrt(s);
}

double clip_global_norm(SegNetParams& grads, double max_norm) {
    if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be positive");
    const double norm = global_norm(grads);
    if (norm > max_norm) {
        const double scale = max_norm / norm;
        for (auto block : grads.blocks())
            for (double& v : block) v *= scale;
    }
    return norm;
}

void sgd_step(SegNetParams& params, const SegNetParams& grads, double lr, double momentum, SegNetParams& velocity) {
    if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: learning rate must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("sgd_step: momentum must lie in [0, 1)");
    if (!params.same_shape(grads) || !params.same_shape(velocity))
        throw DimensionError("sgd_step: parameter shapes differ");
    auto p = params.blocks();
    auto v = velocity.blocks();
    const auto g = grads.blocks();
    for (std::size_t b = 0; b < p.size(); ++b)
        for (std::size_t k = 0; k < p[b].size(); ++k) {
            v[b][k] = momentum * v[b][k] + g[b][k];
            p[b][k] -= lr * v[b][k];
        }
}

void ema_teacher_update(SegNetParams& teacher, const SegNetParams& student, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("ema_teacher_update: lambda must lie in [0, 1]");
    if (!teacher.same_shape(student)) throw DimensionError("ema_teacher_update: parameter shapes differ");
    auto t = teacher.blocks();
    const auto s = student.blocks();
    for (std::size_t b = 0; b < t.size(); ++b)
        for (std::size_t k = 0; k < t[b].size(); ++k) t[b][k] = lambda * t[b][k] + (1.0 - lambda) * s[b][k];
}

std::uint64_t checksum(const SegNetParams& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (auto block : params.blocks()) {
        for (double v : block) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char byte : bytes) {
                h ^= byte;
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

} // namespace tsaseg
