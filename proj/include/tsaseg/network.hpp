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
#include "tsaseg/tsa_loss.hpp"

namespace tsaseg {

/// Channel-major activation map (channels x height x width).
struct Tensor3 {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> values;

    Tensor3() = default;
    Tensor3(std::size_t c, std::size_t h, std::size_t w) : channels(c), height(h), width(w), values(c * h * w, 0.0) {}

    std::size_t pixels() const { return height * width; }
    double& at(std::size_t c, std::size_t y, std::size_t x) { return values[(c * height + y) * width + x]; }
    double at(std::size_t c, std::size_t y, std::size_t x) const { return values[(c * height + y) * width + x]; }
    std::span<const double> channel(std::size_t c) const { return {values.data() + c * pixels(), pixels()}; }

    bool same_shape(const Tensor3& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
    bool operator==(const Tensor3&) const = default;
};

/// Pixel-major copy of a channel-major map.
PixelFeatures to_pixel_features(const Tensor3& t);
/// Inverse of to_pixel_features.
Tensor3 from_pixel_features(const PixelFeatures& p, std::size_t height, std::size_t width);

/// 3x3 same-padding convolution; kernels indexed [out][in][ky][kx].
struct Conv3x3 {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> kernels;
    std::vector<double> biases;

    Conv3x3() = default;
    Conv3x3(std::size_t in_channels, std::size_t out_channels)
        : in(in_channels), out(out_channels), kernels(out_channels * in_channels * 9, 0.0), biases(out_channels, 0.0) {}

    double& kernel(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) {
        return kernels[((o * in + i) * 3 + ky) * 3 + kx];
    }
    double kernel(std::size_t o, std::size_t i, std::size_t ky, std::size_t kx) const {
        return kernels[((o * in + i) * 3 + ky) * 3 + kx];
    }
    bool operator==(const Conv3x3&) const = default;
};

inline constexpr std::size_t kHiddenChannels = 16;

/// conv1 (1->16) -> ReLU -> conv2 (16->16) -> ReLU -> conv3 (16->d) -> ReLU -> 1x1 head (d->C).
struct SegNetParams {
    Conv3x3 conv1;
    Conv3x3 conv2;
    Conv3x3 conv3;
    ClassifierHead head;

    SegNetParams() = default;
    /// Zero-initialized network with the given feature dimension and class count.
    SegNetParams(std::size_t feature_dim, std::size_t classes);

    /// Glorot-uniform kernels, zero biases.
    static SegNetParams initialize(std::size_t feature_dim, std::size_t classes, Rng& rng);

    std::size_t feature_dim() const { return conv3.out; }
    std::size_t classes() const { return head.classes; }

    /// Every parameter array in a fixed order.
    std::vector<std::span<double>> blocks();
    std::vector<std::span<const double>> blocks() const;
    std::size_t parameter_count() const;
    bool same_shape(const SegNetParams& o) const;

    bool operator==(const SegNetParams&) const = default;
};

struct ForwardCache {
    Tensor3 input;
    std::vector<double> cols1, cols2, cols3; // im2col matrices, (in*9) x pixels
    Tensor3 pre1, act1, pre2, act2, pre3;
};

struct ForwardResult {
    Tensor3 features; // d x H x W
    Tensor3 logits;   // C x H x W
    ForwardCache cache;
};

ForwardResult forward(const SegNetParams& params, const Tensor3& image);
/// Forward without keeping the cache.
void infer(const SegNetParams& params, const Tensor3& image, Tensor3& features, Tensor3& logits);

/// Gradients of sum(grad_logits * logits) + sum(grad_features * features).
SegNetParams backward(const SegNetParams& params, const ForwardCache& cache, const Tensor3& grad_logits,
                      const Tensor3& grad_features);

/// params += scale * other, blockwise.
void accumulate(SegNetParams& params, const SegNetParams& other, double scale = 1.0);

/// Euclidean norm over every parameter.
double global_norm(const SegNetParams& params);
/// Rescales `grads` so their global norm is at most max_norm; returns the norm before clipping.
double clip_global_norm(SegNetParams& grads, double max_norm);

/// velocity <- momentum*velocity + grads; params <- params - lr*velocity
void sgd_step(SegNetParams& params, const SegNetParams& grads, double lr, double momentum, SegNetParams& velocity);

/// teacher <- lambda*teacher + (1 - lambda)*student
void ema_teacher_update(SegNetParams& teacher, const SegNetParams& student, double lambda);

/// FNV-1a over the raw parameter bytes.
std::uint64_t checksum(const SegNetParams& params);

} // namespace tsaseg
