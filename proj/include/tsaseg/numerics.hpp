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

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsaseg {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense real vector of fixed length.
class Vec {
public:
    Vec() = default;
    explicit Vec(std::size_t n, double fill = 0.0) : data_(n, fill) {}
    Vec(std::initializer_list<double> values) : data_(values) {}
    explicit Vec(std::vector<double> values) : data_(std::move(values)) {}
    explicit Vec(std::span<const double> values) : data_(values.begin(), values.end()) {}

    std::size_t size() const { return data_.size(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::span<double> span() { return data_; }
    std::span<const double> span() const { return data_; }
    const std::vector<double>& values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    bool operator==(const Vec&) const = default;

private:
    std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);

/// Symmetric d x d matrix stored as its packed upper triangle, row by row.
class SymMat {
public:
    SymMat() = default;
    explicit SymMat(std::size_t dim) : dim_(dim), packed_(dim * (dim + 1) / 2, 0.0) {}

    static SymMat identity(std::size_t dim);
    /// Symmetric part of a row-major dense matrix.
    static SymMat from_dense(std::size_t dim, std::span<const double> dense);

    std::size_t dim() const { return dim_; }
    double operator()(std::size_t i, std::size_t j) const { return packed_[index(i, j)]; }
    void set(std::size_t i, std::size_t j, double value) { packed_[index(i, j)] = value; }
    void add(std::size_t i, std::size_t j, double value) { packed_[index(i, j)] += value; }

    /// this += scale * v v^T
    void add_outer(std::span<const double> v, double scale);
    void scale(double factor);
    /// this += factor * other
    void axpy(double factor, const SymMat& other);

    double trace() const;
    Vec multiply(std::span<const double> v) const;
    std::vector<double> to_dense() const;

    std::span<const double> packed() const { return packed_; }
    std::span<double> packed() { return packed_; }

    bool operator==(const SymMat&) const = default;

private:
    std::size_t index(std::size_t i, std::size_t j) const {
        if (i > j) std::swap(i, j);
        return i * dim_ - i * (i + 1) / 2 + j;
    }

    std::size_t dim_ = 0;
    std::vector<double> packed_;
};

/// Lower-triangular factor, dense row-major storage (upper part kept at zero).
class LowerTriangular {
public:
    LowerTriangular() = default;
    explicit LowerTriangular(std::size_t dim) : dim_(dim), dense_(dim * dim, 0.0) {}

    std::size_t dim() const { return dim_; }
    double operator()(std::size_t i, std::size_t j) const { return dense_[i * dim_ + j]; }
    double& at(std::size_t i, std::size_t j) { return dense_[i * dim_ + j]; }

    Vec multiply(std::span<const double> v) const;
    /// L L^T as a symmetric matrix.
    SymMat gram() const;

private:
    std::size_t dim_ = 0;
    std::vector<double> dense_;
};

class NotPositiveDefinite : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// v^T A v
double quad_form(const SymMat& a, std::span<const double> v);

/// 1e-9 * trace(A) / d
double default_jitter(const SymMat& a);

/// Factor A + jitter*I. On failure the jitter is raised (to default_jitter(A)
/// when it starts at zero) and multiplied by 10, up to three retries.
/// The all-zero matrix factors exactly to L = 0.
LowerTriangular cholesky(const SymMat& a, double jitter);

/// Seedable generator: std::mt19937_64 with Box-Muller normals.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform();
    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform integer in [0, n), unbiased.
    std::uint64_t uniform_index(std::uint64_t n);
    double normal();

    std::string serialize() const;
    static Rng deserialize(const std::string& state);

    bool operator==(const Rng& other) const;

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Stateless 64-bit mix of (seed, index); used to give every sample its own stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// mean + L z, z ~ N(0, I)
Vec sample_gaussian(const Vec& mean, const LowerTriangular& chol, Rng& rng);

/// Pairwise (cascade) summation.
double pairwise_sum(std::span<const double> values);

} // namespace tsaseg
