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

#include "tsaseg/numerics.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace tsaseg {

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

SymMat SymMat::identity(std::size_t dim) {
    SymMat m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
}

SymMat SymMat::from_dense(std::size_t dim, std::span<const double> dense) {
    if (dense.size() != dim * dim) throw DimensionError("SymMat::from_dense: size mismatch");
    SymMat m(dim);
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i; j < dim; ++j)
            m.set(i, j, 0.5 * (dense[i * dim + j] + dense[j * dim + i]));
    return m;
}

void SymMat::add_outer(std::span<const double> v, double scale) {
    if (v.size() != dim_) throw DimensionError("SymMat::add_outer: length mismatch");
    std::size_t k = 0;
    for (std::size_t i = 0; i < dim_; ++i) {
        const double si = scale * v[i];
        for (std::size_t j = i; j < dim_; ++j) packed_[k++] += si * v[j];
    }
}

void SymMat::scale(double factor) {
    for (double& x : packed_) x *= factor;
}

void SymMat::axpy(double factor, const SymMat& other) {
    if (other.dim_ != dim_) throw DimensionError("SymMat::axpy: dimension mismatch");
    for (std::size_t k = 0; k < packed_.size(); ++k) packed_[k] += factor * other.packed_[k];
}

double SymMat::trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
}

Vec SymMat::multiply(std::span<const double> v) const {
    if (v.size() != dim_) throw DimensionError("SymMat::multiply: length mismatch");
    Vec out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim_; ++j) s += (*this)(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

std::vector<double> SymMat::to_dense() const {
    std::vector<double> dense(dim_ * dim_);
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = 0; j < dim_; ++j) dense[i * dim_ + j] = (*this)(i, j);
    return dense;
}

Vec LowerTriangular::multiply(std::span<const double> v) const {
    if (v.size() != dim_) throw DimensionError("LowerTriangular::multiply: length mismatch");
    Vec out(dim_);
    for (std::size_t i = 0; i < dim_; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += (*this)(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

SymMat LowerTriangular::gram() const {
    SymMat g(dim_);
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = i; j < dim_; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k <= i; ++k) s += (*this)(i, k) * (*this)(j, k);
            g.set(i, j, s);
        }
    return g;
}

double quad_form(const SymMat& a, std::span<const double> v) {
    const std::size_t d = a.dim();
    if (v.size() != d) throw DimensionError("quad_form: dimension mismatch");
    // Off-diagonal terms appear twice in v^T A v.
    double diag = 0.0;
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        diag += a(i, i) * v[i] * v[i];
        double row = 0.0;
        for (std::size_t j = i + 1; j < d; ++j) row += a(i, j) * v[j];
        off += v[i] * row;
    }
    return diag + 2.0 * off;
}

double default_jitter(const SymMat& a) {
    if (a.dim() == 0) return 0.0;
    return 1e-9 * a.trace() / static_cast<double>(a.dim());
}

namespace {

bool try_cholesky(const SymMat& a, double jitter, LowerTriangular& out) {
    const std::size_t d = a.dim();
    LowerTriangular l(d);
    for (std::size_t j = 0; j < d; ++j) {
        double diag = a(j, j) + jitter;
        for (std::size_t k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > 0.0) || !std::isfinite(diag)) return false;
        const double ljj = std::sqrt(diag);
        l.at(j, j) = ljj;
        for (std::size_t i = j + 1; i < d; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l.at(i, j) = s / ljj;
        }
    }
    out = std::move(l);
    return true;
}

} // namespace

LowerTriangular cholesky(const SymMat& a, double jitter) {
    if (jitter < 0.0) throw std::invalid_argument("cholesky: negative jitter");
    const auto packed = a.packed();
    bool all_zero = true;
    for (double x : packed) all_zero = all_zero && x == 0.0;
    if (all_zero && jitter == 0.0) return LowerTriangular(a.dim());

    LowerTriangular l;
    if (try_cholesky(a, jitter, l)) return l;
    double j = jitter > 0.0 ? jitter : default_jitter(a);
    if (!(j > 0.0)) j = 1e-12;
    for (int attempt = 0; attempt < 3; ++attempt) {
        j *= 10.0;
        if (try_cholesky(a, j, l)) return l;
    }
    throw NotPositiveDefinite("cholesky: matrix is not positive definite after jitter retries (final jitter " +
                              std::to_string(j) + ")");
}

double Rng::uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_index: empty range");
    // Rejection keeps the draw unbiased for every n.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_ << ' ' << (has_spare_ ? 1 : 0) << ' ';
    os << std::hexfloat << spare_;
    return os.str();
}

Rng Rng::deserialize(const std::string& state) {
    Rng rng;
    std::istringstream is(state);
    int spare_flag = 0;
    std::string spare_text;
    if (!(is >> rng.engine_ >> spare_flag >> spare_text))
        throw std::runtime_error("Rng::deserialize: malformed state");
    rng.has_spare_ = spare_flag != 0;
    rng.spare_ = std::strtod(spare_text.c_str(), nullptr);
    return rng;
}

bool Rng::operator==(const Rng& other) const {
    return engine_ == other.engine_ && has_spare_ == other.has_spare_ &&
           (!has_spare_ || spare_ == other.spare_);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // splitmix64 finalizer applied to a golden-ratio stride.
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Vec sample_gaussian(const Vec& mean, const LowerTriangular& chol, Rng& rng) {
    const std::size_t d = mean.size();
    if (chol.dim() != d) throw DimensionError("sample_gaussian: dimension mismatch");
    Vec z(d);
    for (std::size_t i = 0; i < d; ++i) z[i] = rng.normal();
    Vec out = chol.multiply(z.span());
    for (std::size_t i = 0; i < d; ++i) out[i] = mean[i] + out[i];
    return out;
}

double pairwise_sum(std::span<const double> values) {
    constexpr std::size_t kBlock = 32;
    if (values.size() <= kBlock) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

} // namespace tsaseg
