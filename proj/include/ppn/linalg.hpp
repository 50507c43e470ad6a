#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ppn/errors.hpp"

namespace ppn {

using Vec = std::vector<double>;

// Row-major dense matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// C x A x K tensor, row-major over (c, a, k).
struct Tensor3 {
    std::size_t d0 = 0, d1 = 0, d2 = 0;
    Vec data;

    Tensor3() = default;
    Tensor3(std::size_t c, std::size_t a, std::size_t k)
        : d0(c), d1(a), d2(k), data(c * a * k, 0.0) {}

    double& at(std::size_t c, std::size_t a, std::size_t k) {
        return data[(c * d1 + a) * d2 + k];
    }
    double at(std::size_t c, std::size_t a, std::size_t k) const {
        return data[(c * d1 + a) * d2 + k];
    }
    // The A x K slice for one class.
    std::span<const double> slice(std::size_t c) const {
        return {data.data() + c * d1 * d2, d1 * d2};
    }
};

// Deterministic stream: mt19937_64 is fixed by the standard, so identical
// seeds give identical draws on every platform.
class SeededRng {
  public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double gaussian(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    std::uint64_t next_u64() { return engine_(); }
    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }
    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), engine_);
    }
    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

// Stable softmax (max subtraction).
Vec softmax(std::span<const double> v);

// Returns v / ||v||, or v unchanged when ||v|| < 1e-12.
Vec l2_normalize(std::span<const double> v);
void l2_normalize_inplace(std::span<double> v);

// Cosine similarity clamped to [-1, 1]; 0 when either norm < 1e-12.
double cosine(std::span<const double> u, std::span<const double> v);

double dot(std::span<const double> u, std::span<const double> v);
double norm2(std::span<const double> v);

Matrix matmul(const Matrix& a, const Matrix& b);
// y = A * x
Vec matvec(const Matrix& a, std::span<const double> x);
// y = A^T * x
Vec matvec_t(const Matrix& a, std::span<const double> x);
// A += scale * u v^T
void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v, double scale);

void check_finite(std::span<const double> v, const char* what);

}  // namespace ppn
