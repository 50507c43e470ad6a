#include "ppn/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ppn {

void check_finite(std::span<const double> v, const char* what) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError(std::string(what) + ": non-finite value");
        }
    }
}

Vec softmax(std::span<const double> v) {
    if (v.empty()) throw ContractError("softmax: empty input");
    const double m = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - m);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

Vec l2_normalize(std::span<const double> v) {
    Vec out(v.begin(), v.end());
    l2_normalize_inplace(out);
    return out;
}

void l2_normalize_inplace(std::span<double> v) {
    const double n = norm2(v);
    if (n < 1e-12) return;
    for (double& x : v) x /= n;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ContractError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

double cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ContractError("cosine: length mismatch");
    const double nu = norm2(u);
    const double nv = norm2(v);
    if (nu < 1e-12 || nv < 1e-12) return 0.0;
    return std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ContractError("matmul: shape mismatch");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            for (std::size_t j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

Vec matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols != x.size()) throw ContractError("matvec: shape mismatch");
    Vec out(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) out[i] = dot(a.row(i), x);
    return out;
}

Vec matvec_t(const Matrix& a, std::span<const double> x) {
    if (a.rows != x.size()) throw ContractError("matvec_t: shape mismatch");
    Vec out(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double xi = x[i];
        auto row = a.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) out[j] += xi * row[j];
    }
    return out;
}

void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v, double scale) {
    if (a.rows != u.size() || a.cols != v.size()) throw ContractError("add_outer: shape mismatch");
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double s = scale * u[i];
        auto row = a.row(i);
        for (std::size_t j = 0; j < v.size(); ++j) row[j] += s * v[j];
    }
}

}  // namespace ppn
