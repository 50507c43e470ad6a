#include "ppn/reference.hpp"

#include <cmath>

namespace ppn {
namespace reference {

Vec softmax(std::span<const double> v) {
    if (v.empty()) throw ContractError("reference softmax: empty input");
    long double sum = 0.0L;
    std::vector<long double> e(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        e[i] = expl(static_cast<long double>(v[i]));
        sum += e[i];
    }
    Vec out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(e[i] / sum);
    return out;
}

Tensor3 build_semantic_tensor(const Matrix& attrs, const Matrix& emb, AttrNormMode mode) {
    const std::size_t C = attrs.rows, A = attrs.cols, K = emb.cols;
    Matrix priors = attrs;
    if (mode == AttrNormMode::PriorRows) {
        for (std::size_t c = 0; c < C; ++c) {
            double n = 0.0;
            for (std::size_t a = 0; a < A; ++a) n += priors.at(c, a) * priors.at(c, a);
            n = std::sqrt(n);
            if (n >= 1e-12)
                for (std::size_t a = 0; a < A; ++a) priors.at(c, a) /= n;
        }
    }
    Tensor3 t(C, A, K);
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t a = 0; a < A; ++a)
            for (std::size_t k = 0; k < K; ++k) t.at(c, a, k) = priors.at(c, a) * emb.at(a, k);
    if (mode == AttrNormMode::TensorFibers) {
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < K; ++k) {
                double n = 0.0;
                for (std::size_t a = 0; a < A; ++a) n += t.at(c, a, k) * t.at(c, a, k);
                n = std::sqrt(n);
                if (n < 1e-12) continue;
                for (std::size_t a = 0; a < A; ++a) t.at(c, a, k) /= n;
            }
        }
    }
    return t;
}

CompatibilityScores compatibility(const PpnParams& params, const LabeledExample& ex,
                                  const Tensor3& tensor) {
    const std::size_t C = tensor.d0, A = tensor.d1, K = tensor.d2;
    const std::size_t R = ex.regions.rows, D = ex.regions.cols;

    // beta over valid regions, max-subtracted softmax written out by hand
    std::vector<double> logits(R, 0.0);
    double maxlog = -1e300;
    std::size_t n_valid = 0;
    for (std::size_t r = 0; r < R; ++r) {
        if (!ex.region_mask[r]) continue;
        double s = params.beta_bias;
        for (std::size_t d = 0; d < D; ++d) s += params.beta_weight[d] * ex.regions.at(r, d);
        logits[r] = s;
        maxlog = std::max(maxlog, s);
        ++n_valid;
    }
    if (n_valid == 0) throw ContractError("reference compatibility: all regions masked");
    double z = 0.0;
    std::vector<double> beta(R, 0.0);
    for (std::size_t r = 0; r < R; ++r)
        if (ex.region_mask[r]) z += std::exp(logits[r] - maxlog);
    for (std::size_t r = 0; r < R; ++r)
        if (ex.region_mask[r]) beta[r] = std::exp(logits[r] - maxlog) / z;

    CompatibilityScores out;
    out.psi.assign(C, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
        if (!ex.region_mask[r]) continue;
        // attribute attention for this region
        std::vector<double> al(A);
        double amax = -1e300;
        for (std::size_t a = 0; a < A; ++a) {
            double s = params.alpha_bias[a];
            for (std::size_t d = 0; d < D; ++d) s += params.alpha_weight.at(a, d) * ex.regions.at(r, d);
            al[a] = s;
            amax = std::max(amax, s);
        }
        double asum = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            al[a] = std::exp(al[a] - amax);
            asum += al[a];
        }
        for (std::size_t a = 0; a < A; ++a) al[a] /= asum;

        for (std::size_t c = 0; c < C; ++c) {
            // psi_c += (theta_r^T W f_c^r) beta_r with f expanded in place
            double q = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                double u = 0.0;
                for (std::size_t d = 0; d < D; ++d) u += ex.regions.at(r, d) * params.w.at(d, k);
                double f = 0.0;
                for (std::size_t a = 0; a < A; ++a) f += al[a] * tensor.at(c, a, k);
                q += u * f;
            }
            out.psi[c] += q * beta[r];
        }
    }
    return out;
}

}  // namespace reference
}  // namespace ppn
