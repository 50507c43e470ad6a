#include "ppn/model.hpp"

#include <cmath>

namespace ppn {

PpnParams PpnParams::init(const Dims& dims, SeededRng& rng) {
    PpnParams p;
    p.alpha_weight = Matrix(dims.num_attributes, dims.feature_dim);
    p.alpha_bias.assign(dims.num_attributes, 0.0);
    p.w = Matrix(dims.feature_dim, dims.embed_dim);
    p.beta_weight.assign(dims.feature_dim, 0.0);
    p.beta_bias = 0.0;
    // Fan-based uniform init; zero beta gives uniform region attention at step 0.
    const double sa = 1.0 / std::sqrt(static_cast<double>(dims.feature_dim));
    for (double& x : p.alpha_weight.data) x = rng.uniform(-sa, sa);
    const double sw = 1.0 / std::sqrt(static_cast<double>(dims.feature_dim));
    for (double& x : p.w.data) x = rng.uniform(-sw, sw);
    return p;
}

std::size_t PpnParams::coordinate_count() const {
    return alpha_weight.data.size() + alpha_bias.size() + w.data.size() + beta_weight.size() + 1;
}

Vec attribute_attention(const PpnParams& params, std::span<const double> region) {
    Vec logits = matvec(params.alpha_weight, region);
    for (std::size_t a = 0; a < logits.size(); ++a) logits[a] += params.alpha_bias[a];
    return softmax(logits);
}

Vec region_class_semantic(std::span<const double> attn, const Tensor3& tensor, int class_id) {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= tensor.d0)
        throw ContractError("region_class_semantic: class id out of range");
    const std::size_t A = tensor.d1, K = tensor.d2;
    if (attn.size() != A) throw ContractError("region_class_semantic: attention length mismatch");
    Vec f(K, 0.0);
    const std::size_t c = static_cast<std::size_t>(class_id);
    for (std::size_t a = 0; a < A; ++a) {
        const double wa = attn[a];
        for (std::size_t k = 0; k < K; ++k) f[k] += wa * tensor.at(c, a, k);
    }
    return f;
}

Vec region_attention(const PpnParams& params, const Matrix& regions,
                     const std::vector<std::uint8_t>& mask) {
    const std::size_t R = regions.rows;
    std::vector<std::size_t> valid;
    for (std::size_t r = 0; r < R; ++r)
        if (mask[r]) valid.push_back(r);
    if (valid.empty()) throw ContractError("region_attention: all regions masked");
    Vec logits(valid.size());
    for (std::size_t i = 0; i < valid.size(); ++i)
        logits[i] = dot(params.beta_weight, regions.row(valid[i])) + params.beta_bias;
    Vec sm = softmax(logits);
    Vec out(R, 0.0);
    for (std::size_t i = 0; i < valid.size(); ++i) out[valid[i]] = sm[i];
    return out;
}

CompatibilityScores compatibility(const PpnParams& params, const LabeledExample& ex,
                                  const Tensor3& tensor) {
    const std::size_t C = tensor.d0, K = tensor.d2, R = ex.regions.rows;
    const Vec beta = region_attention(params, ex.regions, ex.region_mask);
    CompatibilityScores scores;
    scores.psi.assign(C, 0.0);
    Vec u(K);
    for (std::size_t r = 0; r < R; ++r) {
        if (!ex.region_mask[r]) continue;
        const Vec attn = attribute_attention(params, ex.regions.row(r));
        u = matvec_t(params.w, ex.regions.row(r));  // W^T theta_r
        for (std::size_t c = 0; c < C; ++c) {
            const Vec f = region_class_semantic(attn, tensor, static_cast<int>(c));
            scores.psi[c] += dot(u, f) * beta[r];
        }
    }
    return scores;
}

ClassProbabilities class_probabilities(const CompatibilityScores& scores,
                                       const std::set<int>& active_classes) {
    if (active_classes.empty()) throw ContractError("class_probabilities: empty active set");
    Vec logits;
    logits.reserve(active_classes.size());
    for (int c : active_classes) {
        if (c < 0 || static_cast<std::size_t>(c) >= scores.psi.size())
            throw ContractError("class_probabilities: class id out of range");
        logits.push_back(scores.psi[static_cast<std::size_t>(c)]);
    }
    const Vec sm = softmax(logits);
    ClassProbabilities out;
    out.p.assign(scores.psi.size(), 0.0);
    std::size_t i = 0;
    for (int c : active_classes) out.p[static_cast<std::size_t>(c)] = sm[i++];
    return out;
}

Matrix baseline_class_embeddings(const Matrix& attrs, const Matrix& emb) {
    return matmul(attrs, emb);  // (C x A) * (A x K)
}

CompatibilityScores bilinear_baseline_score(const Matrix& w, std::span<const double> global_feat,
                                            const Matrix& class_embeddings) {
    if (w.rows != global_feat.size() || w.cols != class_embeddings.cols)
        throw ContractError("bilinear_baseline_score: shape mismatch");
    const Vec proj = matvec_t(w, global_feat);  // w^T theta
    CompatibilityScores out;
    out.psi.assign(class_embeddings.rows, 0.0);
    for (std::size_t c = 0; c < class_embeddings.rows; ++c)
        out.psi[c] = dot(proj, class_embeddings.row(c));
    return out;
}

}  // namespace ppn
