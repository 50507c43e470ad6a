#pragma once

#include <set>

#include "ppn/data.hpp"

namespace ppn {

struct PpnParams {
    Matrix alpha_weight;  // A x D
    Vec alpha_bias;       // A
    Matrix w;             // D x K
    Vec beta_weight;      // D
    double beta_bias = 0.0;

    static PpnParams init(const Dims& dims, SeededRng& rng);
    std::size_t coordinate_count() const;
};

struct CompatibilityScores {
    Vec psi;  // length C
};

struct ClassProbabilities {
    Vec p;  // length C, zero outside the active set
};

// softmax(alpha_weight * region + alpha_bias), a simplex over attributes.
Vec attribute_attention(const PpnParams& params, std::span<const double> region);

// f_c^r[k] = sum_a attn[a] * tensor[c,a,k]
Vec region_class_semantic(std::span<const double> attn, const Tensor3& tensor, int class_id);

// Softmax of the beta logits over valid regions; masked regions get weight 0.
Vec region_attention(const PpnParams& params, const Matrix& regions,
                     const std::vector<std::uint8_t>& mask);

// psi_c = sum over valid regions of (theta_r^T W f_c^r) * beta_r
CompatibilityScores compatibility(const PpnParams& params, const LabeledExample& ex,
                                  const Tensor3& tensor);

// Softmax restricted to the active class set; inactive classes get 0.
ClassProbabilities class_probabilities(const CompatibilityScores& scores,
                                       const std::set<int>& active_classes);

// Eq-1 style global bilinear score: psi_c = global^T w class_emb_c.
CompatibilityScores bilinear_baseline_score(const Matrix& w, std::span<const double> global_feat,
                                            const Matrix& class_embeddings);

// class_embeddings[c,:] = sum_a attrs[c,a] * emb[a,:]
Matrix baseline_class_embeddings(const Matrix& attrs, const Matrix& emb);

}  // namespace ppn
