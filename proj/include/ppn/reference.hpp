#pragma once

#include "ppn/model.hpp"

namespace ppn {

// Naive loop implementations kept as the independent check for the kernel
// path. Same contracts as the main forward pass, written with no shared code
// beyond elementary scalar math.
namespace reference {

Tensor3 build_semantic_tensor(const Matrix& attrs, const Matrix& emb,
                              AttrNormMode mode = AttrNormMode::TensorFibers);

CompatibilityScores compatibility(const PpnParams& params, const LabeledExample& ex,
                                  const Tensor3& tensor);

Vec softmax(std::span<const double> v);

}  // namespace reference

}  // namespace ppn
