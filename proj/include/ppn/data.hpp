#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "ppn/linalg.hpp"

namespace ppn {

struct SplitSpec {
    std::set<int> seen_classes;
    std::set<int> unseen_classes;
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> test_seen_indices;
    std::vector<std::size_t> test_unseen_indices;
    std::vector<std::size_t> val_indices;
};

struct LabeledExample {
    Matrix regions;                 // R x D
    std::vector<std::uint8_t> region_mask;  // length R, 1 = valid proposal
    int label = 0;
};

struct Dims {
    std::size_t num_classes = 0;     // C
    std::size_t num_attributes = 0;  // A
    std::size_t embed_dim = 0;       // K
    std::size_t num_regions = 0;     // R
    std::size_t feature_dim = 0;     // D
};

struct DatasetBundle {
    Dims dims;
    std::vector<LabeledExample> examples;
    Matrix attributes;   // C x A class-attribute priors, rescaled to [0,1]
    Matrix embeddings;   // A x K, rows unit (or zero)
    SplitSpec splits;
    std::vector<std::string> class_names;
    std::vector<std::string> attribute_names;
};

// Which stage applies the attribute-dimension normalization.
enum class AttrNormMode {
    TensorFibers,  // normalize the C x A x K tensor per (class, embed-coord) fiber
    PriorRows,     // normalize prior rows before tensor construction
};

// out[c,a,k] = attrs[c,a] * emb[a,k], then per-(c,k) fibers L2-normalized
// across the attribute axis (zero fibers left alone).
Tensor3 build_semantic_tensor(const Matrix& attrs, const Matrix& emb,
                              AttrNormMode mode = AttrNormMode::TensorFibers);

// h[a] = 1 - mean over unseen classes of attrs[y,a]. Requires priors in [0,1].
Vec compute_unseen_penalty(const Matrix& attrs, const std::set<int>& unseen);

// Min-max rescale each attribute column to [0,1] (constant columns map to 0).
void rescale_attribute_columns(Matrix& attrs);

// Unit-normalize every valid region feature row in place.
void normalize_region_features(DatasetBundle& bundle);

// Throws DataError describing the first violated invariant, if any.
void validate_bundle(const DatasetBundle& bundle);

void save_bundle(const DatasetBundle& bundle, const std::filesystem::path& dir);
DatasetBundle load_bundle(const std::filesystem::path& dir);

// Mask-aware mean of region rows, for the global bilinear baseline.
Vec mean_pool_regions(const LabeledExample& ex);

}  // namespace ppn
