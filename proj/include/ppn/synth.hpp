#pragma once

#include "ppn/data.hpp"

namespace ppn {

struct SynthConfig {
    std::size_t seen_classes = 20;
    std::size_t unseen_classes = 5;
    std::size_t num_attributes = 15;   // A
    std::size_t embed_dim = 16;        // K
    std::size_t num_regions = 4;       // R
    std::size_t feature_dim = 32;      // D
    std::size_t examples_per_class = 40;
    double noise_sigma = 0.05;
    std::size_t max_parts_per_region = 3;
};

// Ground truth of the planted model, kept out of the bundle: the oracle
// classifier needs the part dictionary, the trained model must not see it.
struct SynthGroundTruth {
    Matrix part_directions;  // A x D, orthonormal rows
    Matrix signatures;       // C x A (same values as bundle.attributes)
};

struct SynthResult {
    DatasetBundle bundle;
    SynthGroundTruth truth;
};

// Planted-attribute generator: each class gets a sparse signature over the
// attribute dictionary; every example's regions mix 1..max_parts_per_region
// part directions so that the whole class support is covered. Unseen-class
// signatures are convex blends of two seen-class signatures. Deterministic
// under seed.
SynthResult generate_synthetic(const SynthConfig& cfg, std::uint64_t seed);

// Brute-force nearest-signature classifier over ground truth: recovers the
// per-attribute activation as the max projection onto each part direction
// across regions, then picks the class whose signature has the highest
// cosine to it. Used as a pretest for planted-bundle separability.
int oracle_classify(const LabeledExample& ex, const SynthGroundTruth& truth);

// Fraction of examples at the given indices the oracle classifies correctly.
double oracle_accuracy(const DatasetBundle& bundle, const SynthGroundTruth& truth,
                       const std::vector<std::size_t>& indices);

}  // namespace ppn
