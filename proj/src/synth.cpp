#include "ppn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ppn {

namespace {

// Random orthonormal rows via Gram-Schmidt; requires count <= dim.
Matrix random_orthonormal_rows(std::size_t count, std::size_t dim, SeededRng& rng) {
    Matrix m(count, dim);
    for (std::size_t i = 0; i < count; ++i) {
        while (true) {
            for (std::size_t d = 0; d < dim; ++d) m.at(i, d) = rng.gaussian(0.0, 1.0);
            for (std::size_t j = 0; j < i; ++j) {
                const double p = dot(m.row(i), m.row(j));
                for (std::size_t d = 0; d < dim; ++d) m.at(i, d) -= p * m.at(j, d);
            }
            if (norm2(m.row(i)) > 1e-6) break;
        }
        l2_normalize_inplace(m.row(i));
    }
    return m;
}

double signature_cosine(std::span<const double> a, std::span<const double> b) {
    return cosine(a, b);
}

}  // namespace

SynthResult generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
    const std::size_t A = cfg.num_attributes, K = cfg.embed_dim, R = cfg.num_regions,
                      D = cfg.feature_dim;
    const std::size_t C = cfg.seen_classes + cfg.unseen_classes;
    if (cfg.seen_classes == 0 || A == 0 || K == 0 || R == 0 || D == 0 ||
        cfg.examples_per_class == 0)
        throw ContractError("generate_synthetic: zero-sized config");
    if (A > D) throw ContractError("generate_synthetic: need A <= D for an orthonormal dictionary");
    if (A < cfg.max_parts_per_region)
        throw ContractError("generate_synthetic: fewer attributes than parts per region");

    // Seen supports are capped so that the union of two of them still fits in
    // the available region slots.
    const std::size_t seen_cap = std::min<std::size_t>({4, A, cfg.max_parts_per_region * R / 2});
    if (seen_cap < 2) throw ContractError("generate_synthetic: not enough region slots for parts");

    SeededRng rng(seed);
    SynthResult out;
    out.truth.part_directions = random_orthonormal_rows(A, D, rng);

    // Class signatures: sparse rows in [0,1], pairwise cosine bounded away
    // from 1 so the nearest-signature oracle has margin.
    Matrix sig(C, A);
    auto too_close = [&](std::size_t c, double limit) {
        for (std::size_t j = 0; j < c; ++j)
            if (signature_cosine(sig.row(c), sig.row(j)) > limit) return true;
        return false;
    };
    std::vector<std::size_t> attrs(A);
    std::iota(attrs.begin(), attrs.end(), 0);
    for (std::size_t c = 0; c < cfg.seen_classes; ++c) {
        for (int attempt = 0;; ++attempt) {
            std::fill(sig.row(c).begin(), sig.row(c).end(), 0.0);
            const std::size_t sup = 2 + rng.index(seen_cap - 1);
            rng.shuffle(attrs);
            for (std::size_t s = 0; s < sup; ++s) sig.at(c, attrs[s]) = rng.uniform(0.3, 1.0);
            if (!too_close(c, 0.9) || attempt > 200) break;
        }
    }
    for (std::size_t c = cfg.seen_classes; c < C; ++c) {
        for (int attempt = 0;; ++attempt) {
            const std::size_t p1 = rng.index(cfg.seen_classes);
            std::size_t p2 = rng.index(cfg.seen_classes);
            while (p2 == p1) p2 = rng.index(cfg.seen_classes);
            const double t = rng.uniform(0.35, 0.65);
            for (std::size_t a = 0; a < A; ++a)
                sig.at(c, a) = t * sig.at(p1, a) + (1.0 - t) * sig.at(p2, a);
            if (!too_close(c, 0.95) || attempt > 200) break;
        }
    }
    out.truth.signatures = sig;

    DatasetBundle& b = out.bundle;
    b.dims = {C, A, K, R, D};
    b.attributes = sig;
    b.embeddings = Matrix(A, K);
    for (std::size_t a = 0; a < A; ++a) {
        for (std::size_t k = 0; k < K; ++k) b.embeddings.at(a, k) = rng.gaussian(0.0, 1.0);
        l2_normalize_inplace(b.embeddings.row(a));
    }
    for (std::size_t c = 0; c < C; ++c) b.class_names.push_back("class_" + std::to_string(c));
    for (std::size_t a = 0; a < A; ++a) b.attribute_names.push_back("attr_" + std::to_string(a));

    // Examples: spread the class support round-robin over the regions so every
    // support attribute shows up in at least one region.
    std::vector<std::size_t> support;
    for (std::size_t c = 0; c < C; ++c) {
        support.clear();
        for (std::size_t a = 0; a < A; ++a)
            if (sig.at(c, a) > 0.0) support.push_back(a);
        for (std::size_t e = 0; e < cfg.examples_per_class; ++e) {
            LabeledExample ex;
            ex.label = static_cast<int>(c);
            ex.regions = Matrix(R, D);
            ex.region_mask.assign(R, 1);
            rng.shuffle(support);
            std::vector<std::vector<std::size_t>> assigned(R);
            for (std::size_t s = 0; s < support.size(); ++s)
                assigned[s % R].push_back(support[s]);
            for (std::size_t r = 0; r < R; ++r) {
                if (assigned[r].empty()) assigned[r].push_back(support[rng.index(support.size())]);
                if (assigned[r].size() > cfg.max_parts_per_region)
                    throw ContractError("generate_synthetic: support exceeds region slots");
                auto row = ex.regions.row(r);
                for (std::size_t a : assigned[r]) {
                    const double w = sig.at(c, a);
                    auto dir = out.truth.part_directions.row(a);
                    for (std::size_t d = 0; d < D; ++d) row[d] += w * dir[d];
                }
                if (cfg.noise_sigma > 0.0) {
                    for (std::size_t d = 0; d < D; ++d)
                        row[d] += rng.gaussian(0.0, cfg.noise_sigma);
                }
            }
            b.examples.push_back(std::move(ex));
        }
    }

    // Splits: seen classes 60/20/20 train/test/val, unseen all test.
    for (std::size_t c = 0; c < cfg.seen_classes; ++c) b.splits.seen_classes.insert((int)c);
    for (std::size_t c = cfg.seen_classes; c < C; ++c) b.splits.unseen_classes.insert((int)c);
    const std::size_t epc = cfg.examples_per_class;
    for (std::size_t c = 0; c < C; ++c) {
        const std::size_t base = c * epc;
        if (c < cfg.seen_classes) {
            const std::size_t n_train = std::max<std::size_t>(1, epc * 3 / 5);
            const std::size_t n_test = std::max<std::size_t>(1, epc / 5);
            for (std::size_t e = 0; e < epc; ++e) {
                if (e < n_train)
                    b.splits.train_indices.push_back(base + e);
                else if (e < n_train + n_test)
                    b.splits.test_seen_indices.push_back(base + e);
                else
                    b.splits.val_indices.push_back(base + e);
            }
        } else {
            for (std::size_t e = 0; e < epc; ++e) b.splits.test_unseen_indices.push_back(base + e);
        }
    }
    return out;
}

int oracle_classify(const LabeledExample& ex, const SynthGroundTruth& truth) {
    const std::size_t A = truth.part_directions.rows;
    Vec act(A, 0.0);
    for (std::size_t r = 0; r < ex.regions.rows; ++r) {
        if (!ex.region_mask[r]) continue;
        for (std::size_t a = 0; a < A; ++a) {
            const double p = dot(ex.regions.row(r), truth.part_directions.row(a));
            act[a] = std::max(act[a], p);
        }
    }
    int best = 0;
    double best_score = -2.0;
    for (std::size_t c = 0; c < truth.signatures.rows; ++c) {
        const double s = cosine(act, truth.signatures.row(c));
        if (s > best_score) {
            best_score = s;
            best = static_cast<int>(c);
        }
    }
    return best;
}

double oracle_accuracy(const DatasetBundle& bundle, const SynthGroundTruth& truth,
                       const std::vector<std::size_t>& indices) {
    if (indices.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i : indices) {
        if (oracle_classify(bundle.examples[i], truth) == bundle.examples[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace ppn
