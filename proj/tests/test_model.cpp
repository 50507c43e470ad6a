#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ppn/model.hpp"
#include "ppn/reference.hpp"

using namespace ppn;

namespace {

PpnParams random_params(const Dims& dims, SeededRng& rng, double scale = 1.0) {
    PpnParams p;
    p.alpha_weight = Matrix(dims.num_attributes, dims.feature_dim);
    p.alpha_bias.assign(dims.num_attributes, 0.0);
    p.w = Matrix(dims.feature_dim, dims.embed_dim);
    p.beta_weight.assign(dims.feature_dim, 0.0);
    for (double& x : p.alpha_weight.data) x = rng.uniform(-scale, scale);
    for (double& x : p.alpha_bias) x = rng.uniform(-scale, scale);
    for (double& x : p.w.data) x = rng.uniform(-scale, scale);
    for (double& x : p.beta_weight) x = rng.uniform(-scale, scale);
    p.beta_bias = rng.uniform(-scale, scale);
    return p;
}

LabeledExample random_example(const Dims& dims, SeededRng& rng) {
    LabeledExample ex;
    ex.regions = Matrix(dims.num_regions, dims.feature_dim);
    for (double& x : ex.regions.data) x = rng.uniform(-1.0, 1.0);
    ex.region_mask.assign(dims.num_regions, 1);
    ex.label = static_cast<int>(rng.index(dims.num_classes));
    return ex;
}

Tensor3 random_tensor(const Dims& dims, SeededRng& rng) {
    Tensor3 t(dims.num_classes, dims.num_attributes, dims.embed_dim);
    for (double& x : t.data) x = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("attribute attention: zero map gives uniform attention") {
    Dims dims{3, 4, 5, 2, 6};
    SeededRng rng(1);
    PpnParams p = random_params(dims, rng, 0.0);
    const Vec attn = attribute_attention(p, Vec(6, 0.7));
    for (double a : attn) CHECK(a == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("attribute attention saturates on a dominant bias") {
    Dims dims{3, 4, 5, 2, 6};
    SeededRng rng(2);
    PpnParams p = random_params(dims, rng, 0.0);
    p.alpha_bias[0] = 1e4;
    const Vec attn = attribute_attention(p, Vec(6, 0.0));
    CHECK(attn[0] == doctest::Approx(1.0));
}

TEST_CASE("attribute attention matches affine-then-softmax oracle") {
    Dims dims{2, 5, 3, 2, 7};
    SeededRng rng(3);
    for (int it = 0; it < 20; ++it) {
        const PpnParams p = random_params(dims, rng);
        Vec region(7);
        for (double& x : region) x = rng.uniform(-2.0, 2.0);
        const Vec got = attribute_attention(p, region);
        Vec logits(5);
        for (std::size_t a = 0; a < 5; ++a) {
            logits[a] = p.alpha_bias[a];
            for (std::size_t d = 0; d < 7; ++d) logits[a] += p.alpha_weight.at(a, d) * region[d];
        }
        const Vec want = reference::softmax(logits);
        for (std::size_t a = 0; a < 5; ++a) CHECK(std::abs(got[a] - want[a]) <= 1e-12);
    }
}

TEST_CASE("region_class_semantic selection and annihilation") {
    Dims dims{3, 4, 5, 2, 6};
    SeededRng rng(4);
    const Tensor3 t = random_tensor(dims, rng);
    Vec onehot(4, 0.0);
    onehot[2] = 1.0;
    const Vec f = region_class_semantic(onehot, t, 1);
    for (std::size_t k = 0; k < 5; ++k) CHECK(f[k] == t.at(1, 2, k));

    const Tensor3 zero(dims.num_classes, dims.num_attributes, dims.embed_dim);
    const Vec fz = region_class_semantic(onehot, zero, 0);
    for (double x : fz) CHECK(x == 0.0);

    CHECK_THROWS_AS(region_class_semantic(onehot, t, 7), ContractError);
}

TEST_CASE("region_class_semantic matches double-loop oracle") {
    Dims dims{3, 4, 5, 2, 6};
    SeededRng rng(5);
    const Tensor3 t = random_tensor(dims, rng);
    for (int it = 0; it < 20; ++it) {
        Vec logits(4);
        for (double& x : logits) x = rng.uniform(-2.0, 2.0);
        const Vec attn = softmax(logits);
        const int c = static_cast<int>(rng.index(3));
        const Vec got = region_class_semantic(attn, t, c);
        for (std::size_t k = 0; k < 5; ++k) {
            double want = 0.0;
            for (std::size_t a = 0; a < 4; ++a) want += attn[a] * t.at((std::size_t)c, a, k);
            CHECK(std::abs(got[k] - want) <= 1e-12);
        }
    }
}

TEST_CASE("region attention: masking, zero map, singleton") {
    Dims dims{2, 3, 4, 4, 5};
    SeededRng rng(6);
    PpnParams p = random_params(dims, rng, 0.0);
    Matrix regions(4, 5);
    for (double& x : regions.data) x = rng.uniform(-1.0, 1.0);

    std::vector<std::uint8_t> mask{1, 0, 1, 1};
    const Vec beta = region_attention(p, regions, mask);
    CHECK(beta[1] == 0.0);
    for (std::size_t r : {0u, 2u, 3u}) CHECK(beta[r] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    std::vector<std::uint8_t> one{0, 0, 1, 0};
    const Vec b1 = region_attention(p, regions, one);
    CHECK(b1[2] == doctest::Approx(1.0));

    std::vector<std::uint8_t> none(4, 0);
    CHECK_THROWS_AS(region_attention(p, regions, none), ContractError);
}

TEST_CASE("region attention matches masked-softmax oracle") {
    Dims dims{2, 3, 4, 4, 5};
    SeededRng rng(7);
    for (int it = 0; it < 20; ++it) {
        const PpnParams p = random_params(dims, rng);
        Matrix regions(4, 5);
        for (double& x : regions.data) x = rng.uniform(-1.0, 1.0);
        std::vector<std::uint8_t> mask(4, 0);
        mask[rng.index(4)] = 1;
        for (auto& m : mask)
            if (rng.uniform(0, 1) < 0.6) m = 1;
        const Vec beta = region_attention(p, regions, mask);
        Vec logits;
        std::vector<std::size_t> valid;
        for (std::size_t r = 0; r < 4; ++r) {
            if (!mask[r]) continue;
            valid.push_back(r);
            logits.push_back(dot(p.beta_weight, regions.row(r)) + p.beta_bias);
        }
        const Vec want = reference::softmax(logits);
        for (std::size_t i = 0; i < valid.size(); ++i)
            CHECK(std::abs(beta[valid[i]] - want[i]) <= 1e-12);
    }
}

TEST_CASE("compatibility: zero embedding gives zero scores") {
    Dims dims{3, 4, 5, 2, 6};
    SeededRng rng(8);
    PpnParams p = random_params(dims, rng);
    p.w = Matrix(6, 5);
    const Tensor3 t = random_tensor(dims, rng);
    const LabeledExample ex = random_example(dims, rng);
    const CompatibilityScores s = compatibility(p, ex, t);
    for (double x : s.psi) CHECK(x == doctest::Approx(0.0));
}

TEST_CASE("compatibility invariant under region duplication and permutation") {
    Dims dims{3, 4, 5, 3, 6};
    SeededRng rng(9);
    const PpnParams p = random_params(dims, rng);
    const Tensor3 t = random_tensor(dims, rng);
    const LabeledExample ex = random_example(dims, rng);
    const CompatibilityScores base = compatibility(p, ex, t);

    LabeledExample dup;
    dup.label = ex.label;
    dup.regions = Matrix(6, 6);
    for (std::size_t r = 0; r < 3; ++r) {
        std::copy_n(ex.regions.row(r).begin(), 6, dup.regions.row(r).begin());
        std::copy_n(ex.regions.row(r).begin(), 6, dup.regions.row(r + 3).begin());
    }
    dup.region_mask.assign(6, 1);
    const CompatibilityScores doubled = compatibility(p, dup, t);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(doubled.psi[c] == doctest::Approx(base.psi[c]).epsilon(1e-12));

    LabeledExample perm = ex;
    std::vector<std::size_t> order{2, 0, 1};
    for (std::size_t r = 0; r < 3; ++r)
        std::copy_n(ex.regions.row(order[r]).begin(), 6, perm.regions.row(r).begin());
    const CompatibilityScores permuted = compatibility(p, perm, t);
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(permuted.psi[c] == doctest::Approx(base.psi[c]).epsilon(1e-12));
}

TEST_CASE("forward pass matches the triple-loop reference") {
    SeededRng rng(10);
    for (int it = 0; it < 20; ++it) {
        Dims dims;
        dims.num_classes = 1 + rng.index(8);
        dims.num_attributes = 1 + rng.index(8);
        dims.embed_dim = 1 + rng.index(8);
        dims.num_regions = 1 + rng.index(8);
        dims.feature_dim = 1 + rng.index(8);
        const PpnParams p = random_params(dims, rng);
        const Tensor3 t = random_tensor(dims, rng);
        LabeledExample ex = random_example(dims, rng);
        for (std::size_t r = 1; r < dims.num_regions; ++r)
            if (rng.uniform(0, 1) < 0.2) ex.region_mask[r] = 0;
        const CompatibilityScores got = compatibility(p, ex, t);
        const CompatibilityScores want = reference::compatibility(p, ex, t);
        for (std::size_t c = 0; c < dims.num_classes; ++c) {
            const double denom = std::max(1.0, std::abs(want.psi[c]));
            CHECK(std::abs(got.psi[c] - want.psi[c]) / denom <= 1e-9);
        }
    }
}

TEST_CASE("class probabilities over active sets") {
    CompatibilityScores s;
    s.psi = {5.0, 5.0, 5.0, 1.0};
    const ClassProbabilities p = class_probabilities(s, {0, 1, 2});
    CHECK(p.p[3] == 0.0);
    for (int c : {0, 1, 2})
        CHECK(p.p[(std::size_t)c] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    const ClassProbabilities single = class_probabilities(s, {3});
    CHECK(single.p[3] == doctest::Approx(1.0));

    CHECK_THROWS_AS(class_probabilities(s, {}), ContractError);

    CompatibilityScores v;
    v.psi = {1.0, 2.0, 3.0};
    const ClassProbabilities pv = class_probabilities(v, {0, 1, 2});
    const Vec want = reference::softmax(v.psi);
    for (std::size_t c = 0; c < 3; ++c) CHECK(std::abs(pv.p[c] - want[c]) <= 1e-12);

    // argmax invariant under constant shifts
    CompatibilityScores shifted;
    shifted.psi = {101.0, 102.0, 103.0};
    const ClassProbabilities ps = class_probabilities(shifted, {0, 1, 2});
    CHECK(std::distance(ps.p.begin(), std::max_element(ps.p.begin(), ps.p.end())) ==
          std::distance(pv.p.begin(), std::max_element(pv.p.begin(), pv.p.end())));
}

TEST_CASE("attention outputs are simplices for fuzzed finite inputs") {
    SeededRng rng(11);
    for (int it = 0; it < 200; ++it) {
        Dims dims{2, 1 + rng.index(6), 3, 1 + rng.index(6), 1 + rng.index(6)};
        const PpnParams p = random_params(dims, rng, 10.0);
        const LabeledExample ex = random_example(dims, rng);
        const Vec attn = attribute_attention(p, ex.regions.row(0));
        double sum = 0.0;
        for (double a : attn) {
            CHECK(a > 0.0);
            sum += a;
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
        const Vec beta = region_attention(p, ex.regions, ex.region_mask);
        sum = 0.0;
        for (double b : beta) sum += b;
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("bilinear baseline score") {
    Matrix attrs(2, 3);
    attrs.data = {1, 0, 0, 0, 1, 0};
    Matrix emb(3, 3);
    emb.data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const Matrix cls = baseline_class_embeddings(attrs, emb);

    // identity w reduces to a dot product with the class direction
    Matrix w(3, 3);
    w.data = {1, 0, 0, 0, 1, 0, 0, 0, 1};
    const Vec feat{0.3, 0.4, 0.5};
    const CompatibilityScores s = bilinear_baseline_score(w, feat, cls);
    CHECK(s.psi[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(s.psi[1] == doctest::Approx(0.4).epsilon(1e-12));

    const CompatibilityScores z = bilinear_baseline_score(w, Vec(3, 0.0), cls);
    for (double x : z.psi) CHECK(x == 0.0);

    // random small instance against a loop oracle
    SeededRng rng(12);
    Matrix rw(4, 3);
    for (double& x : rw.data) x = rng.uniform(-1.0, 1.0);
    Matrix rcls(5, 3);
    for (double& x : rcls.data) x = rng.uniform(-1.0, 1.0);
    Vec rfeat(4);
    for (double& x : rfeat) x = rng.uniform(-1.0, 1.0);
    const CompatibilityScores rs = bilinear_baseline_score(rw, rfeat, rcls);
    for (std::size_t c = 0; c < 5; ++c) {
        double want = 0.0;
        for (std::size_t d = 0; d < 4; ++d)
            for (std::size_t k = 0; k < 3; ++k) want += rfeat[d] * rw.at(d, k) * rcls.at(c, k);
        CHECK(std::abs(rs.psi[c] - want) <= 1e-12);
    }

    CHECK_THROWS_AS(bilinear_baseline_score(w, Vec(2, 0.0), cls), ContractError);
}
