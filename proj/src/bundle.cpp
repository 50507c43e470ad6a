#include "ppn/data.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ppn/container_io.hpp"

namespace ppn {

Tensor3 build_semantic_tensor(const Matrix& attrs, const Matrix& emb, AttrNormMode mode) {
    const std::size_t C = attrs.rows, A = attrs.cols, K = emb.cols;
    if (emb.rows != A) throw ContractError("build_semantic_tensor: attrs/embeddings disagree on A");

    Matrix priors = attrs;
    if (mode == AttrNormMode::PriorRows) {
        for (std::size_t c = 0; c < C; ++c) l2_normalize_inplace(priors.row(c));
    }

    Tensor3 t(C, A, K);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t a = 0; a < A; ++a) {
            const double p = priors.at(c, a);
            for (std::size_t k = 0; k < K; ++k) t.at(c, a, k) = p * emb.at(a, k);
        }
    }
    if (mode == AttrNormMode::TensorFibers) {
        Vec fiber(A);
        for (std::size_t c = 0; c < C; ++c) {
            for (std::size_t k = 0; k < K; ++k) {
                for (std::size_t a = 0; a < A; ++a) fiber[a] = t.at(c, a, k);
                l2_normalize_inplace(fiber);
                for (std::size_t a = 0; a < A; ++a) t.at(c, a, k) = fiber[a];
            }
        }
    }
    return t;
}

Vec compute_unseen_penalty(const Matrix& attrs, const std::set<int>& unseen) {
    if (unseen.empty()) throw ContractError("compute_unseen_penalty: empty unseen set");
    Vec h(attrs.cols, 0.0);
    for (int y : unseen) {
        if (y < 0 || static_cast<std::size_t>(y) >= attrs.rows)
            throw ContractError("compute_unseen_penalty: class id out of range");
        for (std::size_t a = 0; a < attrs.cols; ++a) h[a] += attrs.at(y, a);
    }
    for (std::size_t a = 0; a < attrs.cols; ++a) {
        h[a] = 1.0 - h[a] / static_cast<double>(unseen.size());
        h[a] = std::clamp(h[a], 0.0, 1.0);
    }
    return h;
}

void rescale_attribute_columns(Matrix& attrs) {
    for (std::size_t a = 0; a < attrs.cols; ++a) {
        double lo = attrs.at(0, a), hi = attrs.at(0, a);
        for (std::size_t c = 1; c < attrs.rows; ++c) {
            lo = std::min(lo, attrs.at(c, a));
            hi = std::max(hi, attrs.at(c, a));
        }
        const double span = hi - lo;
        for (std::size_t c = 0; c < attrs.rows; ++c) {
            attrs.at(c, a) = span > 0.0 ? (attrs.at(c, a) - lo) / span : 0.0;
        }
    }
}

void normalize_region_features(DatasetBundle& bundle) {
    for (auto& ex : bundle.examples) {
        for (std::size_t r = 0; r < ex.regions.rows; ++r) {
            if (ex.region_mask[r]) l2_normalize_inplace(ex.regions.row(r));
        }
    }
}

Vec mean_pool_regions(const LabeledExample& ex) {
    Vec out(ex.regions.cols, 0.0);
    std::size_t valid = 0;
    for (std::size_t r = 0; r < ex.regions.rows; ++r) {
        if (!ex.region_mask[r]) continue;
        ++valid;
        auto row = ex.regions.row(r);
        for (std::size_t d = 0; d < out.size(); ++d) out[d] += row[d];
    }
    if (valid == 0) throw ContractError("mean_pool_regions: no valid region");
    for (double& x : out) x /= static_cast<double>(valid);
    return out;
}

namespace {

void check_disjoint(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b,
                    const char* what) {
    std::set<std::size_t> sa(a.begin(), a.end());
    for (std::size_t i : b) {
        if (sa.count(i)) throw DataError(std::string("splits: index lists overlap (") + what + ")");
    }
}

}  // namespace

void validate_bundle(const DatasetBundle& b) {
    const auto& d = b.dims;
    if (d.num_classes == 0 || d.num_attributes == 0 || d.embed_dim == 0 || d.num_regions == 0 ||
        d.feature_dim == 0)
        throw DataError("bundle: zero dimension");
    if (b.attributes.rows != d.num_classes || b.attributes.cols != d.num_attributes)
        throw DataError("bundle: attribute matrix shape disagrees with dims");
    if (b.embeddings.rows != d.num_attributes || b.embeddings.cols != d.embed_dim)
        throw DataError("bundle: embedding matrix shape disagrees with dims");
    for (double x : b.attributes.data)
        if (!(x >= 0.0 && x <= 1.0)) throw DataError("bundle: attribute prior outside [0,1]");

    for (const auto& ex : b.examples) {
        if (ex.regions.rows != d.num_regions || ex.regions.cols != d.feature_dim)
            throw DataError("bundle: example region shape disagrees with dims");
        if (ex.region_mask.size() != d.num_regions)
            throw DataError("bundle: region mask length disagrees with dims");
        if (std::none_of(ex.region_mask.begin(), ex.region_mask.end(),
                         [](std::uint8_t m) { return m != 0; }))
            throw DataError("bundle: example with no valid region");
        if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= d.num_classes)
            throw DataError("bundle: label out of range");
        check_finite(ex.regions.data, "bundle regions");
    }

    const auto& s = b.splits;
    if (s.unseen_classes.empty()) throw DataError("splits: empty unseen class set");
    if (s.seen_classes.empty()) throw DataError("splits: empty seen class set");
    for (int y : s.seen_classes)
        if (s.unseen_classes.count(y)) throw DataError("splits: seen/unseen classes overlap");
    auto check_labels = [&](const std::vector<std::size_t>& idx, const std::set<int>& allowed,
                            const char* what) {
        for (std::size_t i : idx) {
            if (i >= b.examples.size()) throw DataError("splits: example index out of range");
            if (!allowed.count(b.examples[i].label))
                throw DataError(std::string("splits: label outside allowed classes (") + what +
                                ")");
        }
    };
    check_labels(s.train_indices, s.seen_classes, "train");
    check_labels(s.test_seen_indices, s.seen_classes, "test_seen");
    check_labels(s.test_unseen_indices, s.unseen_classes, "test_unseen");
    check_labels(s.val_indices, s.seen_classes, "val");
    check_disjoint(s.train_indices, s.test_seen_indices, "train/test_seen");
    check_disjoint(s.train_indices, s.test_unseen_indices, "train/test_unseen");
    check_disjoint(s.train_indices, s.val_indices, "train/val");
    check_disjoint(s.test_seen_indices, s.test_unseen_indices, "test_seen/test_unseen");
    check_disjoint(s.test_seen_indices, s.val_indices, "test_seen/val");
    check_disjoint(s.test_unseen_indices, s.val_indices, "test_unseen/val");
}

namespace {

std::vector<std::int64_t> to_i64(const std::vector<std::size_t>& v) {
    return {v.begin(), v.end()};
}

std::vector<std::int64_t> set_to_i64(const std::set<int>& v) {
    return {v.begin(), v.end()};
}

std::string join_lines(const std::vector<std::string>& v) {
    std::ostringstream os;
    for (const auto& s : v) os << s << '\n';
    return os.str();
}

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string line;
    while (std::getline(is, line)) out.push_back(line);
    return out;
}

}  // namespace

void save_bundle(const DatasetBundle& b, const std::filesystem::path& dir) {
    const auto& d = b.dims;
    const std::size_t n = b.examples.size();
    Container c("PPNB", 1);
    c.put_scalar("num_classes", static_cast<std::int64_t>(d.num_classes));
    c.put_scalar("num_attributes", static_cast<std::int64_t>(d.num_attributes));
    c.put_scalar("embed_dim", static_cast<std::int64_t>(d.embed_dim));
    c.put_scalar("num_regions", static_cast<std::int64_t>(d.num_regions));
    c.put_scalar("feature_dim", static_cast<std::int64_t>(d.feature_dim));
    c.put_scalar("num_examples", static_cast<std::int64_t>(n));

    std::vector<double> regions(n * d.num_regions * d.feature_dim);
    std::vector<std::uint8_t> mask(n * d.num_regions);
    std::vector<std::int64_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = b.examples[i];
        std::copy(ex.regions.data.begin(), ex.regions.data.end(),
                  regions.begin() + static_cast<std::ptrdiff_t>(i * d.num_regions * d.feature_dim));
        std::copy(ex.region_mask.begin(), ex.region_mask.end(),
                  mask.begin() + static_cast<std::ptrdiff_t>(i * d.num_regions));
        labels[i] = ex.label;
    }
    c.put_f64("regions", {n, d.num_regions, d.feature_dim}, regions.data());
    c.put_u8("region_mask", {n, d.num_regions}, mask.data());
    c.put_i64("labels", {n}, labels.data());
    c.put_f64("attributes", {d.num_classes, d.num_attributes}, b.attributes.data.data());
    c.put_f64("embeddings", {d.num_attributes, d.embed_dim}, b.embeddings.data.data());

    auto put_idx = [&](const char* name, const std::vector<std::size_t>& v) {
        auto iv = to_i64(v);
        c.put_i64(name, {iv.size()}, iv.data());
    };
    auto seen = set_to_i64(b.splits.seen_classes);
    auto unseen = set_to_i64(b.splits.unseen_classes);
    c.put_i64("seen_classes", {seen.size()}, seen.data());
    c.put_i64("unseen_classes", {unseen.size()}, unseen.data());
    put_idx("train_indices", b.splits.train_indices);
    put_idx("test_seen_indices", b.splits.test_seen_indices);
    put_idx("test_unseen_indices", b.splits.test_unseen_indices);
    put_idx("val_indices", b.splits.val_indices);
    c.put_text("class_names", join_lines(b.class_names));
    c.put_text("attribute_names", join_lines(b.attribute_names));
    c.save(dir);
}

DatasetBundle load_bundle(const std::filesystem::path& dir) {
    Container c = Container::load(dir, "PPNB");
    DatasetBundle b;
    auto& d = b.dims;
    d.num_classes = static_cast<std::size_t>(c.get_scalar_i64("num_classes"));
    d.num_attributes = static_cast<std::size_t>(c.get_scalar_i64("num_attributes"));
    d.embed_dim = static_cast<std::size_t>(c.get_scalar_i64("embed_dim"));
    d.num_regions = static_cast<std::size_t>(c.get_scalar_i64("num_regions"));
    d.feature_dim = static_cast<std::size_t>(c.get_scalar_i64("feature_dim"));
    const auto n = static_cast<std::size_t>(c.get_scalar_i64("num_examples"));

    auto regions = c.get_f64("regions", {n, d.num_regions, d.feature_dim});
    auto mask = c.get_u8("region_mask", {n, d.num_regions});
    auto labels = c.get_i64("labels", {n});
    b.examples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& ex = b.examples[i];
        ex.regions = Matrix(d.num_regions, d.feature_dim);
        std::copy_n(regions.begin() + static_cast<std::ptrdiff_t>(i * d.num_regions * d.feature_dim),
                    d.num_regions * d.feature_dim, ex.regions.data.begin());
        ex.region_mask.assign(mask.begin() + static_cast<std::ptrdiff_t>(i * d.num_regions),
                              mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * d.num_regions));
        ex.label = static_cast<int>(labels[i]);
    }
    b.attributes = Matrix(d.num_classes, d.num_attributes);
    b.attributes.data = c.get_f64("attributes", {d.num_classes, d.num_attributes});
    b.embeddings = Matrix(d.num_attributes, d.embed_dim);
    b.embeddings.data = c.get_f64("embeddings", {d.num_attributes, d.embed_dim});

    auto get_idx = [&](const char* name) {
        auto iv = c.get_i64(name, {});
        return std::vector<std::size_t>(iv.begin(), iv.end());
    };
    auto seen = c.get_i64("seen_classes", {});
    auto unseen = c.get_i64("unseen_classes", {});
    b.splits.seen_classes = {seen.begin(), seen.end()};
    b.splits.unseen_classes = {unseen.begin(), unseen.end()};
    b.splits.train_indices = get_idx("train_indices");
    b.splits.test_seen_indices = get_idx("test_seen_indices");
    b.splits.test_unseen_indices = get_idx("test_unseen_indices");
    b.splits.val_indices = get_idx("val_indices");
    b.class_names = split_lines(c.get_text("class_names"));
    b.attribute_names = split_lines(c.get_text("attribute_names"));
    validate_bundle(b);
    return b;
}

}  // namespace ppn
