#include "ppn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace ppn {

void CalibrationConfig::validate() const {
    if (mode == CalibrationMode::Multiplicative && z < 1.0)
        throw ContractError("calibration: z must be >= 1");
    if (mode == CalibrationMode::Additive && (gamma < 0.0 || gamma >= 1.0))
        throw ContractError("calibration: gamma must be in [0,1)");
}

Vec calibrate(const ClassProbabilities& probs, const std::set<int>& seen,
              const CalibrationConfig& cfg) {
    cfg.validate();
    Vec out = probs.p;
    switch (cfg.mode) {
        case CalibrationMode::None:
            break;
        case CalibrationMode::Multiplicative:
            for (int c : seen) out[static_cast<std::size_t>(c)] /= cfg.z;
            break;
        case CalibrationMode::Additive:
            for (int c : seen) out[static_cast<std::size_t>(c)] -= cfg.gamma;
            break;
    }
    return out;
}

double per_class_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                          const std::set<int>& classes, std::vector<int>* excluded,
                          std::vector<std::pair<int, double>>* table) {
    if (predictions.size() != labels.size())
        throw ContractError("per_class_accuracy: predictions/labels length mismatch");
    std::map<int, std::pair<std::size_t, std::size_t>> counts;  // class -> (correct, total)
    for (int c : classes) counts[c] = {0, 0};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = counts.find(labels[i]);
        if (it == counts.end()) continue;
        it->second.second += 1;
        if (predictions[i] == labels[i]) it->second.first += 1;
    }
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& [c, cnt] : counts) {
        if (cnt.second == 0) {
            if (excluded) excluded->push_back(c);
            continue;
        }
        const double acc = static_cast<double>(cnt.first) / static_cast<double>(cnt.second);
        if (table) table->emplace_back(c, acc);
        sum += acc;
        ++used;
    }
    return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

double harmonic_mean(double u, double s) {
    if (u + s <= 0.0) return 0.0;
    return 2.0 * u * s / (u + s);
}

namespace {

int argmax_lowest_index(const Vec& scores, const std::set<int>& active) {
    int best = -1;
    double best_score = 0.0;
    for (int c : active) {
        const double v = scores[static_cast<std::size_t>(c)];
        if (best < 0 || v > best_score) {
            best = c;
            best_score = v;
        }
    }
    return best;
}

// All-class probabilities for the listed examples, computed in parallel.
std::vector<ClassProbabilities> score_examples(const PpnParams& params,
                                               const DatasetBundle& bundle, const Tensor3& tensor,
                                               const std::vector<std::size_t>& indices,
                                               const std::set<int>& active) {
    std::vector<ClassProbabilities> out(indices.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(indices.size()); ++i) {
        const auto& ex = bundle.examples[indices[static_cast<std::size_t>(i)]];
        out[static_cast<std::size_t>(i)] =
            class_probabilities(compatibility(params, ex, tensor), active);
    }
    return out;
}

DatasetBundle preprocessed_copy(const DatasetBundle& bundle) {
    DatasetBundle work = bundle;
    normalize_region_features(work);
    return work;
}

std::set<int> all_classes(const DatasetBundle& bundle) {
    std::set<int> all = bundle.splits.seen_classes;
    all.insert(bundle.splits.unseen_classes.begin(), bundle.splits.unseen_classes.end());
    return all;
}

}  // namespace

double restricted_accuracy(const PpnParams& params, const DatasetBundle& bundle,
                           const Tensor3& tensor, const std::vector<std::size_t>& indices,
                           const std::set<int>& active) {
    if (indices.empty()) throw DataError("restricted_accuracy: empty test split");
    const auto probs = score_examples(params, bundle, tensor, indices, active);
    std::vector<int> preds(indices.size()), labels(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        preds[i] = argmax_lowest_index(probs[i].p, active);
        labels[i] = bundle.examples[indices[i]].label;
    }
    return per_class_accuracy(preds, labels, active);
}

double evaluate_zsl(const PpnParams& params, const DatasetBundle& bundle, AttrNormMode attr_norm) {
    const DatasetBundle work = preprocessed_copy(bundle);
    const Tensor3 tensor = build_semantic_tensor(work.attributes, work.embeddings, attr_norm);
    return restricted_accuracy(params, work, tensor, work.splits.test_unseen_indices,
                               work.splits.unseen_classes);
}

namespace {

struct GzslScores {
    std::vector<ClassProbabilities> probs;  // test_seen then test_unseen
    std::vector<int> labels;
    std::size_t n_seen = 0;  // first n_seen rows come from test_seen
};

GzslScores gzsl_scores(const PpnParams& params, const DatasetBundle& work, const Tensor3& tensor) {
    const auto& s = work.splits;
    if (s.test_seen_indices.empty() || s.test_unseen_indices.empty())
        throw DataError("evaluate_gzsl: empty test split");
    std::vector<std::size_t> indices = s.test_seen_indices;
    indices.insert(indices.end(), s.test_unseen_indices.begin(), s.test_unseen_indices.end());
    GzslScores out;
    out.probs = score_examples(params, work, tensor, indices, all_classes(work));
    out.labels.resize(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i)
        out.labels[i] = work.examples[indices[i]].label;
    out.n_seen = s.test_seen_indices.size();
    return out;
}

EvalReport report_from_scores(const GzslScores& scores, const DatasetBundle& work,
                              const CalibrationConfig& cal) {
    const std::set<int> active = all_classes(work);
    std::vector<int> preds(scores.probs.size());
    for (std::size_t i = 0; i < scores.probs.size(); ++i) {
        const Vec adjusted = calibrate(scores.probs[i], work.splits.seen_classes, cal);
        preds[i] = argmax_lowest_index(adjusted, active);
    }
    EvalReport report;
    std::vector<int> preds_seen(preds.begin(), preds.begin() + (std::ptrdiff_t)scores.n_seen);
    std::vector<int> labels_seen(scores.labels.begin(),
                                 scores.labels.begin() + (std::ptrdiff_t)scores.n_seen);
    std::vector<int> preds_unseen(preds.begin() + (std::ptrdiff_t)scores.n_seen, preds.end());
    std::vector<int> labels_unseen(scores.labels.begin() + (std::ptrdiff_t)scores.n_seen,
                                   scores.labels.end());
    report.s = per_class_accuracy(preds_seen, labels_seen, work.splits.seen_classes,
                                  &report.excluded_classes, &report.per_class);
    report.u = per_class_accuracy(preds_unseen, labels_unseen, work.splits.unseen_classes,
                                  &report.excluded_classes, &report.per_class);
    report.h = harmonic_mean(report.u, report.s);
    return report;
}

std::string calibration_label(const CalibrationConfig& cal) {
    std::ostringstream os;
    os.precision(10);
    switch (cal.mode) {
        case CalibrationMode::None:
            os << "none";
            break;
        case CalibrationMode::Multiplicative:
            os << "multiplicative z=" << cal.z;
            break;
        case CalibrationMode::Additive:
            os << "additive gamma=" << cal.gamma;
            break;
    }
    return os.str();
}

}  // namespace

EvalReport evaluate_gzsl(const PpnParams& params, const DatasetBundle& bundle,
                         const CalibrationConfig& cal, AttrNormMode attr_norm) {
    cal.validate();
    const DatasetBundle work = preprocessed_copy(bundle);
    const Tensor3 tensor = build_semantic_tensor(work.attributes, work.embeddings, attr_norm);
    const GzslScores scores = gzsl_scores(params, work, tensor);
    EvalReport report = report_from_scores(scores, work, cal);
    report.t1_unseen = restricted_accuracy(params, work, tensor, work.splits.test_unseen_indices,
                                           work.splits.unseen_classes);
    report.calibration = calibration_label(cal);
    return report;
}

std::vector<SweepRow> calibration_sweep(const PpnParams& params, const DatasetBundle& bundle,
                                        CalibrationMode mode, const std::vector<double>& grid,
                                        AttrNormMode attr_norm) {
    if (grid.empty()) throw ContractError("calibration_sweep: empty grid");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw ContractError("calibration_sweep: grid must be ascending");
    const DatasetBundle work = preprocessed_copy(bundle);
    const Tensor3 tensor = build_semantic_tensor(work.attributes, work.embeddings, attr_norm);
    const GzslScores scores = gzsl_scores(params, work, tensor);

    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (double g : grid) {
        CalibrationConfig cal;
        cal.mode = mode;
        if (mode == CalibrationMode::Multiplicative) cal.z = g;
        if (mode == CalibrationMode::Additive) cal.gamma = g;
        const EvalReport r = report_from_scores(scores, work, cal);
        rows.push_back({g, r.u, r.s, r.h});
    }
    if (mode == CalibrationMode::Multiplicative) {
        // Seen scores shrink uniformly with z, so u must not fall and s must
        // not rise anywhere along an ascending grid.
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].u < rows[i - 1].u || rows[i].s > rows[i - 1].s)
                throw NumericError("calibration_sweep: monotonicity violated");
        }
    }
    return rows;
}

std::vector<double> default_multiplicative_grid(std::size_t points) {
    if (points == 0) throw ContractError("grid needs at least one point");
    std::vector<double> grid(points, 1.0);
    for (std::size_t i = 1; i < points; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(points - 1);
        grid[i] = std::pow(10.0, 10.0 * t);  // log-spaced over [1, 1e10]
    }
    return grid;
}

std::vector<double> default_additive_grid(std::size_t points) {
    if (points == 0) throw ContractError("grid needs at least one point");
    std::vector<double> grid(points, 0.0);
    for (std::size_t i = 1; i < points; ++i)
        grid[i] = 0.999999 * static_cast<double>(i) / static_cast<double>(points - 1);
    return grid;
}

std::string format_report(const EvalReport& report) {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "calibration\t" << report.calibration << '\n';
    os << "t1_unseen\t" << report.t1_unseen << '\n';
    os << "u\t" << report.u << '\n';
    os << "s\t" << report.s << '\n';
    os << "h\t" << report.h << '\n';
    for (const auto& [c, acc] : report.per_class) os << "class\t" << c << '\t' << acc << '\n';
    for (int c : report.excluded_classes)
        os << "warning\tclass " << c << " has no test examples, excluded\n";
    return os.str();
}

std::string format_sweep(const std::vector<SweepRow>& rows) {
    std::ostringstream os;
    os.precision(10);
    os << "parameter\tu\ts\th\n";
    for (const auto& r : rows)
        os << r.parameter << '\t' << r.u << '\t' << r.s << '\t' << r.h << '\n';
    return os.str();
}

}  // namespace ppn
