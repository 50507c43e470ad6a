#pragma once

#include "ppn/model.hpp"

namespace ppn {

enum class CalibrationMode { Multiplicative, Additive, None };

struct CalibrationConfig {
    CalibrationMode mode = CalibrationMode::Multiplicative;
    double z = 1e8;       // divisor for seen-class confidences
    double gamma = 0.0;   // subtractor for the additive variant

    void validate() const;
};

struct EvalReport {
    double t1_unseen = 0.0;
    double u = 0.0;
    double s = 0.0;
    double h = 0.0;
    std::vector<std::pair<int, double>> per_class;  // class id -> accuracy
    std::vector<int> excluded_classes;              // no test examples, skipped
    std::string calibration;
};

// Seen-class entries scaled down (divide by z / subtract gamma); scores are
// for argmax only, never renormalized.
Vec calibrate(const ClassProbabilities& probs, const std::set<int>& seen,
              const CalibrationConfig& cfg);

// Macro average over classes; classes with no examples are excluded and
// reported through `excluded` when given.
double per_class_accuracy(const std::vector<int>& predictions, const std::vector<int>& labels,
                          const std::set<int>& classes, std::vector<int>* excluded = nullptr,
                          std::vector<std::pair<int, double>>* table = nullptr);

double harmonic_mean(double u, double s);

// Per-class accuracy at the given example indices under a softmax restricted
// to `active`. Shared by ZSL scoring and the early-stop metric.
double restricted_accuracy(const PpnParams& params, const DatasetBundle& bundle,
                           const Tensor3& tensor, const std::vector<std::size_t>& indices,
                           const std::set<int>& active);

// T1 over the unseen test split, active set = unseen classes, no calibration.
double evaluate_zsl(const PpnParams& params, const DatasetBundle& bundle,
                    AttrNormMode attr_norm = AttrNormMode::TensorFibers);

EvalReport evaluate_gzsl(const PpnParams& params, const DatasetBundle& bundle,
                         const CalibrationConfig& cal,
                         AttrNormMode attr_norm = AttrNormMode::TensorFibers);

struct SweepRow {
    double parameter = 0.0;
    double u = 0.0;
    double s = 0.0;
    double h = 0.0;
};

// One GZSL report row per grid value; inference runs once, calibration is
// re-applied per point. For an ascending multiplicative grid the u/s
// monotonicity property is checked and a violation raises NumericError.
std::vector<SweepRow> calibration_sweep(const PpnParams& params, const DatasetBundle& bundle,
                                        CalibrationMode mode, const std::vector<double>& grid,
                                        AttrNormMode attr_norm = AttrNormMode::TensorFibers);

std::vector<double> default_multiplicative_grid(std::size_t points = 41);
std::vector<double> default_additive_grid(std::size_t points = 41);

std::string format_report(const EvalReport& report);
std::string format_sweep(const std::vector<SweepRow>& rows);

}  // namespace ppn
