#pragma once

#include <filesystem>
#include <functional>
#include <optional>

#include "ppn/model.hpp"

namespace ppn {

enum class EarlyStopMetric { None, ValH, ValT1 };

struct TrainConfig {
    double lambda1 = 0.1;
    double lambda2 = 0.1;
    double learning_rate = 0.001;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    std::uint64_t seed = 0;
    EarlyStopMetric early_stop = EarlyStopMetric::ValH;
    std::size_t patience = 10;
    AttrNormMode attr_norm = AttrNormMode::TensorFibers;

    void validate() const;
};

struct LossBreakdown {
    double total = 0.0;
    double ce = 0.0;
    double attr = 0.0;
    double vis = 0.0;
};

// Gradient holder mirroring PpnParams shapes.
PpnParams zeros_like(const PpnParams& p);
void axpy(PpnParams& dst, const PpnParams& src, double scale);
void scale_params(PpnParams& p, double s);
double max_abs(const PpnParams& p);
// Mutable views of every coordinate, in a fixed order.
std::vector<double*> param_coords(PpnParams& p);

double loss_ce(const ClassProbabilities& probs, int label);

// (1/R_valid) sum_r sum_a h[a] * attn_r[a]^2
double loss_attr(const Vec& penalty, const std::vector<Vec>& attns);

// max(0, cos(aggregated visual-semantic embedding, penalty-projected embedding))
double loss_vis(const PpnParams& params, const LabeledExample& ex, const Vec& penalty,
                const Matrix& emb);

struct Batch {
    const DatasetBundle* bundle = nullptr;
    std::vector<std::size_t> indices;
};

LossBreakdown total_loss(const Batch& batch, const PpnParams& params, const Tensor3& tensor,
                         const Vec& penalty, const TrainConfig& cfg);

// Analytic gradient of the batch-mean objective; also returns the loss.
LossBreakdown gradients(const Batch& batch, const PpnParams& params, const Tensor3& tensor,
                        const Vec& penalty, const TrainConfig& cfg, PpnParams& grad_out);

// Central differences per coordinate. Test/gradcheck oracle only.
PpnParams finite_diff_grad(const std::function<double(const PpnParams&)>& loss, PpnParams params,
                           double step);

struct AdamState {
    PpnParams m;
    PpnParams v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState init(const PpnParams& params);
};

void adam_step(AdamState& state, PpnParams& params, const PpnParams& grads, double lr);

struct LogRow {
    std::size_t epoch = 0;
    LossBreakdown loss;
    double val_metric = 0.0;
};

struct Checkpoint {
    PpnParams params;
    TrainConfig config;
    std::size_t epoch = 0;
    std::string rng_state;
    std::vector<LogRow> log;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

std::string format_log(const std::vector<LogRow>& log);

struct TrainResult {
    Checkpoint final;
    Checkpoint best;  // by early-stop metric; equals final when metric is None
    bool aborted_non_finite = false;
};

// Seeded mini-batch training over the bundle's train split. Region features
// are unit-normalized on a working copy before any forward pass.
TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg);

}  // namespace ppn
