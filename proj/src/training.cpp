#include "ppn/training.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "ppn/container_io.hpp"
#include "ppn/eval.hpp"

namespace ppn {

void TrainConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ContractError("config: negative lambda");
    if (learning_rate <= 0.0) throw ContractError("config: learning_rate must be > 0");
    if (batch_size == 0) throw ContractError("config: batch_size must be >= 1");
}

PpnParams zeros_like(const PpnParams& p) {
    PpnParams z;
    z.alpha_weight = Matrix(p.alpha_weight.rows, p.alpha_weight.cols);
    z.alpha_bias.assign(p.alpha_bias.size(), 0.0);
    z.w = Matrix(p.w.rows, p.w.cols);
    z.beta_weight.assign(p.beta_weight.size(), 0.0);
    z.beta_bias = 0.0;
    return z;
}

void axpy(PpnParams& dst, const PpnParams& src, double scale) {
    for (std::size_t i = 0; i < dst.alpha_weight.data.size(); ++i)
        dst.alpha_weight.data[i] += scale * src.alpha_weight.data[i];
    for (std::size_t i = 0; i < dst.alpha_bias.size(); ++i)
        dst.alpha_bias[i] += scale * src.alpha_bias[i];
    for (std::size_t i = 0; i < dst.w.data.size(); ++i) dst.w.data[i] += scale * src.w.data[i];
    for (std::size_t i = 0; i < dst.beta_weight.size(); ++i)
        dst.beta_weight[i] += scale * src.beta_weight[i];
    dst.beta_bias += scale * src.beta_bias;
}

void scale_params(PpnParams& p, double s) {
    for (double& x : p.alpha_weight.data) x *= s;
    for (double& x : p.alpha_bias) x *= s;
    for (double& x : p.w.data) x *= s;
    for (double& x : p.beta_weight) x *= s;
    p.beta_bias *= s;
}

double max_abs(const PpnParams& p) {
    double m = std::abs(p.beta_bias);
    for (double x : p.alpha_weight.data) m = std::max(m, std::abs(x));
    for (double x : p.alpha_bias) m = std::max(m, std::abs(x));
    for (double x : p.w.data) m = std::max(m, std::abs(x));
    for (double x : p.beta_weight) m = std::max(m, std::abs(x));
    return m;
}

std::vector<double*> param_coords(PpnParams& p) {
    std::vector<double*> out;
    out.reserve(p.coordinate_count());
    for (double& x : p.alpha_weight.data) out.push_back(&x);
    for (double& x : p.alpha_bias) out.push_back(&x);
    for (double& x : p.w.data) out.push_back(&x);
    for (double& x : p.beta_weight) out.push_back(&x);
    out.push_back(&p.beta_bias);
    return out;
}

double loss_ce(const ClassProbabilities& probs, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= probs.p.size())
        throw ContractError("loss_ce: label out of range");
    const double p = probs.p[static_cast<std::size_t>(label)];
    if (p <= 0.0) throw ContractError("loss_ce: label outside the active class set");
    return -std::log(p);
}

double loss_attr(const Vec& penalty, const std::vector<Vec>& attns) {
    if (attns.empty()) throw ContractError("loss_attr: zero valid regions");
    double sum = 0.0;
    for (const Vec& attn : attns) {
        for (std::size_t a = 0; a < penalty.size(); ++a) sum += penalty[a] * attn[a] * attn[a];
    }
    return sum / static_cast<double>(attns.size());
}

namespace {

// Penalty projected into the embedding space: v = sum_a h[a] * emb[a,:]
Vec penalty_embedding(const Vec& penalty, const Matrix& emb) {
    Vec v(emb.cols, 0.0);
    for (std::size_t a = 0; a < emb.rows; ++a) {
        const double h = penalty[a];
        auto row = emb.row(a);
        for (std::size_t k = 0; k < emb.cols; ++k) v[k] += h * row[k];
    }
    return v;
}

// Aggregated visual-semantic embedding u = sum_r beta_r W^T theta_r.
Vec visual_embedding(const PpnParams& params, const LabeledExample& ex, const Vec& beta) {
    Vec m(ex.regions.cols, 0.0);
    for (std::size_t r = 0; r < ex.regions.rows; ++r) {
        if (!ex.region_mask[r]) continue;
        auto row = ex.regions.row(r);
        for (std::size_t d = 0; d < m.size(); ++d) m[d] += beta[r] * row[d];
    }
    return matvec_t(params.w, m);
}

// alpha o (v - alpha.v): softmax Jacobian-vector product.
Vec softmax_jvp(const Vec& alpha, const Vec& v) {
    const double av = dot(alpha, v);
    Vec out(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) out[i] = alpha[i] * (v[i] - av);
    return out;
}

}  // namespace

double loss_vis(const PpnParams& params, const LabeledExample& ex, const Vec& penalty,
                const Matrix& emb) {
    const Vec beta = region_attention(params, ex.regions, ex.region_mask);
    const Vec u = visual_embedding(params, ex, beta);
    const Vec v = penalty_embedding(penalty, emb);
    return std::max(0.0, cosine(u, v));
}

namespace {

struct ExampleResult {
    LossBreakdown loss;
    PpnParams grad;
};

// Loss and analytic gradient for one example; gradient of
// ce + lambda1*attr + lambda2*vis, unscaled by batch size.
ExampleResult example_backward(const LabeledExample& ex, const PpnParams& params,
                               const Tensor3& tensor, const Vec& penalty, const Matrix& emb,
                               const std::set<int>& active, const TrainConfig& cfg,
                               bool want_grad) {
    const std::size_t A = tensor.d1, K = tensor.d2, R = ex.regions.rows;
    ExampleResult out;
    if (want_grad) out.grad = zeros_like(params);

    const Vec beta = region_attention(params, ex.regions, ex.region_mask);
    std::vector<std::size_t> valid;
    for (std::size_t r = 0; r < R; ++r)
        if (ex.region_mask[r]) valid.push_back(r);
    const double r_valid = static_cast<double>(valid.size());

    // Forward caches per valid region.
    std::vector<Vec> attns(valid.size());
    std::vector<Vec> us(valid.size());
    // q[i][j] for valid region i and the j-th active class
    std::vector<Vec> q(valid.size(), Vec(active.size(), 0.0));
    CompatibilityScores scores;
    scores.psi.assign(tensor.d0, 0.0);
    for (std::size_t i = 0; i < valid.size(); ++i) {
        const std::size_t r = valid[i];
        attns[i] = attribute_attention(params, ex.regions.row(r));
        us[i] = matvec_t(params.w, ex.regions.row(r));
        std::size_t j = 0;
        for (int c : active) {
            const Vec f = region_class_semantic(attns[i], tensor, c);
            q[i][j] = dot(us[i], f);
            scores.psi[static_cast<std::size_t>(c)] += q[i][j] * beta[r];
            ++j;
        }
    }

    const ClassProbabilities probs = class_probabilities(scores, active);
    out.loss.ce = loss_ce(probs, ex.label);
    out.loss.attr = loss_attr(penalty, attns);
    const Vec pen_emb = penalty_embedding(penalty, emb);
    const Vec vis_u = visual_embedding(params, ex, beta);
    const double cos_uv = cosine(vis_u, pen_emb);
    out.loss.vis = std::max(0.0, cos_uv);
    out.loss.total = out.loss.ce + cfg.lambda1 * out.loss.attr + cfg.lambda2 * out.loss.vis;
    if (!want_grad) return out;

    // g_c = p_c - 1[c = label] over the active set
    Vec g(active.size());
    {
        std::size_t j = 0;
        for (int c : active) {
            g[j] = probs.p[static_cast<std::size_t>(c)] - (c == ex.label ? 1.0 : 0.0);
            ++j;
        }
    }
    // M = sum_c g_c T_c  (A x K), shared by the alpha and W chain terms
    Matrix m_weighted(A, K);
    {
        std::size_t j = 0;
        for (int c : active) {
            const double gc = g[j++];
            auto slice = tensor.slice(static_cast<std::size_t>(c));
            for (std::size_t i = 0; i < A * K; ++i) m_weighted.data[i] += gc * slice[i];
        }
    }
    double psi_weighted = 0.0;
    {
        std::size_t j = 0;
        for (int c : active) psi_weighted += g[j++] * scores.psi[static_cast<std::size_t>(c)];
    }

    for (std::size_t i = 0; i < valid.size(); ++i) {
        const std::size_t r = valid[i];
        auto theta = ex.regions.row(r);

        // cross-entropy through W: beta_r * theta_r (M^T alpha_r)^T
        const Vec f_weighted = matvec_t(m_weighted, attns[i]);
        add_outer(out.grad.w, theta, f_weighted, beta[r]);

        // cross-entropy through the beta logits
        double g_q = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) g_q += g[j] * q[i][j];
        const double d_beta = beta[r] * (g_q - psi_weighted);
        for (std::size_t d = 0; d < theta.size(); ++d)
            out.grad.beta_weight[d] += d_beta * theta[d];
        out.grad.beta_bias += d_beta;

        // cross-entropy + attr penalty through the alpha logits
        Vec v_alpha = matvec(m_weighted, us[i]);
        for (double& x : v_alpha) x *= beta[r];
        Vec attr_term(A);
        for (std::size_t a = 0; a < A; ++a)
            attr_term[a] = cfg.lambda1 * (2.0 / r_valid) * penalty[a] * attns[i][a];
        for (std::size_t a = 0; a < A; ++a) v_alpha[a] += attr_term[a];
        const Vec d_alpha = softmax_jvp(attns[i], v_alpha);
        add_outer(out.grad.alpha_weight, d_alpha, theta, 1.0);
        for (std::size_t a = 0; a < A; ++a) out.grad.alpha_bias[a] += d_alpha[a];
    }

    // hinge-active visual regularizer
    if (cos_uv > 0.0 && cfg.lambda2 != 0.0) {
        const double nu = norm2(vis_u);
        const double nv = norm2(pen_emb);
        Vec dc_du(vis_u.size());
        for (std::size_t k = 0; k < vis_u.size(); ++k)
            dc_du[k] = pen_emb[k] / (nu * nv) - cos_uv * vis_u[k] / (nu * nu);
        Vec m_pooled(ex.regions.cols, 0.0);
        for (std::size_t r : valid) {
            auto row = ex.regions.row(r);
            for (std::size_t d = 0; d < m_pooled.size(); ++d) m_pooled[d] += beta[r] * row[d];
        }
        add_outer(out.grad.w, m_pooled, dc_du, cfg.lambda2);
        for (std::size_t i = 0; i < valid.size(); ++i) {
            const std::size_t r = valid[i];
            double du = 0.0;
            for (std::size_t k = 0; k < vis_u.size(); ++k) du += (us[i][k] - vis_u[k]) * dc_du[k];
            const double d_beta = cfg.lambda2 * beta[r] * du;
            auto theta = ex.regions.row(r);
            for (std::size_t d = 0; d < theta.size(); ++d)
                out.grad.beta_weight[d] += d_beta * theta[d];
            out.grad.beta_bias += d_beta;
        }
    }
    return out;
}

}  // namespace

LossBreakdown total_loss(const Batch& batch, const PpnParams& params, const Tensor3& tensor,
                         const Vec& penalty, const TrainConfig& cfg) {
    if (batch.indices.empty()) throw ContractError("total_loss: empty batch");
    const auto& bundle = *batch.bundle;
    LossBreakdown sum;
    for (std::size_t i : batch.indices) {
        const auto r = example_backward(bundle.examples[i], params, tensor, penalty,
                                        bundle.embeddings, bundle.splits.seen_classes, cfg,
                                        /*want_grad=*/false);
        sum.total += r.loss.total;
        sum.ce += r.loss.ce;
        sum.attr += r.loss.attr;
        sum.vis += r.loss.vis;
    }
    const double n = static_cast<double>(batch.indices.size());
    sum.total /= n;
    sum.ce /= n;
    sum.attr /= n;
    sum.vis /= n;
    return sum;
}

LossBreakdown gradients(const Batch& batch, const PpnParams& params, const Tensor3& tensor,
                        const Vec& penalty, const TrainConfig& cfg, PpnParams& grad_out) {
    if (batch.indices.empty()) throw ContractError("gradients: empty batch");
    const auto& bundle = *batch.bundle;
    const std::size_t n = batch.indices.size();
    std::vector<ExampleResult> results(n);

#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        results[static_cast<std::size_t>(i)] = example_backward(
            bundle.examples[batch.indices[static_cast<std::size_t>(i)]], params, tensor, penalty,
            bundle.embeddings, bundle.splits.seen_classes, cfg, /*want_grad=*/true);
    }

    // Fixed-order reduction keeps the result independent of thread count.
    grad_out = zeros_like(params);
    LossBreakdown sum;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (const auto& r : results) {
        axpy(grad_out, r.grad, inv_n);
        sum.total += r.loss.total;
        sum.ce += r.loss.ce;
        sum.attr += r.loss.attr;
        sum.vis += r.loss.vis;
    }
    sum.total *= inv_n;
    sum.ce *= inv_n;
    sum.attr *= inv_n;
    sum.vis *= inv_n;
    return sum;
}

PpnParams finite_diff_grad(const std::function<double(const PpnParams&)>& loss, PpnParams params,
                           double step) {
    if (step <= 0.0) throw ContractError("finite_diff_grad: step must be > 0");
    PpnParams grad = zeros_like(params);
    auto coords = param_coords(params);
    auto gcoords = param_coords(grad);
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const double saved = *coords[i];
        *coords[i] = saved + step;
        const double hi = loss(params);
        *coords[i] = saved - step;
        const double lo = loss(params);
        *coords[i] = saved;
        *gcoords[i] = (hi - lo) / (2.0 * step);
    }
    return grad;
}

AdamState AdamState::init(const PpnParams& params) {
    AdamState s;
    s.m = zeros_like(params);
    s.v = zeros_like(params);
    return s;
}

void adam_step(AdamState& state, PpnParams& params, const PpnParams& grads, double lr) {
    PpnParams g = grads;
    auto gc = param_coords(g);
    for (double* p : gc) {
        if (!std::isfinite(*p)) throw NumericError("adam_step: non-finite gradient");
    }
    state.step += 1;
    auto pc = param_coords(params);
    auto mc = param_coords(state.m);
    auto vc = param_coords(state.v);
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < pc.size(); ++i) {
        *mc[i] = state.beta1 * *mc[i] + (1.0 - state.beta1) * *gc[i];
        *vc[i] = state.beta2 * *vc[i] + (1.0 - state.beta2) * *gc[i] * *gc[i];
        const double mhat = *mc[i] / bc1;
        const double vhat = *vc[i] / bc2;
        *pc[i] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

std::string format_log(const std::vector<LogRow>& log) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch\ttotal\tce\tattr\tvis\tval_metric\n";
    for (const auto& row : log) {
        os << row.epoch << '\t' << row.loss.total << '\t' << row.loss.ce << '\t' << row.loss.attr
           << '\t' << row.loss.vis << '\t' << row.val_metric << '\n';
    }
    return os.str();
}

namespace {

double early_stop_metric(EarlyStopMetric metric, const PpnParams& params,
                         const DatasetBundle& bundle, const Tensor3& tensor) {
    switch (metric) {
        case EarlyStopMetric::None:
            return 0.0;
        case EarlyStopMetric::ValT1:
            return restricted_accuracy(params, bundle, tensor, bundle.splits.val_indices,
                                       bundle.splits.seen_classes);
        case EarlyStopMetric::ValH: {
            // Seen side from the validation split, unseen side from the
            // designated unseen examples, each under its restricted softmax.
            const double s = restricted_accuracy(params, bundle, tensor,
                                                 bundle.splits.val_indices,
                                                 bundle.splits.seen_classes);
            const double u = restricted_accuracy(params, bundle, tensor,
                                                 bundle.splits.test_unseen_indices,
                                                 bundle.splits.unseen_classes);
            return harmonic_mean(u, s);
        }
    }
    return 0.0;
}

std::string rng_state_string(SeededRng& rng) {
    std::ostringstream os;
    os << rng.engine();
    return os.str();
}

}  // namespace

TrainResult train(const DatasetBundle& bundle, const TrainConfig& cfg) {
    cfg.validate();
    validate_bundle(bundle);
    DatasetBundle work = bundle;
    normalize_region_features(work);
    const Tensor3 tensor = build_semantic_tensor(work.attributes, work.embeddings, cfg.attr_norm);
    const Vec penalty = compute_unseen_penalty(work.attributes, work.splits.unseen_classes);
    if (work.splits.train_indices.empty()) throw DataError("train: empty train split");

    SeededRng rng(cfg.seed);
    PpnParams params = PpnParams::init(work.dims, rng);

    TrainResult result;
    AdamState adam = AdamState::init(params);
    std::vector<std::size_t> order = work.splits.train_indices;
    std::vector<LogRow> log;
    PpnParams best_params = params;
    double best_metric = -1.0;
    std::size_t best_epoch = 0;
    std::size_t since_best = 0;

    std::size_t epoch = 0;
    for (epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        LossBreakdown epoch_loss;
        std::size_t seen_examples = 0;
        bool bad = false;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            Batch batch;
            batch.bundle = &work;
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            batch.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
            PpnParams grad;
            const LossBreakdown loss = gradients(batch, params, tensor, penalty, cfg, grad);
            if (!std::isfinite(loss.total)) {
                bad = true;
                break;
            }
            const double bs = static_cast<double>(batch.indices.size());
            epoch_loss.total += loss.total * bs;
            epoch_loss.ce += loss.ce * bs;
            epoch_loss.attr += loss.attr * bs;
            epoch_loss.vis += loss.vis * bs;
            seen_examples += batch.indices.size();
            adam_step(adam, params, grad, cfg.learning_rate);
        }
        if (bad) {
            result.aborted_non_finite = true;
            epoch -= 1;  // last completed epoch
            break;
        }
        const double n = static_cast<double>(seen_examples);
        epoch_loss.total /= n;
        epoch_loss.ce /= n;
        epoch_loss.attr /= n;
        epoch_loss.vis /= n;

        const double metric = early_stop_metric(cfg.early_stop, params, work, tensor);
        log.push_back({epoch, epoch_loss, metric});

        if (cfg.early_stop != EarlyStopMetric::None) {
            if (metric > best_metric) {
                best_metric = metric;
                best_params = params;
                best_epoch = epoch;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                break;
            }
        }
    }
    if (epoch > cfg.epochs) epoch = cfg.epochs;

    result.final.params = params;
    result.final.config = cfg;
    result.final.epoch = epoch;
    result.final.rng_state = rng_state_string(rng);
    result.final.log = log;
    if (cfg.early_stop == EarlyStopMetric::None || best_metric < 0.0) {
        result.best = result.final;
    } else {
        result.best = result.final;
        result.best.params = best_params;
        result.best.epoch = best_epoch;
    }
    return result;
}

namespace {

int early_stop_to_int(EarlyStopMetric m) { return static_cast<int>(m); }
EarlyStopMetric early_stop_from_int(int i) { return static_cast<EarlyStopMetric>(i); }

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
    Container c("PPNC", 1);
    const PpnParams& p = ckpt.params;
    c.put_scalar("epoch", static_cast<std::int64_t>(ckpt.epoch));
    c.put_scalar("lambda1", ckpt.config.lambda1);
    c.put_scalar("lambda2", ckpt.config.lambda2);
    c.put_scalar("learning_rate", ckpt.config.learning_rate);
    c.put_scalar("batch_size", static_cast<std::int64_t>(ckpt.config.batch_size));
    c.put_scalar("epochs", static_cast<std::int64_t>(ckpt.config.epochs));
    c.put_scalar("seed", static_cast<std::int64_t>(ckpt.config.seed));
    c.put_scalar("early_stop", static_cast<std::int64_t>(early_stop_to_int(ckpt.config.early_stop)));
    c.put_scalar("patience", static_cast<std::int64_t>(ckpt.config.patience));
    c.put_scalar("attr_norm",
                 static_cast<std::int64_t>(ckpt.config.attr_norm == AttrNormMode::PriorRows));
    c.put_f64("alpha_weight", {p.alpha_weight.rows, p.alpha_weight.cols},
              p.alpha_weight.data.data());
    c.put_f64("alpha_bias", {p.alpha_bias.size()}, p.alpha_bias.data());
    c.put_f64("w", {p.w.rows, p.w.cols}, p.w.data.data());
    c.put_f64("beta_weight", {p.beta_weight.size()}, p.beta_weight.data());
    c.put_f64("beta_bias", {1}, &p.beta_bias);
    c.put_text("rng_state", ckpt.rng_state);
    c.put_text("training_log", format_log(ckpt.log));
    c.save(dir);
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    Container c = Container::load(dir, "PPNC");
    Checkpoint k;
    k.epoch = static_cast<std::size_t>(c.get_scalar_i64("epoch"));
    k.config.lambda1 = c.get_scalar_f64("lambda1");
    k.config.lambda2 = c.get_scalar_f64("lambda2");
    k.config.learning_rate = c.get_scalar_f64("learning_rate");
    k.config.batch_size = static_cast<std::size_t>(c.get_scalar_i64("batch_size"));
    k.config.epochs = static_cast<std::size_t>(c.get_scalar_i64("epochs"));
    k.config.seed = static_cast<std::uint64_t>(c.get_scalar_i64("seed"));
    k.config.early_stop = early_stop_from_int(static_cast<int>(c.get_scalar_i64("early_stop")));
    k.config.patience = static_cast<std::size_t>(c.get_scalar_i64("patience"));
    k.config.attr_norm =
        c.get_scalar_i64("attr_norm") ? AttrNormMode::PriorRows : AttrNormMode::TensorFibers;

    const auto& aw = c.shape("alpha_weight");
    k.params.alpha_weight = Matrix(aw[0], aw[1]);
    k.params.alpha_weight.data = c.get_f64("alpha_weight", aw);
    k.params.alpha_bias = c.get_f64("alpha_bias", {aw[0]});
    const auto& ws = c.shape("w");
    k.params.w = Matrix(ws[0], ws[1]);
    k.params.w.data = c.get_f64("w", ws);
    k.params.beta_weight = c.get_f64("beta_weight", {ws[0]});
    k.params.beta_bias = c.get_f64("beta_bias", {1})[0];
    k.rng_state = c.get_text("rng_state");

    // Log rows are reconstructed from the stored text table.
    std::istringstream is(c.get_text("training_log"));
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        LogRow row;
        std::istringstream ls(line);
        ls >> row.epoch >> row.loss.total >> row.loss.ce >> row.loss.attr >> row.loss.vis >>
            row.val_metric;
        k.log.push_back(row);
    }
    return k;
}

}  // namespace ppn
