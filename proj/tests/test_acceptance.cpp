// End-to-end acceptance gate. Each case prints one PASS/FAIL line so the
// binary's stdout doubles as a release checklist.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "doctest.h"
#include "ppn/eval.hpp"
#include "ppn/reference.hpp"
#include "ppn/synth.hpp"
#include "ppn/training.hpp"

using namespace ppn;
namespace fs = std::filesystem;

namespace {

void report(const char* name, bool pass) {
    std::cout << "acceptance: " << name << " ... " << (pass ? "PASS" : "FAIL") << std::endl;
    CHECK_MESSAGE(pass, name);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// One full pipeline run at the reference scale, shared by the cases below.
struct PipelineRun {
    SynthResult synth;
    TrainResult trained;
    double oracle_acc = 0.0;
    double t1 = 0.0;
    std::vector<SweepRow> sweep;
    double best_h = 0.0;
    double seconds = 0.0;
};

const PipelineRun& pipeline_run() {
    static PipelineRun r = [] {
        omp_set_num_threads(1);
        PipelineRun out;
        const auto t0 = std::chrono::steady_clock::now();

        SynthConfig scfg;  // 20 seen / 5 unseen, A=15 K=16 R=4 D=32, 40 per class
        out.synth = generate_synthetic(scfg, 42);
        validate_bundle(out.synth.bundle);

        std::vector<std::size_t> everything(out.synth.bundle.examples.size());
        for (std::size_t i = 0; i < everything.size(); ++i) everything[i] = i;
        out.oracle_acc = oracle_accuracy(out.synth.bundle, out.synth.truth, everything);

        TrainConfig tcfg;
        tcfg.epochs = 400;
        tcfg.seed = 42;
        tcfg.early_stop = EarlyStopMetric::None;
        out.trained = train(out.synth.bundle, tcfg);

        out.t1 = evaluate_zsl(out.trained.final.params, out.synth.bundle);
        out.sweep = calibration_sweep(out.trained.final.params, out.synth.bundle,
                                      CalibrationMode::Multiplicative,
                                      default_multiplicative_grid(41));
        for (const auto& row : out.sweep) out.best_h = std::max(out.best_h, row.h);

        out.seconds = seconds_since(t0);
        return out;
    }();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

bool dirs_byte_identical(const fs::path& a, const fs::path& b) {
    std::vector<fs::path> fa, fb;
    for (const auto& e : fs::directory_iterator(a)) fa.push_back(e.path().filename());
    for (const auto& e : fs::directory_iterator(b)) fb.push_back(e.path().filename());
    std::sort(fa.begin(), fa.end());
    std::sort(fb.begin(), fb.end());
    if (fa != fb) return false;
    for (const auto& name : fa)
        if (read_file(a / name) != read_file(b / name)) return false;
    return true;
}

SynthResult small_instance(std::uint64_t seed, std::size_t A = 7, std::size_t K = 9,
                           std::size_t R = 3, std::size_t D = 11) {
    SynthConfig cfg;
    cfg.seen_classes = 4;
    cfg.unseen_classes = 2;
    cfg.num_attributes = A;
    cfg.embed_dim = K;
    cfg.num_regions = R;
    cfg.feature_dim = D;
    cfg.examples_per_class = 2;
    return generate_synthetic(cfg, seed);
}

}  // namespace

TEST_CASE("gradient check: 10 seeded instances within 1e-5 in under 30s") {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const SynthResult synth = small_instance(seed);
        DatasetBundle bundle = synth.bundle;
        normalize_region_features(bundle);
        const Tensor3 tensor = build_semantic_tensor(bundle.attributes, bundle.embeddings);
        const Vec penalty = compute_unseen_penalty(bundle.attributes, bundle.splits.unseen_classes);
        SeededRng rng(seed);
        PpnParams params = PpnParams::init(bundle.dims, rng);
        for (double& x : params.alpha_bias) x = rng.uniform(-0.5, 0.5);
        for (double& x : params.beta_weight) x = rng.uniform(-0.5, 0.5);

        const TrainConfig cfg;
        const Batch batch{&bundle, bundle.splits.train_indices};
        PpnParams analytic;
        gradients(batch, params, tensor, penalty, cfg, analytic);
        PpnParams fd = finite_diff_grad(
            [&](const PpnParams& q) { return total_loss(batch, q, tensor, penalty, cfg).total; },
            params, 1e-5);

        const auto av = param_coords(analytic);
        const auto fv = param_coords(fd);
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double denom = std::max({std::abs(*av[i]), std::abs(*fv[i]), 1e-4});
            worst = std::max(worst, std::abs(*av[i] - *fv[i]) / denom);
        }
    }
    const double elapsed = seconds_since(t0);
    report("analytic gradients match finite differences (10 seeds, <=1e-5)", worst <= 1e-5);
    report("gradient check completes in under 30s", elapsed < 30.0);
}

TEST_CASE("harmonic mean reproduces the frozen reference operating points") {
    const bool ok = std::abs(harmonic_mean(65.8, 67.8) - 66.8) <= 0.05 &&
                    std::abs(harmonic_mean(57.5, 76.2) - 65.5) <= 0.05;
    report("harmonic mean matches reference (u,s,H) rows within 0.05", ok);
}

TEST_CASE("planted benchmark: oracle separability, trained accuracy, sweep H") {
    const PipelineRun& run = pipeline_run();
    report("planted-bundle oracle accuracy >= 0.99", run.oracle_acc >= 0.99);
    report("trained model unseen T1 >= 0.90", run.t1 >= 0.90);
    report("best harmonic mean over z sweep >= 0.80", run.best_h >= 0.80);
    report("single-threaded pipeline runs in under 60s", run.seconds < 60.0);
    MESSAGE("oracle=", run.oracle_acc, " t1=", run.t1, " best_h=", run.best_h,
            " seconds=", run.seconds);
}

TEST_CASE("calibration sweep is exactly monotone over an ascending z grid") {
    const PipelineRun& run = pipeline_run();
    bool monotone = run.sweep.size() >= 20;
    for (std::size_t i = 1; i < run.sweep.size(); ++i) {
        monotone = monotone && run.sweep[i].u >= run.sweep[i - 1].u &&
                   run.sweep[i].s <= run.sweep[i - 1].s;
    }
    report("u non-decreasing and s non-increasing across >=20 z grid points", monotone);
}

TEST_CASE("regularizers stay in [0,1] and hit their closed-form anchors") {
    SeededRng rng(7);
    bool in_bounds = true;
    for (int it = 0; it < 1000; ++it) {
        const std::size_t A = 2 + rng.index(8), R = 1 + rng.index(4);
        Vec penalty(A);
        for (double& h : penalty) h = rng.uniform(0.0, 1.0);
        std::vector<Vec> attns(R);
        for (Vec& a : attns) {
            a.resize(A);
            for (double& x : a) x = rng.uniform(-3.0, 3.0);
            a = softmax(a);
        }
        const double la = loss_attr(penalty, attns);
        in_bounds = in_bounds && la >= 0.0 && la <= 1.0;

        const SynthResult synth = small_instance(1000 + (std::uint64_t)it, 5, 6, 2, 7);
        PpnParams params = PpnParams::init(synth.bundle.dims, rng);
        for (double& x : params.w.data) x = rng.uniform(-1.0, 1.0);
        Vec vis_penalty(synth.bundle.dims.num_attributes);
        for (double& h : vis_penalty) h = rng.uniform(0.0, 1.0);
        const double lv = loss_vis(params, synth.bundle.examples[0], vis_penalty,
                                   synth.bundle.embeddings);
        in_bounds = in_bounds && lv >= 0.0 && lv <= 1.0;
    }
    report("1000 fuzzed regularizer values stay in [0,1]", in_bounds);

    const std::size_t A = 6, R = 3;
    std::vector<Vec> uniform_attn(R, Vec(A, 1.0 / A));
    const bool anchors = loss_attr(Vec(A, 0.0), uniform_attn) == 0.0 &&
                         std::abs(loss_attr(Vec(A, 1.0), uniform_attn) - 1.0 / A) <= 1e-12;
    report("attribute regularizer anchors: 0 at zero penalty, 1/A at uniform", anchors);
}

TEST_CASE("kernel forward pass agrees with the loop reference everywhere") {
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const SynthResult synth = small_instance(seed, 5, 6, 3, 8);
        DatasetBundle bundle = synth.bundle;
        normalize_region_features(bundle);
        const Tensor3 fast = build_semantic_tensor(bundle.attributes, bundle.embeddings);
        const Tensor3 slow = reference::build_semantic_tensor(bundle.attributes, bundle.embeddings);
        for (std::size_t i = 0; i < fast.data.size(); ++i)
            worst = std::max(worst, rel_err(fast.data[i], slow.data[i]));

        SeededRng rng(seed);
        const PpnParams params = PpnParams::init(bundle.dims, rng);
        for (const LabeledExample& ex : bundle.examples) {
            const CompatibilityScores a = compatibility(params, ex, fast);
            const CompatibilityScores b = reference::compatibility(params, ex, slow);
            for (std::size_t c = 0; c < a.psi.size(); ++c)
                worst = std::max(worst, rel_err(a.psi[c], b.psi[c]));
        }
    }
    report("forward pass within 1e-9 of the loop reference (20 instances)", worst <= 1e-9);
}

TEST_CASE("the full pipeline is bitwise repeatable under a fixed seed") {
    const fs::path root = fs::temp_directory_path() / "ppn_acceptance_repeat";
    fs::remove_all(root);
    fs::create_directories(root);
    std::string reports[2];
    for (int i = 0; i < 2; ++i) {
        const fs::path tag = root / std::to_string(i);
        SynthConfig cfg;
        cfg.seen_classes = 6;
        cfg.unseen_classes = 2;
        cfg.examples_per_class = 10;
        const SynthResult synth = generate_synthetic(cfg, 123);
        save_bundle(synth.bundle, tag / "bundle");
        TrainConfig tcfg;
        tcfg.epochs = 5;
        tcfg.batch_size = 16;
        tcfg.seed = 123;
        tcfg.early_stop = EarlyStopMetric::None;
        const TrainResult tr = train(synth.bundle, tcfg);
        save_checkpoint(tr.final, tag / "ckpt");
        reports[i] = format_report(evaluate_gzsl(tr.final.params, synth.bundle, {}));
    }
    const bool same = dirs_byte_identical(root / "0" / "bundle", root / "1" / "bundle") &&
                      dirs_byte_identical(root / "0" / "ckpt", root / "1" / "ckpt") &&
                      reports[0] == reports[1];
    report("repeated synth+train+eval produce byte-identical artifacts", same);
}
