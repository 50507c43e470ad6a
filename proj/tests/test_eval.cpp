#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ppn/eval.hpp"
#include "ppn/synth.hpp"
#include "ppn/training.hpp"

using namespace ppn;

namespace {

SynthResult small_bundle(std::uint64_t seed, double sigma = 0.05) {
    SynthConfig cfg;
    cfg.seen_classes = 6;
    cfg.unseen_classes = 3;
    cfg.examples_per_class = 12;
    cfg.noise_sigma = sigma;
    return generate_synthetic(cfg, seed);
}

}  // namespace

TEST_CASE("calibrate: neutral divisor is the identity") {
    ClassProbabilities p;
    p.p = {0.5, 0.3, 0.2};
    CalibrationConfig cfg;
    cfg.z = 1.0;
    const Vec out = calibrate(p, {0, 1}, cfg);
    CHECK(out == p.p);
}

TEST_CASE("calibrate: hand case flips the argmax to unseen") {
    ClassProbabilities p;
    p.p = {0.9, 0.1};  // class 0 seen, class 1 unseen
    CalibrationConfig cfg;
    cfg.z = 10.0;
    const Vec out = calibrate(p, {0}, cfg);
    CHECK(out[0] == doctest::Approx(0.09).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(out[1] > out[0]);
}

TEST_CASE("calibrate: default z is 1e8 and additive subtracts gamma") {
    CalibrationConfig def;
    CHECK(def.z == 1e8);
    CHECK(def.mode == CalibrationMode::Multiplicative);

    ClassProbabilities p;
    p.p = {0.9, 0.1};
    CalibrationConfig add;
    add.mode = CalibrationMode::Additive;
    add.gamma = 0.85;
    const Vec out = calibrate(p, {0}, add);
    CHECK(out[0] == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(0.1).epsilon(1e-12));

    CalibrationConfig bad;
    bad.z = 0.5;
    CHECK_THROWS_AS(calibrate(p, {0}, bad), ContractError);
}

TEST_CASE("per-class accuracy is a macro average") {
    // two classes: class 0 all correct (2 examples), class 1 all wrong (3)
    const std::vector<int> labels{0, 0, 1, 1, 1};
    const std::vector<int> preds{0, 0, 0, 0, 0};
    CHECK(per_class_accuracy(preds, labels, {0, 1}) == doctest::Approx(0.5));
    CHECK(per_class_accuracy(labels, labels, {0, 1}) == doctest::Approx(1.0));

    std::vector<int> excluded;
    CHECK(per_class_accuracy(preds, labels, {0, 1, 7}, &excluded) == doctest::Approx(0.5));
    REQUIRE(excluded.size() == 1);
    CHECK(excluded[0] == 7);
}

TEST_CASE("per-class accuracy agrees with a confusion-matrix oracle") {
    SeededRng rng(41);
    for (int it = 0; it < 50; ++it) {
        const int C = 3;
        std::vector<int> labels, preds;
        for (int i = 0; i < 30; ++i) {
            labels.push_back((int)rng.index(C));
            preds.push_back((int)rng.index(C));
        }
        // confusion matrix route
        double cm[3][3] = {};
        for (std::size_t i = 0; i < labels.size(); ++i) cm[labels[i]][preds[i]] += 1.0;
        double want = 0.0;
        int used = 0;
        for (int c = 0; c < C; ++c) {
            double row = cm[c][0] + cm[c][1] + cm[c][2];
            if (row == 0) continue;
            want += cm[c][c] / row;
            ++used;
        }
        want /= used;
        CHECK(per_class_accuracy(preds, labels, {0, 1, 2}) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("harmonic mean values and bounds") {
    CHECK(harmonic_mean(65.8, 67.8) == doctest::Approx(66.785).epsilon(0.001));
    CHECK(std::abs(harmonic_mean(65.8, 67.8) - 66.8) <= 0.05);
    CHECK(std::abs(harmonic_mean(57.5, 76.2) - 65.5) <= 0.05);
    CHECK(harmonic_mean(0.4, 0.4) == doctest::Approx(0.4));
    CHECK(harmonic_mean(0.0, 0.0) == 0.0);

    SeededRng rng(42);
    for (int it = 0; it < 1000; ++it) {
        const double u = rng.uniform(0.0, 1.0), s = rng.uniform(0.0, 1.0);
        const double h = harmonic_mean(u, s);
        CHECK(h <= (u + s) / 2.0 + 1e-12);
        CHECK(h <= 2.0 * std::min(u, s) + 1e-12);
    }
}

TEST_CASE("random-parameter model scores near chance on ZSL") {
    const auto synth = small_bundle(51);
    SeededRng rng(4);
    const PpnParams p = PpnParams::init(synth.bundle.dims, rng);
    const double t1 = evaluate_zsl(p, synth.bundle);
    CHECK(t1 >= 0.0);
    CHECK(t1 <= 1.0);  // 3 unseen classes; chance is 1/3, any valid accuracy accepted
}

TEST_CASE("single-unseen-class bundle gives T1 = 1") {
    SynthConfig cfg;
    cfg.seen_classes = 5;
    cfg.unseen_classes = 1;
    cfg.examples_per_class = 8;
    const auto synth = generate_synthetic(cfg, 52);
    SeededRng rng(4);
    const PpnParams p = PpnParams::init(synth.bundle.dims, rng);
    CHECK(evaluate_zsl(p, synth.bundle) == doctest::Approx(1.0));
}

TEST_CASE("uncalibrated GZSL on a trained model is seen-biased; huge z flips it") {
    const auto synth = small_bundle(53);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.seed = 53;
    cfg.early_stop = EarlyStopMetric::None;
    const TrainResult tr = train(synth.bundle, cfg);

    CalibrationConfig none;
    none.z = 1.0;
    const EvalReport uncal = evaluate_gzsl(tr.final.params, synth.bundle, none);
    CHECK(uncal.s > uncal.u);  // seen-class confidence bias

    CalibrationConfig huge;
    huge.z = 1e300;
    const EvalReport flipped = evaluate_gzsl(tr.final.params, synth.bundle, huge);
    CHECK(flipped.s == doctest::Approx(0.0));  // all predictions unseen
    CHECK(flipped.h == doctest::Approx(0.0));

    // report H is consistent with its own u and s
    CHECK(uncal.h == doctest::Approx(harmonic_mean(uncal.u, uncal.s)).epsilon(1e-12));
}

TEST_CASE("multiplicative sweep is monotone and peaks between the extremes") {
    const auto synth = small_bundle(54);
    TrainConfig cfg;
    cfg.epochs = 15;
    cfg.batch_size = 16;
    cfg.seed = 54;
    cfg.early_stop = EarlyStopMetric::None;
    const TrainResult tr = train(synth.bundle, cfg);

    const auto grid = default_multiplicative_grid(25);
    const auto rows = calibration_sweep(tr.final.params, synth.bundle, CalibrationMode::Multiplicative, grid);
    REQUIRE(rows.size() == grid.size());
    for (std::size_t i = 1; i < rows.size(); ++i) {
        CHECK(rows[i].u >= rows[i - 1].u);
        CHECK(rows[i].s <= rows[i - 1].s);
    }
    // concave sweep shape: the best H beats both endpoints
    double best_h = 0.0;
    for (const auto& r : rows) best_h = std::max(best_h, r.h);
    CHECK(best_h >= rows.front().h);
    CHECK(best_h >= rows.back().h);

    // neutral grid point equals the uncalibrated evaluation
    CalibrationConfig neutral;
    neutral.z = 1.0;
    const EvalReport un = evaluate_gzsl(tr.final.params, synth.bundle, neutral);
    CHECK(rows.front().u == doctest::Approx(un.u));
    CHECK(rows.front().s == doctest::Approx(un.s));
}

TEST_CASE("additive sweep drives s to zero as gamma approaches 1") {
    const auto synth = small_bundle(55);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 16;
    cfg.seed = 55;
    cfg.early_stop = EarlyStopMetric::None;
    const TrainResult tr = train(synth.bundle, cfg);
    const auto rows = calibration_sweep(tr.final.params, synth.bundle, CalibrationMode::Additive,
                                        default_additive_grid(21));
    CHECK(rows.back().s == doctest::Approx(0.0));
}

TEST_CASE("sweep rejects bad grids") {
    const auto synth = small_bundle(56);
    SeededRng rng(1);
    const PpnParams p = PpnParams::init(synth.bundle.dims, rng);
    CHECK_THROWS_AS(calibration_sweep(p, synth.bundle, CalibrationMode::Multiplicative, {}),
                    ContractError);
    CHECK_THROWS_AS(
        calibration_sweep(p, synth.bundle, CalibrationMode::Multiplicative, {10.0, 1.0}),
        ContractError);
}
