// Timing comparison between the OpenMP batch forward pass and the serial
// loop reference on a mid-sized planted bundle. Also reports the largest
// relative score disagreement as a sanity check.

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "ppn/reference.hpp"
#include "ppn/synth.hpp"

using namespace ppn;

namespace {

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

int main(int argc, char** argv) {
    SynthConfig cfg;
    cfg.seen_classes = 30;
    cfg.unseen_classes = 10;
    cfg.num_attributes = 24;
    cfg.embed_dim = 32;
    cfg.num_regions = 6;
    cfg.feature_dim = 128;
    cfg.examples_per_class = 25;
    const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;

    const SynthResult synth = generate_synthetic(cfg, 7);
    DatasetBundle bundle = synth.bundle;
    normalize_region_features(bundle);
    const Tensor3 tensor = build_semantic_tensor(bundle.attributes, bundle.embeddings);
    SeededRng rng(7);
    const PpnParams params = PpnParams::init(bundle.dims, rng);
    const std::size_t n = bundle.examples.size();

    std::printf("examples=%zu classes=%zu regions=%zu features=%zu threads=%d repeats=%d\n", n,
                bundle.dims.num_classes, bundle.dims.num_regions, bundle.dims.feature_dim,
                omp_get_max_threads(), repeats);

    std::vector<CompatibilityScores> fast(n), slow(n);

    double best_parallel = 1e300;
    for (int rep = 0; rep < repeats; ++rep) {
        const double t0 = now_seconds();
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i)
            fast[static_cast<std::size_t>(i)] =
                compatibility(params, bundle.examples[static_cast<std::size_t>(i)], tensor);
        best_parallel = std::min(best_parallel, now_seconds() - t0);
    }

    double best_serial = 1e300;
    for (int rep = 0; rep < repeats; ++rep) {
        const double t0 = now_seconds();
        for (std::size_t i = 0; i < n; ++i)
            slow[i] = reference::compatibility(params, bundle.examples[i], tensor);
        best_serial = std::min(best_serial, now_seconds() - t0);
    }

    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < fast[i].psi.size(); ++c) {
            const double a = fast[i].psi[c], b = slow[i].psi[c];
            worst = std::max(worst, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}));
        }

    std::printf("parallel kernels : %8.3f ms  (%.1f examples/ms)\n", best_parallel * 1e3,
                static_cast<double>(n) / (best_parallel * 1e3));
    std::printf("serial reference : %8.3f ms  (%.1f examples/ms)\n", best_serial * 1e3,
                static_cast<double>(n) / (best_serial * 1e3));
    std::printf("speedup          : %8.2fx\n", best_serial / best_parallel);
    std::printf("max rel diff     : %g\n", worst);
    return worst <= 1e-9 ? 0 : 3;
}
