#include <omp.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "ppn/container_io.hpp"
#include "ppn/eval.hpp"
#include "ppn/synth.hpp"
#include "ppn/training.hpp"

namespace fs = std::filesystem;
using namespace ppn;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

void write_file(const fs::path& path, const std::string& content) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + path.string());
    f << content;
}

struct CommonPaths {
    std::string bundle;
    std::string checkpoint;
};

EarlyStopMetric parse_early_stop(const std::string& s) {
    if (s == "none") return EarlyStopMetric::None;
    if (s == "val-h") return EarlyStopMetric::ValH;
    if (s == "val-t1") return EarlyStopMetric::ValT1;
    throw ContractError("unknown early-stop metric '" + s + "'");
}

AttrNormMode parse_attr_norm(const std::string& s) {
    if (s == "fibers") return AttrNormMode::TensorFibers;
    if (s == "rows") return AttrNormMode::PriorRows;
    throw ContractError("unknown attr-norm mode '" + s + "'");
}

CalibrationMode parse_cal_mode(const std::string& s) {
    if (s == "multiplicative") return CalibrationMode::Multiplicative;
    if (s == "additive") return CalibrationMode::Additive;
    if (s == "none") return CalibrationMode::None;
    throw ContractError("unknown calibration mode '" + s + "'");
}

int run(int argc, char** argv) {
    CLI::App app{"Part-prototype zero-shot learning pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "Line-oriented key=value config; flags override the file");
    app.allow_config_extras(false);

    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = library default)");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "Generate a planted synthetic bundle");
    SynthConfig synth_cfg;
    std::string synth_out;
    std::uint64_t synth_seed = 0;
    bool force = false;
    synth_cmd->add_option("--out", synth_out, "Output bundle directory")->required();
    synth_cmd->add_flag("--force", force, "Overwrite an existing output directory");
    synth_cmd->add_option("--seed", synth_seed, "Generator seed");
    synth_cmd->add_option("--seen", synth_cfg.seen_classes, "Seen class count");
    synth_cmd->add_option("--unseen", synth_cfg.unseen_classes, "Unseen class count");
    synth_cmd->add_option("--attributes", synth_cfg.num_attributes, "Attribute count (A)");
    synth_cmd->add_option("--embed-dim", synth_cfg.embed_dim, "Attribute embedding length (K)");
    synth_cmd->add_option("--regions", synth_cfg.num_regions, "Regions per example (R)");
    synth_cmd->add_option("--features", synth_cfg.feature_dim, "Region feature dimension (D)");
    synth_cmd->add_option("--per-class", synth_cfg.examples_per_class, "Examples per class");
    synth_cmd->add_option("--sigma", synth_cfg.noise_sigma, "Gaussian noise level");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train on a bundle's train split");
    TrainConfig train_cfg;
    CommonPaths train_paths;
    std::string train_out, log_out, early_stop_str = "val-h", attr_norm_str = "fibers";
    train_cmd->add_option("--bundle", train_paths.bundle, "Bundle directory")->required();
    train_cmd->add_option("--out", train_out, "Checkpoint output directory")->required();
    train_cmd->add_option("--log", log_out, "Also write the training log to this file");
    train_cmd->add_option("--lambda1", train_cfg.lambda1, "Attribute regularizer weight");
    train_cmd->add_option("--lambda2", train_cfg.lambda2, "Visual regularizer weight");
    train_cmd->add_option("--lr", train_cfg.learning_rate, "Adam learning rate");
    train_cmd->add_option("--batch-size", train_cfg.batch_size, "Mini-batch size");
    train_cmd->add_option("--epochs", train_cfg.epochs, "Epoch count");
    train_cmd->add_option("--seed", train_cfg.seed, "Training seed");
    train_cmd->add_option("--early-stop", early_stop_str, "none | val-h | val-t1");
    train_cmd->add_option("--patience", train_cfg.patience, "Early-stop patience");
    train_cmd->add_option("--attr-norm", attr_norm_str, "fibers | rows");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint (ZSL or GZSL)");
    CommonPaths eval_paths;
    std::string eval_mode = "gzsl", eval_cal = "multiplicative", eval_out;
    CalibrationConfig eval_cal_cfg;
    eval_cmd->add_option("--bundle", eval_paths.bundle, "Bundle directory")->required();
    eval_cmd->add_option("--checkpoint", eval_paths.checkpoint, "Checkpoint directory")->required();
    eval_cmd->add_option("--mode", eval_mode, "zsl | gzsl");
    eval_cmd->add_option("--cal", eval_cal, "multiplicative | additive | none");
    eval_cmd->add_option("--z", eval_cal_cfg.z, "Multiplicative divisor");
    eval_cmd->add_option("--gamma", eval_cal_cfg.gamma, "Additive subtractor");
    eval_cmd->add_option("--out", eval_out, "Write the report to this file");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "Calibration sweep over a parameter grid");
    CommonPaths sweep_paths;
    std::string sweep_cal = "multiplicative", sweep_out;
    std::size_t sweep_points = 41;
    sweep_cmd->add_option("--bundle", sweep_paths.bundle, "Bundle directory")->required();
    sweep_cmd->add_option("--checkpoint", sweep_paths.checkpoint, "Checkpoint directory")
        ->required();
    sweep_cmd->add_option("--cal", sweep_cal, "multiplicative | additive");
    sweep_cmd->add_option("--points", sweep_points, "Grid size");
    sweep_cmd->add_option("--out", sweep_out, "Write (parameter,u,s,H) rows to this file");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "Check analytic gradients against finite differences");
    std::uint64_t grad_seed = 1;
    std::size_t grad_seeds = 3;
    double grad_step = 1e-5, grad_tol = 1e-5;
    bool corrupt = false;
    grad_cmd->add_option("--seed", grad_seed, "First instance seed");
    grad_cmd->add_option("--seeds", grad_seeds, "Number of random instances");
    grad_cmd->add_option("--step", grad_step, "Central-difference step");
    grad_cmd->add_option("--tolerance", grad_tol, "Relative error threshold");
    grad_cmd->add_flag("--corrupt", corrupt, "Test hook: perturb the analytic gradient");

    // inspect
    auto* inspect_cmd = app.add_subcommand("inspect", "Print a bundle or checkpoint manifest");
    std::string inspect_path;
    inspect_cmd->add_option("--path", inspect_path, "Container directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    if (threads <= 0) {
        if (const char* env = std::getenv("PPN_THREADS")) threads = std::atoi(env);
    }
    if (threads > 0) omp_set_num_threads(threads);

    if (*synth_cmd) {
        if (fs::exists(synth_out) && !force)
            throw ContractError("output path exists, pass --force to overwrite: " + synth_out);
        const SynthResult result = generate_synthetic(synth_cfg, synth_seed);
        validate_bundle(result.bundle);
        fs::remove_all(synth_out);
        save_bundle(result.bundle, synth_out);
        std::cout << "wrote bundle " << synth_out << " (C=" << result.bundle.dims.num_classes
                  << " A=" << result.bundle.dims.num_attributes
                  << " K=" << result.bundle.dims.embed_dim
                  << " R=" << result.bundle.dims.num_regions
                  << " D=" << result.bundle.dims.feature_dim
                  << " N=" << result.bundle.examples.size() << ")\n";
        return 0;
    }

    if (*train_cmd) {
        train_cfg.early_stop = parse_early_stop(early_stop_str);
        train_cfg.attr_norm = parse_attr_norm(attr_norm_str);
        const DatasetBundle bundle = load_bundle(train_paths.bundle);
        const TrainResult result = train(bundle, train_cfg);
        save_checkpoint(result.final, train_out);
        save_checkpoint(result.best, train_out + "-best");
        if (!log_out.empty()) write_file(log_out, format_log(result.final.log));
        if (result.aborted_non_finite) {
            std::cerr << "error: non-finite loss, training aborted at epoch "
                      << result.final.epoch << " (last good checkpoint written)\n";
            return kExitNumeric;
        }
        std::cout << "wrote checkpoint " << train_out << " (epochs=" << result.final.epoch
                  << ")\n";
        return 0;
    }

    if (*eval_cmd) {
        const DatasetBundle bundle = load_bundle(eval_paths.bundle);
        const Checkpoint ckpt = load_checkpoint(eval_paths.checkpoint);
        std::string report_text;
        if (eval_mode == "zsl") {
            if (eval_cmd->count("--cal") || eval_cmd->count("--z") || eval_cmd->count("--gamma"))
                std::cerr << "warning: ZSL mode ignores calibration flags\n";
            const double t1 = evaluate_zsl(ckpt.params, bundle, ckpt.config.attr_norm);
            std::ostringstream os;
            os.precision(6);
            os << std::fixed << "t1_unseen\t" << t1 << '\n';
            report_text = os.str();
        } else if (eval_mode == "gzsl") {
            eval_cal_cfg.mode = parse_cal_mode(eval_cal);
            const EvalReport report =
                evaluate_gzsl(ckpt.params, bundle, eval_cal_cfg, ckpt.config.attr_norm);
            report_text = format_report(report);
        } else {
            throw ContractError("unknown eval mode '" + eval_mode + "'");
        }
        std::cout << report_text;
        if (!eval_out.empty()) write_file(eval_out, report_text);
        return 0;
    }

    if (*sweep_cmd) {
        const DatasetBundle bundle = load_bundle(sweep_paths.bundle);
        const Checkpoint ckpt = load_checkpoint(sweep_paths.checkpoint);
        const CalibrationMode mode = parse_cal_mode(sweep_cal);
        if (mode == CalibrationMode::None) throw ContractError("sweep needs a calibration mode");
        if (sweep_points < 1) throw ContractError("sweep needs at least 1 grid point");
        const auto grid = mode == CalibrationMode::Multiplicative
                              ? default_multiplicative_grid(sweep_points)
                              : default_additive_grid(sweep_points);
        const auto rows =
            calibration_sweep(ckpt.params, bundle, mode, grid, ckpt.config.attr_norm);
        const std::string text = format_sweep(rows);
        std::cout << text;
        if (!sweep_out.empty()) write_file(sweep_out, text);
        return 0;
    }

    if (*grad_cmd) {
        bool ok = true;
        for (std::size_t i = 0; i < grad_seeds; ++i) {
            SeededRng rng(grad_seed + i);
            SynthConfig cfg;
            cfg.seen_classes = 4;
            cfg.unseen_classes = 2;
            cfg.num_attributes = 7;
            cfg.embed_dim = 9;
            cfg.num_regions = 3;
            cfg.feature_dim = 11;
            cfg.examples_per_class = 2;
            const SynthResult synth = generate_synthetic(cfg, grad_seed + i);
            DatasetBundle bundle = synth.bundle;
            normalize_region_features(bundle);
            const Tensor3 tensor = build_semantic_tensor(bundle.attributes, bundle.embeddings);
            const Vec penalty =
                compute_unseen_penalty(bundle.attributes, bundle.splits.unseen_classes);
            PpnParams params = PpnParams::init(bundle.dims, rng);
            for (double& x : params.alpha_bias) x = rng.uniform(-0.5, 0.5);
            for (double& x : params.beta_weight) x = rng.uniform(-0.5, 0.5);
            TrainConfig tcfg;
            Batch batch{&bundle, bundle.splits.train_indices};

            PpnParams analytic;
            gradients(batch, params, tensor, penalty, tcfg, analytic);
            if (corrupt) analytic.w.at(0, 0) += 0.5;
            const PpnParams fd = finite_diff_grad(
                [&](const PpnParams& q) {
                    return total_loss(batch, q, tensor, penalty, tcfg).total;
                },
                params, grad_step);

            struct Field {
                const char* name;
                const double* a;
                const double* f;
                std::size_t n;
            };
            const Field fields[] = {
                {"alpha_weight", analytic.alpha_weight.data.data(), fd.alpha_weight.data.data(),
                 analytic.alpha_weight.data.size()},
                {"alpha_bias", analytic.alpha_bias.data(), fd.alpha_bias.data(),
                 analytic.alpha_bias.size()},
                {"w", analytic.w.data.data(), fd.w.data.data(), analytic.w.data.size()},
                {"beta_weight", analytic.beta_weight.data(), fd.beta_weight.data(),
                 analytic.beta_weight.size()},
                {"beta_bias", &analytic.beta_bias, &fd.beta_bias, 1},
            };
            std::cout << "instance seed=" << grad_seed + i << '\n';
            for (const Field& fld : fields) {
                double worst = 0.0;
                for (std::size_t j = 0; j < fld.n; ++j) {
                    const double denom =
                        std::max({std::abs(fld.a[j]), std::abs(fld.f[j]), 1e-4});
                    worst = std::max(worst, std::abs(fld.a[j] - fld.f[j]) / denom);
                }
                const bool pass = worst <= grad_tol;
                ok = ok && pass;
                std::cout << "  " << fld.name << "\tmax_rel_err=" << worst << '\t'
                          << (pass ? "PASS" : "FAIL") << '\n';
            }
        }
        std::cout << (ok ? "gradcheck PASS" : "gradcheck FAIL") << '\n';
        return ok ? 0 : kExitNumeric;
    }

    if (*inspect_cmd) {
        std::ifstream mf(fs::path(inspect_path) / "manifest.txt");
        if (!mf) throw DataError("no manifest in " + inspect_path);
        std::string magic;
        mf >> magic;
        mf.seekg(0);
        if (magic != "PPNB" && magic != "PPNC")
            throw DataError("unrecognized container magic '" + magic + "'");
        // Validate before echoing the manifest.
        Container::load(inspect_path, magic);
        std::cout << mf.rdbuf();
        return 0;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitData;
    }
}
