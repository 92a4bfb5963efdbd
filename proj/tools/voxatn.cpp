#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "voxatn/detplot.hpp"
#include "voxatn/pipeline.hpp"

namespace fs = std::filesystem;
using namespace voxatn;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string out_dir = "voxatn_out";
    std::uint64_t seed = 0;
    bool has_seed = false;
    int resolution = 0;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "run configuration file (INI)");
    cmd->add_option("--out", o.out_dir, "output directory");
    cmd->add_option("--seed", o.seed, "override every RNG seed")->each([&](const std::string&) { o.has_seed = true; });
    cmd->add_option("--resolution", o.resolution, "override the voxel grid resolution");
    cmd->add_flag("--deterministic", o.deterministic, "force a fixed, single-threaded execution order");
}

cli::RunConfig load_config(const CommonOpts& o) {
    cli::RunConfig cfg = o.config_path.empty() ? cli::default_config() : cli::parse_config_file(o.config_path);
    if (o.has_seed) cfg.override_seed(o.seed);
    if (o.resolution > 0) cfg.override_resolution(o.resolution);
    return cfg;
}

void apply_thread_limits(bool deterministic) {
#ifdef _OPENMP
    if (deterministic) {
        // kernels are bitwise thread-count-invariant, but deterministic mode
        // pins the whole run to one worker anyway for a fixed execution order
        omp_set_num_threads(1);
        return;
    }
    if (const char* env = std::getenv("VOXATN_THREADS")) {
        const int n = std::atoi(env);
        if (n < 1) throw UserError("VOXATN_THREADS must be a positive integer");
        omp_set_num_threads(n);
    }
#else
    (void)deterministic;
#endif
}

int run_gradcheck(std::uint64_t seed, bool corrupt) {
    const double op_tol = 1e-6, net_tol = 1e-4;
    bool ok = true;

    std::printf("per-op finite-difference checks (tolerance %.1e)\n", op_tol);
    for (const tengine::GradCheckEntry& e : cli::op_gradient_checks(seed, corrupt)) {
        const bool pass = e.max_rel_err < op_tol;
        ok = ok && pass;
        std::printf("  %-24s coords=%-5zu max_rel_err=%.3e  %s\n", e.name.c_str(), e.coords_checked, e.max_rel_err,
                    pass ? "ok" : "FAIL");
    }

    std::printf("composed network at 16^3 (tolerance %.1e)\n", net_tol);
    const tengine::GradCheckReport rep = cli::composed_gradient_check(seed, corrupt);
    for (const tengine::GradCheckEntry& e : rep.entries)
        std::printf("  %-24s coords=%-5zu max_rel_err=%.3e\n", e.name.c_str(), e.coords_checked, e.max_rel_err);
    const bool net_ok = rep.passes(net_tol);
    std::printf("  overall max_rel_err=%.3e  %s\n", rep.max_rel_err, net_ok ? "ok" : "FAIL");
    ok = ok && net_ok;

    std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"voxel-grid face presentation-attack detection pipeline"};
    app.require_subcommand(1);

    CommonOpts o;
    std::string manifest, checkpoint, svg_out = "det.svg";
    std::vector<std::string> csvs;
    bool corrupt = false;

    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    add_common(synth, o);

    CLI::App* train = app.add_subcommand("train", "train a model on the protocol's train split");
    add_common(train, o);
    train->add_option("--manifest", manifest, "dataset manifest CSV")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the protocol's test split");
    add_common(eval, o);
    eval->add_option("--manifest", manifest, "dataset manifest CSV")->required();
    eval->add_option("--checkpoint", checkpoint, "trained model checkpoint")->required();

    CLI::App* ablate = app.add_subcommand("ablate", "train/evaluate every filter and attention variant");
    add_common(ablate, o);
    ablate->add_option("--manifest", manifest, "dataset manifest CSV")->required();

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    add_common(gradcheck, o);
    gradcheck->add_flag("--corrupt-backward", corrupt, "negative control: inject a broken backward pass");

    CLI::App* detplot = app.add_subcommand("det-plot", "render DET curves from CSV files to an SVG");
    detplot->add_option("csv", csvs, "DET CSV file(s)")->required();
    detplot->add_option("--out", svg_out, "output SVG path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        apply_thread_limits(o.deterministic);

        if (synth->parsed()) {
            const std::string path = cli::run_synth(load_config(o), o.out_dir);
            std::printf("wrote %s\n", path.c_str());
        } else if (train->parsed()) {
            const cli::TrainOutputs out = cli::run_train(load_config(o), manifest, o.out_dir);
            std::printf("wrote %s\n", out.checkpoint_path.c_str());
            std::printf("wrote %s\n", out.loss_csv_path.c_str());
            std::printf("wrote %s\n", out.summary_path.c_str());
        } else if (eval->parsed()) {
            const cli::EvalOutputs out = cli::run_eval(load_config(o), manifest, checkpoint, o.out_dir);
            std::ifstream report(out.report_path);
            std::cout << report.rdbuf();
            std::printf("wrote %s\n", out.det_csv_path.c_str());
        } else if (ablate->parsed()) {
            const std::vector<cli::AblationRow> rows = cli::run_ablate(load_config(o), manifest, o.out_dir);
            std::cout << cli::ablation_table(rows);
        } else if (gradcheck->parsed()) {
            return run_gradcheck(o.has_seed ? o.seed : 42, corrupt);
        } else if (detplot->parsed()) {
            std::vector<detplot::Curve> curves;
            for (const std::string& path : csvs) {
                std::ifstream in(path);
                if (!in) throw UserError("cannot open " + path);
                curves.push_back({fs::path(path).stem().string(), padeval::read_det_csv(in)});
            }
            std::ofstream svg(svg_out);
            if (!svg) throw UserError("cannot open " + svg_out + " for writing");
            detplot::write_svg(svg, curves);
            std::printf("wrote %s\n", svg_out.c_str());
        }
    } catch (const UserError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const InternalError& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
    return 0;
}
