// fol: mesh, sample, train, predict, solve, evaluate, benchmark and postprocess.
// Exit codes: 0 ok, 1 validation, 2 numerical, 3 I/O, 4 acceptance threshold violated.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11/CLI11.hpp>

#include "fol/commands.hpp"

namespace {

template <typename T>
CLI::Option* add_optional(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help) {
    return app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

} // namespace

int main(int argc, char** argv) {
    using namespace fol::cli;
    CLI::App app{"Finite-element operator learning for transient heat conduction"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker thread budget for parallel loops (default 1)")->check(CLI::NonNegativeNumber);

    Context ctx;
    for (int i = 0; i < argc; ++i) ctx.argv.emplace_back(argv[i]);
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "suppress progress output");

    std::function<void()> run;
    int exit_code = 0;

    std::optional<std::filesystem::path> config, output;
    auto add_config = [&](CLI::App* sub) {
        add_optional(sub, "-c,--config", config, "run configuration (.ini); defaults when omitted")->check(CLI::ExistingFile);
        add_optional(sub, "-o,--output", output, "output directory");
        add_optional(sub, "--mesh", ctx.mesh, "mesh file replacing the config's [mesh]")->check(CLI::ExistingFile);
    };

    GenMeshOptions gm;
    auto* s_mesh = app.add_subcommand("gen-mesh", "write a structured or plate-with-hole mesh");
    s_mesh->add_option("--shape", gm.shape, "structured | plate-with-hole")->capture_default_str();
    s_mesh->add_option("--nx", gm.nx, "nodes along x")->capture_default_str();
    s_mesh->add_option("--ny", gm.ny, "nodes along y")->capture_default_str();
    s_mesh->add_option("--width", gm.width)->capture_default_str();
    s_mesh->add_option("--height", gm.height)->capture_default_str();
    s_mesh->add_option("--n-side", gm.n_side, "plate-with-hole: nodes per outer side")->capture_default_str();
    s_mesh->add_option("--n-radial", gm.n_radial, "plate-with-hole: nodes from hole to outer edge")->capture_default_str();
    s_mesh->add_option("--hole-cx", gm.hole_cx)->capture_default_str();
    s_mesh->add_option("--hole-cy", gm.hole_cy)->capture_default_str();
    s_mesh->add_option("--hole-r", gm.hole_r)->capture_default_str();
    s_mesh->add_option("-o,--output", gm.output, "mesh file")->capture_default_str();
    s_mesh->callback([&] { run = [&] { cmd_gen_mesh(gm, ctx); }; });

    std::filesystem::path validate_path;
    auto* s_val = app.add_subcommand("validate", "check a mesh file or a run configuration");
    s_val->add_option("path", validate_path, "mesh file or .ini config")->required();
    s_val->callback([&] { run = [&] { cmd_validate(validate_path, ctx); }; });

    GenSamplesOptions gs;
    auto* s_samp = app.add_subcommand("gen-samples", "generate the training sample set");
    add_config(s_samp);
    add_optional(s_samp, "--fourier", gs.fourier, "Fourier sample count");
    add_optional(s_samp, "--gaussian", gs.gaussian, "Gaussian sample count");
    add_optional(s_samp, "--constant", gs.constant, "constant sample count");
    add_optional(s_samp, "--seed", gs.seed, "sample seed");
    s_samp->callback([&] {
        gs.config = config;
        gs.output = output;
        run = [&] { cmd_gen_samples(gs, ctx); };
    });

    TrainOptions tr;
    auto* s_train = app.add_subcommand("train", "train a model on the residual loss");
    add_config(s_train);
    add_optional(s_train, "--samples", tr.samples, "samples.csv from gen-samples (default: generate from the config)")
        ->check(CLI::ExistingFile);
    add_optional(s_train, "--epochs", tr.epochs, "override train.epochs");
    s_train->add_option("--log-every", tr.log_every, "print every N-th epoch")->capture_default_str();
    s_train->callback([&] {
        tr.config = config;
        tr.output = output;
        run = [&] { cmd_train(tr, ctx); };
    });

    PredictOptions pr;
    auto* s_pred = app.add_subcommand("predict", "roll a trained model out from an initial field");
    add_config(s_pred);
    s_pred->add_option("-m,--checkpoint", pr.checkpoint, "checkpoint.fol")->required()->check(CLI::ExistingFile);
    s_pred->add_option("--init", pr.init, "canonical:NAME, canonical:all or a field CSV")->capture_default_str();
    s_pred->add_option("--steps", pr.steps)->capture_default_str()->check(CLI::NonNegativeNumber);
    s_pred->callback([&] {
        pr.config = config;
        pr.output = output;
        run = [&] { cmd_predict(pr, ctx); };
    });

    SolveFemOptions fe;
    auto* s_fe = app.add_subcommand("solve-fem", "reference finite-element time march");
    add_config(s_fe);
    s_fe->add_option("--init", fe.init, "canonical:NAME, canonical:all or a field CSV")->capture_default_str();
    s_fe->add_option("--steps", fe.steps)->capture_default_str()->check(CLI::NonNegativeNumber);
    s_fe->add_option("--alpha", fe.alpha, "0 explicit, 0.5 Crank-Nicolson, 1 implicit")->capture_default_str();
    add_optional(s_fe, "--dt", fe.dt, "time step (default train.dt)");
    s_fe->add_flag("--steady", fe.steady, "solve the steady state instead");
    s_fe->callback([&] {
        fe.config = config;
        fe.output = output;
        run = [&] { cmd_solve_fem(fe, ctx); };
    });

    EvaluateOptions ev;
    auto* s_eval = app.add_subcommand("evaluate", "per-step relative L2 error of predictions against a reference");
    s_eval->add_option("pred", ev.pred, "prediction directory")->required()->check(CLI::ExistingDirectory);
    s_eval->add_option("ref", ev.ref, "reference directory")->required()->check(CLI::ExistingDirectory);
    add_optional(s_eval, "-o,--output", ev.output, "output directory (default <pred>/eval)");
    add_optional(s_eval, "--max-error", ev.max_error, "per-step error bound for a field to pass");
    add_optional(s_eval, "--min-passing", ev.min_passing, "fields that must pass (default all)");
    add_optional(s_eval, "--max-mean-final", ev.max_mean_final, "bound on the mean final-step error");
    s_eval->callback([&] {
        run = [&] {
            if (!cmd_evaluate(ev, ctx).thresholds_met) exit_code = kThresholdExit;
        };
    });

    BenchmarkOptions bm;
    auto* s_bench = app.add_subcommand("benchmark", "time network inference against FE steps");
    add_config(s_bench);
    s_bench->add_option("-m,--checkpoint", bm.checkpoint, "checkpoint.fol")->required()->check(CLI::ExistingFile);
    s_bench->add_option("--init", bm.init)->capture_default_str();
    s_bench->add_option("--steps", bm.steps)->capture_default_str();
    s_bench->add_option("--repeats", bm.repeats)->capture_default_str();
    s_bench->callback([&] {
        bm.config = config;
        bm.output = output;
        run = [&] { cmd_benchmark(bm, ctx); };
    });

    PostprocessOptions pp;
    auto* s_post = app.add_subcommand("postprocess", "heat flux, cross-sections and upsampled grids of a field");
    add_config(s_post);
    s_post->add_option("field", pp.field, "field CSV or trajectory directory")->required()->check(CLI::ExistingPath);
    add_optional(s_post, "--step", pp.step, "trajectory step (default last)");
    s_post->add_option("--section", pp.sections, "line such as x=0.5 or y=0.18 (repeatable)");
    s_post->add_option("--upsample", pp.upsample, "grid points per side for CSV/PGM output")->check(CLI::NonNegativeNumber);
    s_post->callback([&] {
        pp.config = config;
        pp.output = output;
        run = [&] { cmd_postprocess(pp, ctx); };
    });

    std::optional<std::filesystem::path> show_config;
    auto* s_cfg = app.add_subcommand("print-config", "print the effective configuration (defaults when no file is given)");
    s_cfg->add_option_function<std::filesystem::path>("config", [&](const std::filesystem::path& p) { show_config = p; })
        ->check(CLI::ExistingFile);
    s_cfg->callback([&] { run = [&] { std::cout << fol::to_ini(config_or_default(show_config)); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    if (threads > 0) fol::set_worker_threads(threads);
    if (quiet) ctx.log = nullptr;
    try {
        run();
    } catch (const fol::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
