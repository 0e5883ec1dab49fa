#pragma once

// The command layer behind the `fol` tool. Each command takes an options struct, writes
// its artifacts plus a manifest.json (arguments, build hash, seed, effective config) into
// its output directory and returns normally or throws an fol::Error whose exit_code() the
// tool returns. Numeric outputs depend only on config and seed.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fol/config.hpp"
#include "fol/error.hpp"
#include "fol/evaluation.hpp"
#include "fol/fe_solver.hpp"
#include "fol/io.hpp"
#include "fol/parallel.hpp"
#include "fol/training.hpp"

#ifndef FOL_BUILD_HASH
#define FOL_BUILD_HASH "unknown"
#endif

namespace fol::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Returned by evaluate when an acceptance threshold is violated.
inline constexpr int kThresholdExit = 4;

/// An error raised inside a named pipeline stage; keeps the original exit code.
class StageError : public Error {
public:
    StageError(const std::string& stage, const Error& cause)
        : Error("stage '" + stage + "': " + cause.what()), stage_(stage), code_(cause.exit_code()) {}
    int exit_code() const noexcept override { return code_; }
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
    int code_;
};

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e);
    } catch (const json::exception& e) {
        throw StageError(name, ValidationError(e.what()));
    }
}

/// Shared by every command.
struct Context {
    std::vector<std::string> argv;  ///< recorded verbatim in manifests
    std::ostream* log = &std::cout;
    std::optional<fs::path> mesh;   ///< replaces the config's mesh with this file
};

inline std::ostream& out(const Context& ctx) {
    static std::ostream null(nullptr);
    return ctx.log ? *ctx.log : null;
}

inline RunConfig config_or_default(const std::optional<fs::path>& path, const Context& ctx = {}) {
    return stage("config", [&] {
        RunConfig c = path ? load_config(*path) : RunConfig{};
        if (ctx.mesh) {
            c.mesh.shape = "file";
            c.mesh.file = fs::absolute(*ctx.mesh).lexically_normal().string();
            c.validate();
        }
        return c;
    });
}

inline json manifest_json(const std::string& command, const Context& ctx, const RunConfig* cfg, json extra = json::object()) {
    json j{{"command", command}, {"arguments", ctx.argv}, {"build", FOL_BUILD_HASH}, {"seed", cfg ? json(cfg->seed) : json(nullptr)},
           {"config", cfg ? json("config.ini") : json(nullptr)}};
    for (auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

/// manifest.json plus config.ini (the effective configuration) in `dir`.
inline void write_manifest(const fs::path& dir, const std::string& command, const Context& ctx, const RunConfig* cfg,
                           json extra = json::object()) {
    io::write_json(dir / "manifest.json", manifest_json(command, ctx, cfg, std::move(extra)));
    if (cfg) io::write_text(dir / "config.ini", to_ini(*cfg));
}

inline fs::path output_dir(const std::optional<fs::path>& explicit_dir, const RunConfig& cfg, const std::string& sub) {
    return explicit_dir ? *explicit_dir : cfg.resolve(cfg.output) / sub;
}

inline json grid_json(const Problem& p) {
    return json{{"nodes", p.mesh.node_count()},
                {"elements", p.mesh.element_count()},
                {"free", p.dofs.n_free()},
                {"fingerprint", grid_fingerprint(p.mesh, p.dofs)}};
}

// ---------------------------------------------------------------- initial fields

/// `canonical:NAME`, `canonical:all` or the path of a node_id,x,y,T file.
/// Dirichlet values are imposed on file fields.
inline std::vector<NamedField> resolve_init(const std::string& spec, const Problem& p) {
    const std::string prefix = "canonical:";
    if (spec.rfind(prefix, 0) == 0) {
        const std::string name = spec.substr(prefix.size());
        auto fields = canonical_test_fields(p.mesh, p.dofs);
        if (name == "all") return fields;
        if (auto f = find_canonical(fields, name)) return {NamedField{name, *f}};
        std::string known;
        for (const auto& f : fields) known += (known.empty() ? "" : ", ") + f.name;
        throw ValidationError("unknown canonical field '" + name + "' (known: " + known + ", all)");
    }
    const fs::path path(spec);
    FullField f = io::read_field(path, p.mesh);
    return {NamedField{path.stem().string(), apply_dirichlet(p.dofs, f)}};
}

inline bool is_multi_field(const std::string& spec) { return spec == "canonical:all"; }

// ---------------------------------------------------------------- gen-mesh

struct GenMeshOptions {
    std::string shape = "structured";  ///< structured | plate-with-hole
    int nx = 11;
    int ny = 11;
    double width = 1.0;
    double height = 1.0;
    int n_side = 11;
    int n_radial = 5;
    double hole_cx = 0.5;
    double hole_cy = 0.5;
    double hole_r = 0.2;
    fs::path output = "data/mesh.folmesh";
};

struct MeshSummary {
    std::size_t nodes = 0;
    std::size_t elements = 0;
};

/// Writes the mesh file and `<file>.manifest.json` next to it.
inline MeshSummary cmd_gen_mesh(const GenMeshOptions& o, const Context& ctx = {}) {
    const Mesh m = stage("mesh", [&] {
        if (o.shape == "structured") return build_structured_grid(o.nx, o.ny, o.width, o.height);
        if (o.shape == "plate-with-hole" || o.shape == "plate_with_hole")
            return build_plate_with_hole(o.n_side, o.n_radial, o.width, o.height, o.hole_cx, o.hole_cy, o.hole_r);
        throw ValidationError("--shape must be structured or plate-with-hole");
    });
    stage("write", [&] {
        io::write_text(o.output, serialize_mesh(m));
        json tags = json::object();
        for (const auto& [tag, ids] : m.boundary_sets) tags[tag] = ids.size();
        fs::path side = o.output;
        side += ".manifest.json";
        io::write_json(side, manifest_json("gen-mesh", ctx, nullptr,
                                           {{"nodes", m.node_count()}, {"elements", m.element_count()}, {"boundary_sets", tags}}));
    });
    out(ctx) << "wrote " << o.output.string() << ": " << m.node_count() << " nodes, " << m.element_count() << " elements\n";
    return {m.node_count(), m.element_count()};
}

// ---------------------------------------------------------------- validate

/// A mesh file, or a config (.ini) whose whole problem is then built.
inline MeshSummary cmd_validate(const fs::path& path, const Context& ctx = {}) {
    Mesh m;
    if (path.extension() == ".ini") {
        const RunConfig cfg = config_or_default(path, ctx);
        const Problem p = stage("problem", [&] { return build_problem(cfg); });
        m = p.mesh;
        out(ctx) << "config ok: " << p.dofs.n_free() << " free dofs, fingerprint " << grid_fingerprint(p.mesh, p.dofs) << "\n";
    } else {
        m = stage("mesh", [&] { return load_mesh(io::read_text(path)); });
    }
    out(ctx) << path.string() << ": " << m.node_count() << " nodes, " << m.element_count() << " elements, boundary sets";
    for (const auto& [tag, ids] : m.boundary_sets) out(ctx) << " " << tag << "(" << ids.size() << ")";
    out(ctx) << "\n";
    return {m.node_count(), m.element_count()};
}

// ---------------------------------------------------------------- gen-samples

struct GenSamplesOptions {
    std::optional<fs::path> config;
    std::optional<fs::path> output;  ///< default <run.output>/samples
    std::optional<int> fourier, gaussian, constant;
    std::optional<std::uint64_t> seed;
};

inline RunConfig samples_config(const GenSamplesOptions& o, const Context& ctx) {
    RunConfig cfg = config_or_default(o.config, ctx);
    if (o.fourier) cfg.counts.fourier = *o.fourier;
    if (o.gaussian) cfg.counts.gaussian = *o.gaussian;
    if (o.constant) cfg.counts.constant = *o.constant;
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.train.seed = *o.seed;
    }
    stage("config", [&] { cfg.validate(); });
    return cfg;
}

/// Returns the path of samples.csv.
inline fs::path cmd_gen_samples(const GenSamplesOptions& o, const Context& ctx = {}) {
    const RunConfig cfg = samples_config(o, ctx);
    const Problem p = stage("problem", [&] { return build_problem(cfg); });
    const SampleSet s = stage("samples", [&] { return build_sample_set(cfg.counts, cfg.fourier, p.mesh, p.dofs, cfg.seed); });
    const fs::path dir = output_dir(o.output, cfg, "samples");
    const fs::path csv = dir / "samples.csv";
    stage("write", [&] {
        io::write_samples(csv, s, cfg.fourier, grid_json(p));
        write_manifest(dir, "gen-samples", ctx, &cfg, {{"samples", s.size()}, {"n_free", s.n_free()}});
    });
    out(ctx) << "wrote " << csv.string() << ": " << s.size() << " samples (" << cfg.counts.fourier << " fourier, " << cfg.counts.gaussian
             << " gaussian, " << cfg.counts.constant << " constant) x " << s.n_free() << " free dofs\n";
    return csv;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
    std::optional<fs::path> config;
    std::optional<fs::path> samples;  ///< samples.csv; default: generated in memory from the config
    std::optional<fs::path> output;   ///< default <run.output>/model
    std::optional<int> epochs;
    int log_every = 1;
};

struct TrainSummary {
    fs::path checkpoint;
    fs::path loss_csv;
    std::vector<double> loss;
    std::size_t parameters = 0;
};

inline TrainSummary cmd_train(const TrainOptions& o, const Context& ctx = {}) {
    RunConfig cfg = config_or_default(o.config, ctx);
    if (o.epochs) cfg.train.epochs = *o.epochs;
    stage("config", [&] { cfg.validate(); });
    const Problem p = stage("assemble", [&] { return build_problem(cfg); });
    const ReducedSystem rs = stage("reduce", [&] { return reduce_system(p.sys, p.dofs, cfg.train.dt, 1.0); });
    const SampleSet samples = stage("samples", [&] {
        if (!o.samples) return build_sample_set(cfg.counts, cfg.fourier, p.mesh, p.dofs, cfg.seed);
        SampleSet s = io::read_samples(*o.samples);
        if (!s.fingerprint.empty() && s.fingerprint != grid_fingerprint(p.mesh, p.dofs))
            throw FingerprintMismatch("sample set '" + o.samples->string() + "' was generated for a different grid");
        return s;
    });
    ModelBundle model = stage("init", [&] {
        return init_model(cfg.model.arch, p.mesh, p.dofs, cfg.model.hidden, cfg.model.activation, cfg.seed, cfg.train.dt);
    });
    out(ctx) << "training " << to_string(cfg.model.arch) << "/" << to_string(cfg.model.activation) << " with " << count_params(model)
             << " parameters on " << samples.size() << " samples, " << cfg.train.epochs << " epochs (" << to_string(cfg.train.optimizer)
             << ")\n";
    const int every = std::max(1, o.log_every);
    const TrainResult r = stage("train", [&] {
        return train(model, rs, samples, cfg.train, [&](int epoch, double loss, double seconds) {
            if (epoch % every == 0 || epoch == cfg.train.epochs) {
                char buf[128];
                std::snprintf(buf, sizeof buf, "epoch %d/%d  loss %.6e  %.2fs\n", epoch, cfg.train.epochs, loss, seconds);
                out(ctx) << buf << std::flush;
            }
        });
    });
    const fs::path dir = output_dir(o.output, cfg, "model");
    TrainSummary sum{dir / "checkpoint.fol", dir / "loss.csv", r.loss_history, count_params(r.model)};
    stage("save", [&] {
        io::ensure_dir(dir);
        save_checkpoint(r.model, sum.checkpoint.string());
        io::write_loss(sum.loss_csv, r.loss_history);
        write_manifest(dir, "train", ctx, &cfg,
                       {{"architecture", to_string(cfg.model.arch)},
                        {"activation", to_string(cfg.model.activation)},
                        {"parameters", sum.parameters},
                        {"epochs", cfg.train.epochs},
                        {"optimizer_steps", r.optimizer_steps},
                        {"final_loss", r.loss_history.back()},
                        {"grid", grid_json(p)}});
    });
    out(ctx) << "wrote " << sum.checkpoint.string() << " and " << sum.loss_csv.string() << "\n";
    return sum;
}

// ---------------------------------------------------------------- predict / solve-fem

struct PredictOptions {
    std::optional<fs::path> config;
    fs::path checkpoint;
    std::string init = "canonical:sin10y";
    int steps = 10;
    std::optional<fs::path> output;  ///< default <run.output>/predict
};

/// One trajectory directory per field; for canonical:all the fields go into
/// subdirectories and the manifest lists them.
inline void write_trajectories(const fs::path& dir, const Mesh& mesh, const std::vector<std::pair<std::string, Trajectory>>& runs,
                               bool multi) {
    for (const auto& [name, tr] : runs) io::write_trajectory(multi ? dir / name : dir, mesh, tr.fields, tr.dt);
}

inline json field_list(const std::vector<std::pair<std::string, Trajectory>>& runs, bool multi) {
    if (!multi) return json{{"field", runs.front().first}};
    json names = json::array();
    for (const auto& r : runs) names.push_back(r.first);
    return json{{"fields", names}};
}

inline fs::path cmd_predict(const PredictOptions& o, const Context& ctx = {}) {
    const RunConfig cfg = config_or_default(o.config, ctx);
    const Problem p = stage("problem", [&] { return build_problem(cfg); });
    const ModelBundle model = stage("checkpoint", [&] { return load_checkpoint(o.checkpoint.string(), p.mesh, p.dofs); });
    const auto fields = stage("init", [&] { return resolve_init(o.init, p); });
    std::vector<std::pair<std::string, Trajectory>> runs;
    stage("predict", [&] {
        for (const auto& f : fields) {
            RolloutResult r = rollout(model, p.mesh, p.dofs, f.field, o.steps);
            runs.emplace_back(f.name, Trajectory{std::move(r.trajectory), r.dt});
        }
    });
    const bool multi = is_multi_field(o.init);
    const fs::path dir = output_dir(o.output, cfg, "predict");
    stage("write", [&] {
        write_trajectories(dir, p.mesh, runs, multi);
        json extra = field_list(runs, multi);
        extra["steps"] = o.steps;
        extra["dt"] = model.dt;
        extra["init"] = o.init;
        extra["checkpoint"] = o.checkpoint.filename().string();
        write_manifest(dir, "predict", ctx, &cfg, extra);
    });
    out(ctx) << "wrote " << runs.size() << " trajectory(ies) of " << o.steps << " steps to " << dir.string() << "\n";
    return dir;
}

struct SolveFemOptions {
    std::optional<fs::path> config;
    std::string init = "canonical:sin10y";
    int steps = 10;
    double alpha = 1.0;
    std::optional<double> dt;  ///< default train.dt
    bool steady = false;       ///< write the steady state as a one-field trajectory
    std::optional<fs::path> output;  ///< default <run.output>/fem
};

inline fs::path cmd_solve_fem(const SolveFemOptions& o, const Context& ctx = {}) {
    const RunConfig cfg = config_or_default(o.config, ctx);
    if (!is_supported_alpha(o.alpha)) throw StageError("config", ValidationError("--alpha must be 0, 0.5 or 1"));
    const double dt = o.dt.value_or(cfg.train.dt);
    const Problem p = stage("problem", [&] { return build_problem(cfg); });
    std::vector<std::pair<std::string, Trajectory>> runs;
    bool multi = false;
    if (o.steady) {
        runs.emplace_back("steady", Trajectory{{stage("solve", [&] { return steady_state(p.sys, p.dofs); })}, 0.0});
    } else {
        const ReducedSystem rs = stage("reduce", [&] { return reduce_system(p.sys, p.dofs, dt, o.alpha); });
        const auto fields = stage("init", [&] { return resolve_init(o.init, p); });
        multi = is_multi_field(o.init);
        stage("solve", [&] {
            for (const auto& f : fields) runs.emplace_back(f.name, solve_transient(rs, p.dofs, f.field, o.steps));
        });
    }
    const fs::path dir = output_dir(o.output, cfg, "fem");
    stage("write", [&] {
        write_trajectories(dir, p.mesh, runs, multi);
        json extra = field_list(runs, multi);
        extra["steps"] = o.steady ? 0 : o.steps;
        extra["dt"] = o.steady ? 0.0 : dt;
        extra["alpha"] = o.alpha;
        extra["steady"] = o.steady;
        extra["init"] = o.steady ? std::string() : o.init;
        write_manifest(dir, "solve-fem", ctx, &cfg, extra);
    });
    out(ctx) << "wrote " << runs.size() << " FE trajectory(ies) to " << dir.string() << "\n";
    return dir;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
    fs::path pred;
    fs::path ref;
    std::optional<fs::path> output;  ///< default <pred>/eval
    std::optional<double> max_error;       ///< per-step bound a field must meet to count as passing
    std::optional<int> min_passing;        ///< fields that must pass (default: all)
    std::optional<double> max_mean_final;  ///< bound on the mean final-step error
};

struct FieldErrors {
    std::string name;
    std::vector<double> per_step;
    double max() const { return per_step.empty() ? 0.0 : *std::max_element(per_step.begin(), per_step.end()); }
    double final() const { return per_step.empty() ? 0.0 : per_step.back(); }
};

struct EvaluateReport {
    std::vector<FieldErrors> fields;
    double mean_final = 0.0;
    int passing = 0;
    bool thresholds_met = true;
    fs::path dir;
};

inline std::vector<double> compare_trajectories(const fs::path& pred, const fs::path& ref) {
    const Trajectory a = io::read_trajectory(pred);
    const Trajectory b = io::read_trajectory(ref);
    if (a.fields.size() != b.fields.size())
        throw ValidationError("step count mismatch: '" + pred.string() + "' has " + std::to_string(a.fields.size() - 1) + " steps, '" +
                              ref.string() + "' has " + std::to_string(b.fields.size() - 1));
    if (a.fields.front().values.size() != b.fields.front().values.size())
        throw ValidationError("'" + pred.string() + "' and '" + ref.string() + "' have different node counts");
    std::vector<double> e;
    for (std::size_t s = 0; s < a.fields.size(); ++s) e.push_back(relative_l2(a.fields[s], b.fields[s]));
    return e;
}

/// Pairwise per-step relative L2 error. When the prediction manifest lists several
/// fields, each is compared with the same-named subdirectory of `ref`.
inline EvaluateReport cmd_evaluate(const EvaluateOptions& o, const Context& ctx = {}) {
    EvaluateReport rep;
    double dt = 0.0;
    stage("compare", [&] {
        std::vector<std::string> names;
        const fs::path manifest = o.pred / "manifest.json";
        if (fs::exists(manifest)) {
            const json j = io::read_json(manifest);
            if (j.contains("fields"))
                for (const auto& n : j["fields"]) names.push_back(n.get<std::string>());
        }
        if (names.empty()) {
            rep.fields.push_back({o.pred.filename().string(), compare_trajectories(o.pred, o.ref)});
            dt = io::read_json(o.pred / "trajectory.json").at("dt").get<double>();
        } else {
            for (const auto& n : names) {
                if (!io::is_trajectory_dir(o.ref / n)) throw ValidationError("reference '" + o.ref.string() + "' has no field '" + n + "'");
                rep.fields.push_back({n, compare_trajectories(o.pred / n, o.ref / n)});
            }
            dt = io::read_json(o.pred / names.front() / "trajectory.json").at("dt").get<double>();
        }
    });
    for (const auto& f : rep.fields) {
        rep.mean_final += f.final() / static_cast<double>(rep.fields.size());
        if (!o.max_error || f.max() < *o.max_error) ++rep.passing;
    }
    const int need = o.min_passing.value_or(static_cast<int>(rep.fields.size()));
    if (o.max_error && rep.passing < need) rep.thresholds_met = false;
    if (o.max_mean_final && !(rep.mean_final < *o.max_mean_final)) rep.thresholds_met = false;

    rep.dir = o.output ? *o.output : o.pred / "eval";
    stage("write", [&] {
        const bool single = rep.fields.size() == 1;
        json fields = json::array();
        for (const auto& f : rep.fields) {
            io::write_errors(rep.dir / (single ? std::string("errors.csv") : "errors_" + f.name + ".csv"), f.per_step, dt);
            fields.push_back({{"name", f.name}, {"max_error", f.max()}, {"final_error", f.final()}, {"per_step", f.per_step},
                              {"passing", !o.max_error || f.max() < *o.max_error}});
        }
        json thresholds{{"max_error", o.max_error ? json(*o.max_error) : json(nullptr)},
                        {"min_passing", o.max_error ? json(need) : json(nullptr)},
                        {"max_mean_final", o.max_mean_final ? json(*o.max_mean_final) : json(nullptr)}};
        io::write_json(rep.dir / "summary.json", json{{"fields", fields},
                                                      {"mean_final_error", rep.mean_final},
                                                      {"passing", rep.passing},
                                                      {"thresholds", thresholds},
                                                      {"thresholds_met", rep.thresholds_met}});
        write_manifest(rep.dir, "evaluate", ctx, nullptr, {{"pred", o.pred.string()}, {"ref", o.ref.string()}});
    });
    for (const auto& f : rep.fields) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%-12s max %.4e  final %.4e\n", f.name.c_str(), f.max(), f.final());
        out(ctx) << buf;
    }
    char buf[160];
    std::snprintf(buf, sizeof buf, "mean final-step error %.4e; %d/%zu fields passing\n", rep.mean_final, rep.passing, rep.fields.size());
    out(ctx) << buf;
    if (!rep.thresholds_met) out(ctx) << "acceptance thresholds violated\n";
    return rep;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkOptions {
    std::optional<fs::path> config;
    fs::path checkpoint;
    std::string init = "canonical:sin10y";
    int steps = 10;
    int repeats = 5;
    std::optional<fs::path> output;  ///< default <run.output>/benchmark
};

inline json cmd_benchmark(const BenchmarkOptions& o, const Context& ctx = {}) {
    const RunConfig cfg = config_or_default(o.config, ctx);
    const Problem p = stage("problem", [&] { return build_problem(cfg); });
    const ModelBundle model = stage("checkpoint", [&] { return load_checkpoint(o.checkpoint.string(), p.mesh, p.dofs); });
    const ReducedSystem rs = stage("reduce", [&] { return reduce_system(p.sys, p.dofs, model.dt, 1.0); });
    const auto fields = stage("init", [&] { return resolve_init(o.init, p); });
    if (fields.size() != 1) throw StageError("init", ValidationError("benchmark needs a single initial field"));
    const BenchmarkResult r = stage("benchmark", [&] { return benchmark_speed(model, rs, p.dofs, fields.front().field, o.steps, o.repeats); });
    json report{{"t_nn_median_s", r.t_nn},
                {"t_fe_median_s", r.t_fe},
                {"ratio", r.ratio_defined ? json(r.ratio) : json(nullptr)},
                {"ratio_defined", r.ratio_defined},
                {"steps", r.n_steps},
                {"repeats", r.repeats},
                {"threads", worker_threads()},
                {"architecture", to_string(model.arch)},
                {"parameters", count_params(model)},
                {"grid", grid_json(p)},
                {"hardware", {{"hardware_concurrency", std::thread::hardware_concurrency()},
#ifdef __VERSION__
                              {"compiler", __VERSION__},
#endif
                              {"note", "wall-clock medians on this machine; both sides share one thread budget"}}}};
    const fs::path dir = output_dir(o.output, cfg, "benchmark");
    stage("write", [&] {
        io::write_json(dir / "benchmark.json", report);
        write_manifest(dir, "benchmark", ctx, &cfg, {{"steps", o.steps}, {"repeats", o.repeats}, {"init", o.init}});
    });
    char buf[200];
    std::snprintf(buf, sizeof buf, "network %.4es  FE %.4es  ratio %s (median of %d, %d steps, %d thread(s))\n", r.t_nn, r.t_fe,
                  r.ratio_defined ? std::to_string(r.ratio).c_str() : "undefined", r.repeats, r.n_steps, worker_threads());
    out(ctx) << buf;
    return report;
}

// ---------------------------------------------------------------- postprocess

struct PostprocessOptions {
    std::optional<fs::path> config;
    fs::path field;              ///< a field CSV or a trajectory directory
    std::optional<int> step;     ///< step of a trajectory directory (default last)
    std::vector<std::string> sections;  ///< "x=0.5", "y=0.18"
    int upsample = 0;            ///< grid points per side, 0 = none
    std::optional<fs::path> output;  ///< default <run.output>/post
};

inline std::pair<Axis, double> parse_section(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ValidationError("section '" + s + "' must look like x=0.5 or y=0.18");
    const std::string axis = s.substr(0, eq);
    if (axis != "x" && axis != "y") throw ValidationError("section axis must be x or y, got '" + axis + "'");
    char* end = nullptr;
    const std::string num = s.substr(eq + 1);
    const double v = std::strtod(num.c_str(), &end);
    if (num.empty() || *end != '\0') throw ValidationError("section value '" + num + "' is not a number");
    return {axis == "x" ? Axis::x : Axis::y, v};
}

inline fs::path cmd_postprocess(const PostprocessOptions& o, const Context& ctx = {}) {
    const RunConfig cfg = config_or_default(o.config, ctx);
    const Problem p = stage("problem", [&] { return build_problem(cfg); });
    const FullField t = stage("read", [&] {
        if (!io::is_trajectory_dir(o.field)) return io::read_field(o.field, p.mesh);
        const Trajectory tr = io::read_trajectory(o.field, p.mesh);
        const auto s = static_cast<std::size_t>(o.step.value_or(static_cast<int>(tr.fields.size()) - 1));
        if (o.step && (*o.step < 0 || s >= tr.fields.size())) throw ValidationError("--step " + std::to_string(*o.step) + " is out of range");
        return tr.fields[s];
    });
    const fs::path dir = output_dir(o.output, cfg, "post");
    stage("postprocess", [&] {
        const FluxField q = heat_flux(p.mesh, p.k, t);
        const Eigen::VectorXd qmag = q.q.rowwise().norm();
        io::write_flux(dir / "flux.csv", p.mesh, q.q);
        for (const auto& spec : o.sections) {
            const auto [axis, value] = parse_section(spec);
            io::write_section(dir / ("section_T_" + spec + ".csv"), cross_section(p.mesh, t.values, axis, value));
            io::write_section(dir / ("section_q_" + spec + ".csv"), cross_section(p.mesh, qmag, axis, value));
        }
        if (o.upsample > 0) {
            const double nan = std::numeric_limits<double>::quiet_NaN();
            const Eigen::MatrixXd gt = upsample_field(p.mesh, t.values, o.upsample, o.upsample, nan);
            const Eigen::MatrixXd gq = upsample_field(p.mesh, qmag, o.upsample, o.upsample, nan);
            io::write_grid_csv(dir / "T_grid.csv", gt);
            io::write_pgm(dir / "T.pgm", gt);
            io::write_grid_csv(dir / "q_grid.csv", gq);
            io::write_pgm(dir / "q.pgm", gq);
        }
        write_manifest(dir, "postprocess", ctx, &cfg, {{"field", o.field.string()}, {"sections", o.sections}, {"upsample", o.upsample}});
    });
    out(ctx) << "wrote flux" << (o.sections.empty() ? "" : ", sections") << (o.upsample ? ", upsampled grids" : "") << " to "
             << dir.string() << "\n";
    return dir;
}

} // namespace fol::cli
