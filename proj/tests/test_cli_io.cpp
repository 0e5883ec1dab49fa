#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <map>

#include "fol/commands.hpp"

using namespace fol;
using namespace fol::cli;
namespace fs = std::filesystem;

namespace {

/// Fresh per-test scratch directory.
fs::path scratch() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    const fs::path d = fs::temp_directory_path() / ("fol_cli_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

const Context quiet{{}, nullptr};

const char* kSmoke = R"(; 3x3 smoke run
[mesh]
nx = 3
ny = 3
[samples]
fourier = 12
gaussian = 15
constant = 3
[train]
epochs = 1
batch_size = 10
[run]
output = out
seed = 11
)";

fs::path write_config(const fs::path& dir, const std::string& text, const std::string& name = "run.ini") {
    io::write_text(dir / name, text);
    return dir / name;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::read_text(e.path());
    return out;
}

int exit_code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.exit_code();
    }
    return 0;
}

} // namespace

// ---------------------------------------------------------------- formats

TEST(Csv, ParseErrorsCarryLineNumbers) {
    EXPECT_THROW(io::parse_csv(""), ParseError);
    try {
        io::parse_csv("a,b\n1,2\n3\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    try {
        io::parse_csv("a,b\n1,2\n\n4,x\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 4u);
    }
    const auto t = io::parse_csv("a, b\r\n1, 2.5\r\n");
    EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
    EXPECT_EQ(t.rows[0][1], 2.5);
}

TEST(Csv, FieldAndConductivityRoundTripBitExact) {
    const fs::path d = scratch();
    const Mesh m = build_structured_grid(5, 4);
    FullField f{Eigen::VectorXd::Random(20)};
    f.values[3] = 1.0 / 3.0;
    io::write_field(d / "f.csv", m, f);
    EXPECT_EQ(io::read_field(d / "f.csv", m).values, f.values);
    EXPECT_THROW(io::read_field(d / "f.csv", build_structured_grid(4, 4)), ValidationError);

    const ConductivityField k = inclusion_conductivity(m);
    io::write_conductivity(d / "k.csv", k);
    EXPECT_EQ(io::read_conductivity(d / "k.csv", m).k, k.k);
    io::write_text(d / "bad.csv", "node_id,k\n0,1\n1,-1\n2,1\n3,1\n");
    EXPECT_THROW(io::read_conductivity(d / "bad.csv", build_structured_grid(2, 2)), ValidationError);
}

TEST(Csv, RepeatedAndOutOfRangeNodeIds) {
    const fs::path d = scratch();
    const Mesh m = build_structured_grid(2, 2);
    io::write_text(d / "dup.csv", "node_id,x,y,T\n0,0,0,1\n0,0,0,1\n2,0,0,1\n3,0,0,1\n");
    EXPECT_THROW(io::read_field(d / "dup.csv", m), ValidationError);
    io::write_text(d / "oob.csv", "node_id,x,y,T\n0,0,0,1\n1,0,0,1\n2,0,0,1\n4,0,0,1\n");
    EXPECT_THROW(io::read_field(d / "oob.csv", m), ValidationError);
}

TEST(Csv, SamplesRoundTripWithProvenance) {
    const fs::path d = scratch();
    const Mesh m = build_structured_grid(4, 4);
    const DofMap dofs = build_dof_map(m, {{{"left", 1.0}, {"right", 0.0}}});
    const SampleSet s = build_sample_set({3, 4, 2}, {}, m, dofs, 5);
    io::write_samples(d / "s.csv", s, {}, {});
    const SampleSet r = io::read_samples(d / "s.csv");
    EXPECT_EQ(r.samples, s.samples);
    EXPECT_EQ(r.provenance.fourier, 3);
    EXPECT_EQ(r.provenance.gaussian, 4);
    EXPECT_EQ(r.provenance.constant, 2);
    EXPECT_EQ(r.seed, 5u);
    EXPECT_EQ(r.fingerprint, grid_fingerprint(m, dofs));
}

TEST(Csv, TrajectoryMissingStepIsReported) {
    const fs::path d = scratch();
    const Mesh m = build_structured_grid(3, 3);
    std::vector<FullField> f(4, FullField{Eigen::VectorXd::Constant(9, 0.5)});
    io::write_trajectory(d / "t", m, f, 0.05);
    EXPECT_EQ(io::read_trajectory(d / "t", m).fields.size(), 4u);
    fs::remove(d / "t" / "step_0002.csv");
    try {
        io::read_trajectory(d / "t", m);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("step_0002.csv"), std::string::npos);
    }
    EXPECT_THROW(io::read_trajectory(d / "nowhere"), IoError);
}

// ---------------------------------------------------------------- config

TEST(Config, DefaultsAreTheMainStudySetup) {
    const RunConfig c = parse_config("");
    EXPECT_EQ(c.mesh.shape, "structured");
    EXPECT_EQ(c.mesh.nx, 11);
    EXPECT_EQ(c.mesh.ny, 11);
    EXPECT_EQ(c.train.dt, 0.05);
    EXPECT_EQ(c.train.optimizer, Optimizer::adam);
    EXPECT_EQ(c.train.lr, 1e-3);
    EXPECT_EQ(c.train.batch_size, 60);
    EXPECT_EQ(c.train.epochs, 1000);
    EXPECT_EQ(c.model.activation, Activation::swish);
    EXPECT_EQ(c.model.arch, Architecture::separated);
    EXPECT_EQ(c.counts.fourier, 1200);
    EXPECT_EQ(c.counts.gaussian, 1500);
    EXPECT_EQ(c.counts.constant, 300);
    EXPECT_EQ(c.counts.total(), 3000);
    EXPECT_EQ(c.material.rho, 10.0);
    EXPECT_EQ(c.material.c, 1.0);
    EXPECT_EQ(c.conductivity.k, 1.0);
    EXPECT_EQ(c.dirichlet.entries.at("left"), 1.0);
    EXPECT_EQ(c.dirichlet.entries.at("right"), 0.0);
}

TEST(Config, UnknownKeysSectionsAndBadValuesRejected) {
    EXPECT_THROW(parse_config("[train]\nepoch = 3\n"), ValidationError);
    EXPECT_THROW(parse_config("[solver]\ntol = 1\n"), ValidationError);
    EXPECT_THROW(parse_config("[train]\nepochs = many\n"), ValidationError);
    EXPECT_THROW(parse_config("[train]\nepochs = 0\n"), ValidationError);
    EXPECT_THROW(parse_config("[train]\noptimizer = sgd\n"), ValidationError);
    EXPECT_THROW(parse_config("[model]\nactivation = gelu\n"), ValidationError);
    EXPECT_THROW(parse_config("[samples]\nA = 3:1\n"), ValidationError);
    EXPECT_THROW(parse_config("[train\n"), ParseError);
}

TEST(Config, CommentsAndOverrides) {
    const RunConfig c = parse_config("# comment\n[mesh]\n; another\nnx = 21\n[dirichlet]\ntop = 0.25\n[samples]\nA = 0:1, 2:3\n"
                                     "[conductivity]\nkind = inclusions\ncircles = 0.5 0.5 0.1; 0.2 0.2 0.05\n");
    EXPECT_EQ(c.mesh.nx, 21);
    EXPECT_EQ(c.dirichlet.entries.size(), 1u);
    EXPECT_EQ(c.dirichlet.entries.at("top"), 0.25);
    ASSERT_EQ(c.fourier.A.size(), 2u);
    EXPECT_EQ(c.fourier.A[1].second, 3.0);
    ASSERT_EQ(c.conductivity.inclusions.circles.size(), 2u);
    EXPECT_EQ(c.conductivity.inclusions.circles[1].r, 0.05);
}

TEST(Config, EffectiveDumpParsesBackIdentically) {
    RunConfig c = parse_config("[mesh]\nshape = plate_with_hole\nn_side = 9\n[model]\narchitecture = fully_connected\nhidden = 7, 5\n"
                               "[train]\noptimizer = lbfgs\nlr = 0.1\n[run]\nseed = 42\n");
    const std::string once = to_ini(c);
    EXPECT_EQ(to_ini(parse_config(once)), once);
    EXPECT_EQ(to_ini(parse_config(to_ini(RunConfig{}))), to_ini(RunConfig{}));
}

TEST(Config, MissingReferencedFileIsAnIoError) {
    const fs::path d = scratch();
    EXPECT_THROW(load_config(write_config(d, "[mesh]\nshape = file\nfile = nope.folmesh\n")), IoError);
    EXPECT_THROW(load_config(write_config(d, "[conductivity]\nkind = file\nfile = nope.csv\n")), IoError);
    EXPECT_THROW(load_config(d / "absent.ini"), IoError);
}

TEST(Config, FileMeshResolvesRelativeToConfig) {
    const fs::path d = scratch();
    cmd_gen_mesh({.nx = 4, .ny = 3, .output = d / "meshes" / "g.folmesh"}, quiet);
    const RunConfig c = load_config(write_config(d, "[mesh]\nshape = file\nfile = meshes/g.folmesh\n"));
    const Problem p = build_problem(c);
    EXPECT_EQ(p.mesh.node_count(), 12u);
}

// ---------------------------------------------------------------- gen-mesh / validate

TEST(GenMesh, CountsAndValidation) {
    const fs::path d = scratch();
    const auto s = cmd_gen_mesh({.nx = 11, .ny = 11, .output = d / "m.folmesh"}, quiet);
    EXPECT_EQ(s.nodes, 121u);
    EXPECT_EQ(s.elements, 100u);
    EXPECT_EQ(load_mesh(io::read_text(d / "m.folmesh")).node_count(), 121u);
    EXPECT_EQ(cmd_validate(d / "m.folmesh", quiet).nodes, 121u);
    EXPECT_TRUE(fs::exists(d / "m.folmesh.manifest.json"));

    EXPECT_EQ(exit_code_of([&] { cmd_gen_mesh({.nx = 1, .output = d / "bad.folmesh"}, quiet); }), 1);
    EXPECT_FALSE(fs::exists(d / "bad.folmesh"));
    EXPECT_EQ(exit_code_of([&] { cmd_gen_mesh({.shape = "triangle", .output = d / "bad.folmesh"}, quiet); }), 1);
}

TEST(GenMesh, PlateWithHolePassesValidate) {
    const fs::path d = scratch();
    const auto s = cmd_gen_mesh({.shape = "plate-with-hole", .output = d / "h.folmesh"}, quiet);
    EXPECT_EQ(cmd_validate(d / "h.folmesh", quiet).nodes, s.nodes);
    EXPECT_TRUE(load_mesh(io::read_text(d / "h.folmesh")).boundary_sets.count("hole"));
}

TEST(Validate, ReportsBrokenFiles) {
    const fs::path d = scratch();
    io::write_text(d / "junk.folmesh", "not a mesh\n");
    EXPECT_EQ(exit_code_of([&] { cmd_validate(d / "junk.folmesh", quiet); }), 1);
    EXPECT_EQ(exit_code_of([&] { cmd_validate(d / "missing.folmesh", quiet); }), 3);
    EXPECT_EQ(exit_code_of([&] { cmd_validate(write_config(d, kSmoke), quiet); }), 0);
}

// ---------------------------------------------------------------- gen-samples

TEST(GenSamples, DefaultSplitRecorded) {
    const fs::path d = scratch();
    const fs::path csv = cmd_gen_samples({.output = d / "s"}, quiet);
    const auto meta = io::read_json(d / "s" / "samples.json");
    EXPECT_EQ(meta["counts"]["fourier"], 1200);
    EXPECT_EQ(meta["counts"]["gaussian"], 1500);
    EXPECT_EQ(meta["counts"]["constant"], 300);
    EXPECT_EQ(meta["n_free"], 99);
    const SampleSet s = io::read_samples(csv);
    EXPECT_EQ(s.size(), 3000);
    EXPECT_GE(s.samples.minCoeff(), 0.0);
    EXPECT_LE(s.samples.maxCoeff(), 1.0);
    EXPECT_TRUE(fs::exists(d / "s" / "manifest.json"));
    EXPECT_TRUE(fs::exists(d / "s" / "config.ini"));
}

TEST(GenSamples, CountOverridesAndDeterminism) {
    const fs::path d = scratch();
    const fs::path a = cmd_gen_samples({.output = d / "a", .fourier = 0, .gaussian = 10, .constant = 0}, quiet);
    EXPECT_EQ(io::read_samples(a).size(), 10);
    const fs::path b = cmd_gen_samples({.output = d / "b", .fourier = 0, .gaussian = 10, .constant = 0}, quiet);
    EXPECT_EQ(io::read_text(a), io::read_text(b));
    const fs::path c = cmd_gen_samples({.output = d / "c", .fourier = 0, .gaussian = 10, .constant = 0, .seed = 99}, quiet);
    EXPECT_NE(io::read_text(a), io::read_text(c));
    EXPECT_EQ(exit_code_of([&] { cmd_gen_samples({.output = d / "e", .fourier = -1}, quiet); }), 1);
}

// ---------------------------------------------------------------- train

TEST(Train, OneEpochSmokeRunIsFastAndDeterministic) {
    const fs::path d = scratch();
    const fs::path cfg = write_config(d, kSmoke);
    const auto t0 = std::chrono::steady_clock::now();
    const TrainSummary a = cmd_train({.config = cfg, .output = d / "a"}, quiet);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    EXPECT_LT(secs, 5.0);
    EXPECT_TRUE(fs::exists(a.checkpoint));
    const auto loss = io::read_csv(a.loss_csv);
    EXPECT_EQ(loss.header, (std::vector<std::string>{"epoch", "mean_loss"}));
    EXPECT_EQ(loss.rows.size(), 1u);

    cmd_train({.config = cfg, .output = d / "b"}, quiet);
    EXPECT_EQ(io::read_text(d / "b" / "loss.csv"), io::read_text(a.loss_csv));
    EXPECT_EQ(io::read_text(d / "b" / "checkpoint.fol"), io::read_text(a.checkpoint));
}

TEST(Train, SamplesFromFileMatchInMemoryGeneration) {
    const fs::path d = scratch();
    const fs::path cfg = write_config(d, kSmoke);
    const fs::path csv = cmd_gen_samples({.config = cfg, .output = d / "s"}, quiet);
    const TrainSummary a = cmd_train({.config = cfg, .samples = csv, .output = d / "a"}, quiet);
    const TrainSummary b = cmd_train({.config = cfg, .output = d / "b"}, quiet);
    EXPECT_EQ(io::read_text(a.checkpoint), io::read_text(b.checkpoint));
}

TEST(Train, SamplesForAnotherGridRejected) {
    const fs::path d = scratch();
    const fs::path csv = cmd_gen_samples({.output = d / "s", .fourier = 2, .gaussian = 2, .constant = 2}, quiet);
    try {
        cmd_train({.config = write_config(d, kSmoke), .samples = csv, .output = d / "m"}, quiet);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "samples");
        EXPECT_EQ(e.exit_code(), 1);
    }
}

TEST(Train, MissingMeshFileFailsBeforeTraining) {
    const fs::path d = scratch();
    const fs::path cfg = write_config(d, "[mesh]\nshape = file\nfile = gone.folmesh\n[run]\noutput = out\n");
    try {
        cmd_train({.config = cfg}, quiet);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "config");
        EXPECT_EQ(e.exit_code(), 3);
        EXPECT_NE(std::string(e.what()).find("gone.folmesh"), std::string::npos);
    }
    EXPECT_FALSE(fs::exists(d / "out"));
}

TEST(Train, StageErrorsKeepExitCodes) {
    EXPECT_EQ(StageError("x", NumericalError("n")).exit_code(), 2);
    EXPECT_EQ(StageError("x", IoError("n")).exit_code(), 3);
    EXPECT_EQ(StageError("x", ValidationError("n")).exit_code(), 1);
    EXPECT_STREQ(StageError("train", NumericalError("loss is not finite")).what(), "stage 'train': loss is not finite");
}

// ---------------------------------------------------------------- predict / solve-fem

class Pipeline : public ::testing::Test {
protected:
    fs::path dir, cfg, ckpt;
    void SetUp() override {
        dir = scratch();
        cfg = write_config(dir, kSmoke);
        ckpt = cmd_train({.config = cfg, .output = dir / "model"}, quiet).checkpoint;
    }
};

TEST_F(Pipeline, PredictWritesStepFiles) {
    const fs::path p = cmd_predict({.config = cfg, .checkpoint = ckpt, .init = "canonical:sin10y", .steps = 10, .output = dir / "p"}, quiet);
    for (int s = 0; s <= 10; ++s) EXPECT_TRUE(fs::exists(p / io::step_name(static_cast<std::size_t>(s))));
    EXPECT_FALSE(fs::exists(p / io::step_name(11)));
    EXPECT_EQ(io::read_trajectory(p).fields.size(), 11u);

    const fs::path z = cmd_predict({.config = cfg, .checkpoint = ckpt, .steps = 0, .output = dir / "z"}, quiet);
    EXPECT_TRUE(fs::exists(z / "step_0000.csv"));
    EXPECT_FALSE(fs::exists(z / "step_0001.csv"));
    EXPECT_TRUE(fs::exists(z / "manifest.json"));
}

TEST_F(Pipeline, PredictRejectsCheckpointFromAnotherGrid) {
    const fs::path other = write_config(dir, "[mesh]\nnx = 4\nny = 3\n", "other.ini");
    try {
        cmd_predict({.config = other, .checkpoint = ckpt, .output = dir / "p"}, quiet);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "checkpoint");
        EXPECT_NE(std::string(e.what()).find("different grid"), std::string::npos);
    }
    EXPECT_EQ(exit_code_of([&] { cmd_predict({.config = cfg, .checkpoint = ckpt, .init = "canonical:nope", .output = dir / "q"}, quiet); }), 1);
}

TEST_F(Pipeline, PredictFromFileImposesDirichletValues) {
    const Problem p = build_problem(load_config(cfg));
    io::write_field(dir / "init.csv", p.mesh, FullField{Eigen::VectorXd::Constant(9, 0.3)});
    const fs::path out = cmd_predict({.config = cfg, .checkpoint = ckpt, .init = (dir / "init.csv").string(), .steps = 1,
                                      .output = dir / "p"}, quiet);
    const FullField t0 = io::read_field(out / "step_0000.csv", p.mesh);
    for (const auto& [node, value] : p.dofs.constrained) EXPECT_EQ(t0.values[node], value);
    for (int f : p.dofs.free) EXPECT_EQ(t0.values[f], 0.3);
}

TEST_F(Pipeline, SolveFemLayoutMatchesPredict) {
    const fs::path p = cmd_predict({.config = cfg, .checkpoint = ckpt, .init = "canonical:all", .output = dir / "p"}, quiet);
    const fs::path f = cmd_solve_fem({.config = cfg, .init = "canonical:all", .output = dir / "f"}, quiet);
    std::set<std::string> a, b;
    for (const auto& [k, _] : dir_bytes(p)) a.insert(k);
    for (const auto& [k, _] : dir_bytes(f)) b.insert(k);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.count("gaussian/step_0010.csv"), 1u);
}

TEST(SolveFem, AlphaFlag) {
    const fs::path d = scratch();
    const fs::path cfg = write_config(d, kSmoke);
    for (double a : {0.0, 0.5, 1.0})
        EXPECT_EQ(exit_code_of([&] { cmd_solve_fem({.config = cfg, .steps = 2, .alpha = a, .output = d / "ok"}, quiet); }), 0);
    for (double a : {0.3, -1.0, 2.0})
        EXPECT_EQ(exit_code_of([&] { cmd_solve_fem({.config = cfg, .steps = 2, .alpha = a, .output = d / "bad"}, quiet); }), 1);
}

TEST(SolveFem, LongRunMatchesSteadyState) {
    const fs::path d = scratch();
    const fs::path s = cmd_solve_fem({.steady = true, .output = d / "s"}, quiet);
    const fs::path t = cmd_solve_fem({.init = "canonical:const05", .steps = 200, .output = d / "t"}, quiet);
    const Trajectory ss = io::read_trajectory(s);
    const Trajectory tr = io::read_trajectory(t);
    ASSERT_EQ(ss.fields.size(), 1u);
    ASSERT_EQ(tr.fields.size(), 201u);
    EXPECT_LT((tr.fields.back().values - ss.fields[0].values).cwiseAbs().maxCoeff(), 1e-6);
}

// ---------------------------------------------------------------- evaluate

namespace {

void fake_trajectory(const fs::path& dir, int steps, double scale) {
    const Mesh m = build_structured_grid(3, 3);
    std::vector<FullField> f;
    for (int s = 0; s <= steps; ++s) {
        Eigen::VectorXd v(9);
        for (int i = 0; i < 9; ++i) v[i] = scale * (0.1 + 0.05 * i + 0.01 * s);
        f.push_back(FullField{v});
    }
    io::write_trajectory(dir, m, f, 0.05);
}

} // namespace

TEST(Evaluate, IdenticalDirsGiveZeros) {
    const fs::path d = scratch();
    fake_trajectory(d / "a", 5, 1.0);
    const auto rep = cmd_evaluate({.pred = d / "a", .ref = d / "a", .output = d / "e"}, quiet);
    ASSERT_EQ(rep.fields.size(), 1u);
    ASSERT_EQ(rep.fields[0].per_step.size(), 6u);
    for (double e : rep.fields[0].per_step) EXPECT_EQ(e, 0.0);
    const auto t = io::read_csv(d / "e" / "errors.csv");
    EXPECT_EQ(t.header, (std::vector<std::string>{"step", "t", "E_rr"}));
    EXPECT_EQ(t.rows.size(), 6u);
    EXPECT_TRUE(fs::exists(d / "e" / "summary.json"));
}

TEST(Evaluate, ScaledPredictionGivesTenPercent) {
    const fs::path d = scratch();
    fake_trajectory(d / "ref", 4, 1.0);
    fake_trajectory(d / "pred", 4, 1.1);
    const auto rep = cmd_evaluate({.pred = d / "pred", .ref = d / "ref", .output = d / "e"}, quiet);
    for (double e : rep.fields[0].per_step) EXPECT_NEAR(e, 0.1, 1e-14);
    EXPECT_NEAR(rep.mean_final, 0.1, 1e-14);
}

TEST(Evaluate, MissingStepAndLengthMismatch) {
    const fs::path d = scratch();
    fake_trajectory(d / "ref", 4, 1.0);
    fake_trajectory(d / "pred", 4, 1.0);
    fs::remove(d / "pred" / "step_0003.csv");
    EXPECT_EQ(exit_code_of([&] { cmd_evaluate({.pred = d / "pred", .ref = d / "ref", .output = d / "e"}, quiet); }), 1);
    fake_trajectory(d / "short", 3, 1.0);
    try {
        cmd_evaluate({.pred = d / "short", .ref = d / "ref", .output = d / "e"}, quiet);
        FAIL();
    } catch (const StageError& e) {
        EXPECT_NE(std::string(e.what()).find("step count mismatch"), std::string::npos);
    }
}

TEST(Evaluate, ThresholdsAndManifestMode) {
    const fs::path d = scratch();
    for (const char* n : {"u", "v", "w"}) {
        fake_trajectory(d / "ref" / n, 2, 1.0);
        fake_trajectory(d / "pred" / n, 2, std::string(n) == "w" ? 1.5 : 1.01);
    }
    io::write_json(d / "pred" / "manifest.json", nlohmann::json{{"fields", {"u", "v", "w"}}});
    auto rep = cmd_evaluate({.pred = d / "pred", .ref = d / "ref", .output = d / "e", .max_error = 0.1, .min_passing = 2}, quiet);
    EXPECT_EQ(rep.fields.size(), 3u);
    EXPECT_EQ(rep.passing, 2);
    EXPECT_TRUE(rep.thresholds_met);
    EXPECT_TRUE(fs::exists(d / "e" / "errors_w.csv"));
    EXPECT_NEAR(rep.mean_final, (0.01 + 0.01 + 0.5) / 3.0, 1e-12);

    rep = cmd_evaluate({.pred = d / "pred", .ref = d / "ref", .output = d / "e", .max_error = 0.1}, quiet);
    EXPECT_FALSE(rep.thresholds_met);
    rep = cmd_evaluate({.pred = d / "pred", .ref = d / "ref", .output = d / "e", .max_mean_final = 0.1}, quiet);
    EXPECT_FALSE(rep.thresholds_met);

    fs::remove_all(d / "ref" / "v");
    EXPECT_EQ(exit_code_of([&] { cmd_evaluate({.pred = d / "pred", .ref = d / "ref", .output = d / "e"}, quiet); }), 1);
}

// ---------------------------------------------------------------- benchmark / postprocess

TEST_F(Pipeline, BenchmarkReportSchema) {
    const auto r = cmd_benchmark({.config = cfg, .checkpoint = ckpt, .steps = 10, .repeats = 7, .output = dir / "b"}, quiet);
    const auto j = io::read_json(dir / "b" / "benchmark.json");
    EXPECT_EQ(j, r);
    for (const char* k : {"t_nn_median_s", "t_fe_median_s", "ratio", "ratio_defined", "threads", "hardware"}) EXPECT_TRUE(j.contains(k)) << k;
    EXPECT_EQ(j["steps"], 10);
    EXPECT_EQ(j["repeats"], 7);
    EXPECT_GT(j["t_nn_median_s"].get<double>(), 0.0);
    EXPECT_GT(j["t_fe_median_s"].get<double>(), 0.0);
    EXPECT_EQ(exit_code_of([&] { cmd_benchmark({.config = cfg, .checkpoint = ckpt, .repeats = 3, .output = dir / "c"}, quiet); }), 1);
}

TEST(Postprocess, FluxSectionsAndGrids) {
    const fs::path d = scratch();
    const Problem p = build_problem(RunConfig{});
    FullField t{Eigen::VectorXd(121)};
    for (int i = 0; i < 121; ++i) t.values[i] = 1.0 - p.mesh.nodes[static_cast<std::size_t>(i)].x;
    io::write_field(d / "lin.csv", p.mesh, t);
    const fs::path out = cmd_postprocess({.field = d / "lin.csv", .sections = {"x=0.5", "y=0.18"}, .upsample = 17, .output = d / "post"},
                                         quiet);
    const auto flux = io::read_csv(out / "flux.csv");
    EXPECT_EQ(flux.header, (std::vector<std::string>{"node_id", "x", "y", "qx", "qy", "q_mag"}));
    for (const auto& r : flux.rows) EXPECT_NEAR(r[3], 1.0, 1e-12);
    const auto sec = io::read_csv(out / "section_T_y=0.18.csv");
    EXPECT_EQ(sec.rows.size(), 11u);
    for (const auto& r : sec.rows) EXPECT_NEAR(r[1], 1.0 - r[0], 1e-12);
    EXPECT_EQ(io::read_csv(out / "section_T_x=0.5.csv").rows.size(), 11u);
    const std::string pgm = io::read_text(out / "T.pgm");
    EXPECT_EQ(pgm.rfind("P5\n17 17\n255\n", 0), 0u);
    EXPECT_EQ(pgm.size(), std::string("P5\n17 17\n255\n").size() + 17u * 17u);
    EXPECT_EQ(exit_code_of([&] { cmd_postprocess({.field = d / "lin.csv", .sections = {"z=1"}, .output = d / "x"}, quiet); }), 1);
}

TEST(Postprocess, HoleCellsAreBlankInGrids) {
    const fs::path d = scratch();
    const RunConfig cfg = parse_config("[mesh]\nshape = plate_with_hole\n");
    io::write_text(d / "hole.ini", to_ini(cfg));
    const Problem p = build_problem(cfg);
    io::write_field(d / "f.csv", p.mesh, FullField{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p.mesh.node_count()), 0.7)});
    cmd_postprocess({.config = d / "hole.ini", .field = d / "f.csv", .upsample = 21, .output = d / "post"}, quiet);
    const std::string pgm = io::read_text(d / "post" / "T.pgm");
    const std::string header = "P5\n21 21\n255\n";
    // centre pixel is inside the hole, the corner is material
    EXPECT_EQ(pgm[header.size() + 10 * 21 + 10], '\0');
    EXPECT_NE(pgm[header.size()], '\0');
}

// ---------------------------------------------------------------- reproducibility

TEST(Determinism, SmokePipelineRerunsByteIdentical) {
    const fs::path d = scratch();
    const fs::path cfg = write_config(d, kSmoke);
    auto run = [&](const fs::path& root) {
        const fs::path csv = cmd_gen_samples({.config = cfg, .output = root / "samples"}, quiet);
        const auto t = cmd_train({.config = cfg, .samples = csv, .output = root / "model"}, quiet);
        cmd_predict({.config = cfg, .checkpoint = t.checkpoint, .init = "canonical:all", .output = root / "pred"}, quiet);
        cmd_solve_fem({.config = cfg, .init = "canonical:all", .output = root / "fem"}, quiet);
        cmd_evaluate({.pred = root / "pred", .ref = root / "fem", .output = root / "eval"}, quiet);
    };
    run(d / "r1");
    run(d / "r2");
    auto a = dir_bytes(d / "r1");
    auto b = dir_bytes(d / "r2");
    // evaluate records its input paths, which differ between the two roots
    a.erase("eval/manifest.json");
    b.erase("eval/manifest.json");
    EXPECT_GT(a.size(), 50u);
    EXPECT_TRUE(a == b);
}

TEST(MeshOverride, GeneratedMeshFeedsLaterStages) {
    const fs::path d = scratch();
    cmd_gen_mesh({.nx = 3, .ny = 3, .output = d / "g.folmesh"}, quiet);
    Context ctx = quiet;
    ctx.mesh = d / "g.folmesh";
    const fs::path cfg = write_config(d, kSmoke);
    const auto a = cmd_train({.config = cfg, .output = d / "a"}, ctx);
    const auto b = cmd_train({.config = cfg, .output = d / "b"}, quiet);
    // the file mesh is the same grid, so the runs coincide
    EXPECT_EQ(io::read_text(a.checkpoint), io::read_text(b.checkpoint));
    EXPECT_EQ(load_config(d / "a" / "config.ini").mesh.shape, "file");
    ctx.mesh = d / "absent.folmesh";
    EXPECT_EQ(exit_code_of([&] { cmd_train({.config = cfg, .output = d / "c"}, ctx); }), 3);
}
