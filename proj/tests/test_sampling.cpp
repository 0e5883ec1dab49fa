#include <gtest/gtest.h>

#include "fol/sampling.hpp"

using namespace fol;

namespace {

struct Grid {
    Mesh mesh = build_structured_grid(11, 11);
    DofMap dofs = build_dof_map(mesh, {{{"left", 1.0}, {"right", 0.0}}});
};

void expect_unit_range(const Eigen::VectorXd& v) {
    EXPECT_GE(v.minCoeff(), 0.0);
    EXPECT_LE(v.maxCoeff(), 1.0);
}

} // namespace

TEST(Normalize, MinMaxAndDegenerate) {
    const Eigen::VectorXd v = normalize_unit(Eigen::Vector3d(2.0, 4.0, 3.0));
    EXPECT_EQ(v, Eigen::Vector3d(0.0, 1.0, 0.5));
    EXPECT_EQ(normalize_unit(Eigen::Vector3d::Constant(7.0)), Eigen::Vector3d::Constant(0.5));
    EXPECT_EQ(normalize_unit(Eigen::Vector2d(1.0, 1.0 + 1e-13)), Eigen::Vector2d::Constant(0.5));
    EXPECT_EQ(normalize_unit(Eigen::VectorXd()).size(), 0);
}

TEST(Fourier, DeterministicAndInRange) {
    const Grid g;
    const FourierParams fp;
    for (std::uint32_t i = 0; i < 20; ++i) {
        Rng a = sample_stream(11, 0, i), b = sample_stream(11, 0, i);
        const Eigen::VectorXd va = gen_fourier(fp, g.mesh, g.dofs, a);
        EXPECT_EQ(va, gen_fourier(fp, g.mesh, g.dofs, b));
        EXPECT_EQ(va.size(), 99);
        expect_unit_range(va);
    }
}

TEST(Fourier, NonConstantWithNonzeroFrequencies) {
    const Grid g;
    const FourierParams fp;
    for (std::uint32_t i = 0; i < 100; ++i) {
        Rng rng = sample_stream(5, 0, i);
        const Eigen::VectorXd v = gen_fourier(fp, g.mesh, g.dofs, rng);
        EXPECT_GT(v.maxCoeff() - v.minCoeff(), 1e-9) << i;
    }
}

TEST(Fourier, DegenerateAmplitudesGiveHalf) {
    const Grid g;
    FourierParams fp;
    fp.A = {{0.0, 0.0}};
    fp.B = {{0.0, 0.0}};
    Rng rng(3);
    EXPECT_EQ(gen_fourier(fp, g.mesh, g.dofs, rng), Eigen::VectorXd::Constant(99, 0.5));

    fp.n_sum = 1;
    fp.c = {{1.0, 1.0}};
    EXPECT_EQ(gen_fourier(fp, g.mesh, g.dofs, rng), Eigen::VectorXd::Constant(99, 0.5));
}

TEST(Fourier, SingleTermMatchesClosedForm) {
    const Grid g;
    FourierParams fp;
    fp.n_sum = 1;
    fp.c = {{0.2, 0.2}};
    fp.A = {{1.0, 1.0}};
    fp.B = {{0.5, 0.5}};
    fp.C = {{2.0, 2.0}};
    fp.D = {{3.0, 3.0}};
    Rng rng(0);
    const Eigen::VectorXd v = gen_fourier(fp, g.mesh, g.dofs, rng);
    Eigen::VectorXd raw(99);
    for (std::size_t i = 0; i < g.dofs.n_free(); ++i) {
        const Point p = g.mesh.nodes[static_cast<std::size_t>(g.dofs.free[i])];
        // A sin(Cx)(cos(Dy)+sin(Dy)) + B cos(Cx)(sin(Dy)+cos(Dy))
        const double s = std::sin(3 * p.y) + std::cos(3 * p.y);
        raw[static_cast<Eigen::Index>(i)] = 0.2 + (std::sin(2 * p.x) + 0.5 * std::cos(2 * p.x)) * s;
    }
    const Eigen::VectorXd expected = (raw.array() - raw.minCoeff()) / (raw.maxCoeff() - raw.minCoeff());
    EXPECT_LT((v - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Fourier, InvalidParamsRejected) {
    const Grid g;
    Rng rng(0);
    FourierParams fp;
    fp.n_sum = 0;
    EXPECT_THROW(gen_fourier(fp, g.mesh, g.dofs, rng), ValidationError);
    fp = {};
    fp.C = {};
    EXPECT_THROW(gen_fourier(fp, g.mesh, g.dofs, rng), ValidationError);
    fp = {};
    fp.A = {{0.5, 0.1}};
    EXPECT_THROW(gen_fourier(fp, g.mesh, g.dofs, rng), ValidationError);
}

TEST(Gaussian, ExactEndpointsAndMean) {
    const Grid g;
    Rng a(9), b(9);
    const Eigen::VectorXd v = gen_gaussian(g.dofs, a);
    EXPECT_EQ(v, gen_gaussian(g.dofs, b));
    EXPECT_EQ(v.minCoeff(), 0.0);
    EXPECT_EQ(v.maxCoeff(), 1.0);

    const DofMap big = build_dof_map(build_structured_grid(317, 317), {});
    ASSERT_GE(big.n_free(), 100000u);
    Rng rng(123);
    const double mean = gen_gaussian(big, rng).mean();
    EXPECT_GE(mean, 0.45);
    EXPECT_LE(mean, 0.55);
}

TEST(Constant, BroadcastAndMean) {
    const Grid g;
    Rng a(4), b(4);
    const Eigen::VectorXd v = gen_constant(g.dofs, a);
    EXPECT_EQ(v, gen_constant(g.dofs, b));
    EXPECT_EQ(v.maxCoeff() - v.minCoeff(), 0.0);
    expect_unit_range(v);

    double sum = 0;
    for (std::uint32_t i = 0; i < 300; ++i) {
        Rng rng = sample_stream(77, 2, i);
        sum += gen_constant(g.dofs, rng)[0];
    }
    EXPECT_GE(sum / 300, 0.4);
    EXPECT_LE(sum / 300, 0.6);
}

TEST(SampleSet, PaperCountsShapeAndProvenance) {
    const Grid g;
    const SampleSet s = build_sample_set({}, {}, g.mesh, g.dofs, 42);
    EXPECT_EQ(s.size(), 3000);
    EXPECT_EQ(s.n_free(), 99);
    EXPECT_EQ(s.provenance.total(), 3000);
    EXPECT_EQ(s.fingerprint, grid_fingerprint(g.mesh, g.dofs));
    EXPECT_GE(s.samples.minCoeff(), 0.0);
    EXPECT_LE(s.samples.maxCoeff(), 1.0);
    // constant block is flat per row
    for (Eigen::Index r = 2700; r < 3000; ++r) EXPECT_EQ(s.samples.row(r).maxCoeff(), s.samples.row(r).minCoeff());
}

TEST(SampleSet, DeterministicAndOrderIndependent) {
    const Grid g;
    const SampleCounts c{10, 10, 5};
    const SampleSet a = build_sample_set(c, {}, g.mesh, g.dofs, 8);
    const SampleSet b = build_sample_set(c, {}, g.mesh, g.dofs, 8);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, build_sample_set(c, {}, g.mesh, g.dofs, 9).samples);
    // a smaller set is a prefix of each generator block
    const SampleSet small = build_sample_set({3, 4, 2}, {}, g.mesh, g.dofs, 8);
    EXPECT_EQ(small.samples.topRows(3), a.samples.topRows(3));
    EXPECT_EQ(small.samples.middleRows(3, 4), a.samples.middleRows(10, 4));
    EXPECT_EQ(small.samples.bottomRows(2), a.samples.middleRows(20, 2));
}

TEST(SampleSet, EdgeCounts) {
    const Grid g;
    const SampleSet one = build_sample_set({0, 0, 1}, {}, g.mesh, g.dofs, 1);
    EXPECT_EQ(one.size(), 1);
    EXPECT_EQ(one.samples.row(0).maxCoeff(), one.samples.row(0).minCoeff());
    EXPECT_EQ(build_sample_set({0, 0, 0}, {}, g.mesh, g.dofs, 1).size(), 0);
    EXPECT_THROW(build_sample_set({-1, 0, 0}, {}, g.mesh, g.dofs, 1), ValidationError);
}
