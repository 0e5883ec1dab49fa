#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fol/error.hpp"
#include "fol/mesh.hpp"

namespace fol {

using Rng = std::mt19937_64;

using Interval = std::pair<double, double>;

/// Interval lists for the randomized Fourier-series generator. Each term picks one
/// interval per parameter uniformly, then a value uniformly inside it.
struct FourierParams {
    int n_sum = 50;
    std::vector<Interval> c{{0.0, 0.5}, {0.5, 1.0}, {1.0, 1.5}};
    std::vector<Interval> A{{0.01, 0.1}, {0.1, 0.5}, {0.5, 1.0}, {1.0, 1.5}, {1.5, 2.0}};
    std::vector<Interval> B{{0.01, 0.1}, {0.1, 0.5}, {0.5, 1.0}, {1.0, 1.5}, {1.5, 2.0}};
    std::vector<Interval> C{{0.0, 0.0}, {0.001, 0.01}, {0.01, 0.1}, {0.1, 1.0}, {1.1, 2.0}, {2.1, 4.0}, {4.1, 6.0}};
    std::vector<Interval> D{{0.0, 0.0}, {0.001, 0.01}, {0.01, 0.1}, {0.1, 1.0}, {1.1, 2.0}, {2.1, 4.0}, {4.1, 6.0}};

    void validate() const {
        if (n_sum < 1) throw ValidationError("n_sum must be at least 1");
        for (const auto* list : {&c, &A, &B, &C, &D}) {
            if (list->empty()) throw ValidationError("Fourier parameter interval list is empty");
            for (const auto& [lo, hi] : *list)
                if (!(lo <= hi)) throw ValidationError("Fourier parameter interval has low > high");
        }
    }
};

/// Min-max normalization to [0,1]; a (numerically) constant input maps to 0.5.
inline Eigen::VectorXd normalize_unit(Eigen::VectorXd v) {
    if (v.size() == 0) return v;
    const double lo = v.minCoeff();
    const double hi = v.maxCoeff();
    if (hi - lo < 1e-12) return Eigen::VectorXd::Constant(v.size(), 0.5);
    return (v.array() - lo) / (hi - lo);
}

namespace detail {

inline double draw(const std::vector<Interval>& list, Rng& rng) {
    std::uniform_int_distribution<std::size_t> pick(0, list.size() - 1);
    const auto [lo, hi] = list[pick(rng)];
    if (lo == hi) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline std::vector<Point> free_coords(const Mesh& mesh, const DofMap& dofs) {
    std::vector<Point> p;
    p.reserve(dofs.n_free());
    for (int n : dofs.free) p.push_back(mesh.nodes[static_cast<std::size_t>(n)]);
    return p;
}

} // namespace detail

inline Eigen::VectorXd gen_fourier(const FourierParams& fp, const Mesh& mesh, const DofMap& dofs, Rng& rng) {
    fp.validate();
    const auto pts = detail::free_coords(mesh, dofs);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pts.size()));
    for (int term = 0; term < fp.n_sum; ++term) {
        const double c = detail::draw(fp.c, rng);
        const double a = detail::draw(fp.A, rng);
        const double b = detail::draw(fp.B, rng);
        const double fx = detail::draw(fp.C, rng);
        const double fy = detail::draw(fp.D, rng);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double sx = std::sin(fx * pts[i].x), cx = std::cos(fx * pts[i].x);
            const double sy = std::sin(fy * pts[i].y), cy = std::cos(fy * pts[i].y);
            v[static_cast<Eigen::Index>(i)] += c + a * sx * cy + b * cx * sy + a * sx * sy + b * cx * cy;
        }
    }
    return normalize_unit(std::move(v));
}

/// i.i.d. standard normal per free node, normalized.
inline Eigen::VectorXd gen_gaussian(const DofMap& dofs, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Eigen::VectorXd v(static_cast<Eigen::Index>(dofs.n_free()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = nd(rng);
    return normalize_unit(std::move(v));
}

inline Eigen::VectorXd gen_constant(const DofMap& dofs, Rng& rng) {
    const double c = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    return Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dofs.n_free()), c);
}

struct SampleCounts {
    int fourier = 1200;
    int gaussian = 1500;
    int constant = 300;
    int total() const { return fourier + gaussian + constant; }
};

/// Rows are samples, columns free dofs.
struct SampleSet {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> samples;
    SampleCounts provenance;
    std::uint64_t seed = 0;
    std::string fingerprint;

    Eigen::Index size() const { return samples.rows(); }
    Eigen::Index n_free() const { return samples.cols(); }
};

/// Independent stream per (seed, generator, sample index), so samples do not depend on generation order.
inline Rng sample_stream(std::uint64_t seed, std::uint32_t generator, std::uint32_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), generator, index};
    return Rng(seq);
}

inline SampleSet build_sample_set(const SampleCounts& counts, const FourierParams& fp, const Mesh& mesh, const DofMap& dofs,
                                  std::uint64_t seed) {
    if (counts.fourier < 0 || counts.gaussian < 0 || counts.constant < 0)
        throw ValidationError("sample counts must be non-negative");
    if (counts.fourier > 0) fp.validate();
    SampleSet s;
    s.provenance = counts;
    s.seed = seed;
    s.fingerprint = grid_fingerprint(mesh, dofs);
    s.samples.resize(counts.total(), static_cast<Eigen::Index>(dofs.n_free()));
    Eigen::Index row = 0;
    for (int i = 0; i < counts.fourier; ++i) {
        Rng rng = sample_stream(seed, 0, static_cast<std::uint32_t>(i));
        s.samples.row(row++) = gen_fourier(fp, mesh, dofs, rng).transpose();
    }
    for (int i = 0; i < counts.gaussian; ++i) {
        Rng rng = sample_stream(seed, 1, static_cast<std::uint32_t>(i));
        s.samples.row(row++) = gen_gaussian(dofs, rng).transpose();
    }
    for (int i = 0; i < counts.constant; ++i) {
        Rng rng = sample_stream(seed, 2, static_cast<std::uint32_t>(i));
        s.samples.row(row++) = gen_constant(dofs, rng).transpose();
    }
    return s;
}

} // namespace fol
