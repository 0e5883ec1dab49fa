#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fol/error.hpp"
#include "fol/fe_solver.hpp"
#include "fol/fem.hpp"
#include "fol/fields.hpp"
#include "fol/mesh.hpp"
#include "fol/neural.hpp"
#include "fol/sampling.hpp"
#include "fol/training.hpp"

namespace fol {

/// ||t_nn - t_fe|| / ||t_fe||.
inline double relative_l2(const FullField& t_nn, const FullField& t_fe) {
    if (t_nn.values.size() != t_fe.values.size()) throw ValidationError("fields differ in size");
    const double ref = t_fe.values.norm();
    if (ref == 0.0) throw ValidationError("relative error against a zero reference field");
    return (t_nn.values - t_fe.values).norm() / ref;
}

struct RolloutResult {
    std::vector<FullField> trajectory;
    std::vector<double> per_step_err;  ///< filled when a reference trajectory is given
    double dt = 0.0;
};

/// One model step on the full field; Dirichlet values re-inserted, no clamping.
inline FullField model_step(const ModelBundle& model, const DofMap& dofs, const FullField& t) {
    return merge_free(dofs, forward(model, extract_free(dofs, t)));
}

inline RolloutResult rollout(const ModelBundle& model, const Mesh& mesh, const DofMap& dofs, const FullField& t0, int n_steps,
                             const Trajectory* reference = nullptr) {
    require_fingerprint(model, mesh, dofs);
    const Trajectory tr = march([&](const FullField& t) { return model_step(model, dofs, t); }, t0, n_steps, model.dt);
    RolloutResult r{tr.fields, {}, model.dt};
    if (reference) {
        if (reference->fields.size() != r.trajectory.size()) throw ValidationError("reference trajectory length differs");
        for (std::size_t s = 0; s < r.trajectory.size(); ++s) r.per_step_err.push_back(relative_l2(r.trajectory[s], reference->fields[s]));
    }
    return r;
}

/// Per-node heat flux (q_x, q_y).
struct FluxField {
    Eigen::MatrixX2d q;

    Eigen::VectorXd magnitude() const { return q.rowwise().norm(); }
};

/// q = -k grad T at each element's Gauss points; every node averages the Gauss values
/// nearest to it from all elements that contain it.
inline FluxField heat_flux(const Mesh& mesh, const ConductivityField& k, const FullField& t) {
    const auto n = static_cast<Eigen::Index>(mesh.node_count());
    if (k.k.size() != n || t.values.size() != n) throw ValidationError("flux inputs do not match the mesh");
    const auto rule = gauss_rule_2x2();
    FluxField f{Eigen::MatrixX2d::Zero(n, 2)};
    Eigen::VectorXi hits = Eigen::VectorXi::Zero(n);
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const auto& quad = mesh.elems[e];
        const Mat42 c = mesh.element_coords(e);
        Vec4 te, ke;
        for (int a = 0; a < 4; ++a) {
            te[a] = t.values[quad[a]];
            ke[a] = k.k[quad[a]];
        }
        // Gauss point a sits in the quadrant of local node a
        for (int a = 0; a < 4; ++a) {
            const auto [xi, eta] = rule.points[static_cast<std::size_t>(a)];
            const BMatrix bm = b_matrix(c, xi, eta);
            const double kg = shape_values(xi, eta).dot(ke);
            const Eigen::Vector2d q = -kg * (bm.B * te);
            f.q.row(quad[a]) += q.transpose();
            ++hits[quad[a]];
        }
    }
    for (Eigen::Index i = 0; i < n; ++i)
        if (hits[i] > 0) f.q.row(i) /= hits[i];
    return f;
}

enum class Axis { x, y };

/// (coordinate, value) along the line axis = value, sorted by the other coordinate.
/// Uses nodes on the line when there are any, otherwise linear interpolation where the
/// line crosses element edges.
inline std::vector<std::pair<double, double>> cross_section(const Mesh& mesh, const Eigen::VectorXd& field, Axis axis,
                                                            double value) {
    if (static_cast<std::size_t>(field.size()) != mesh.node_count()) throw ValidationError("field does not match mesh");
    const auto bb = bounding_box(mesh);
    const double lo = axis == Axis::x ? bb.xmin : bb.ymin;
    const double hi = axis == Axis::x ? bb.xmax : bb.ymax;
    if (value < lo - 1e-9 || value > hi + 1e-9) throw ValidationError("cross-section line lies outside the domain");
    auto along = [axis](const Point& p) { return axis == Axis::x ? p.x : p.y; };
    auto free_coord = [axis](const Point& p) { return axis == Axis::x ? p.y : p.x; };
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < mesh.node_count(); ++i)
        if (std::abs(along(mesh.nodes[i]) - value) < 1e-9) out.emplace_back(free_coord(mesh.nodes[i]), field[static_cast<Eigen::Index>(i)]);
    if (out.empty()) {
        for (const auto& quad : mesh.elems)
            for (int a = 0; a < 4; ++a) {
                const int na = quad[a], nb = quad[(a + 1) % 4];
                const Point& pa = mesh.nodes[static_cast<std::size_t>(na)];
                const Point& pb = mesh.nodes[static_cast<std::size_t>(nb)];
                const double da = along(pa) - value, db = along(pb) - value;
                if (!(da * db < 0.0)) continue;
                const double s = da / (da - db);
                out.emplace_back(free_coord(pa) + s * (free_coord(pb) - free_coord(pa)),
                                 (1.0 - s) * field[na] + s * field[nb]);
            }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end(), [](const auto& a, const auto& b) { return std::abs(a.first - b.first) < 1e-12; }),
              out.end());
    return out;
}

/// Finds the element containing p and its reference coordinates.
inline std::optional<std::pair<std::size_t, Eigen::Vector2d>> locate_point(const Mesh& mesh, const Eigen::Vector2d& p) {
    constexpr double tol = 1e-10;
    for (std::size_t e = 0; e < mesh.element_count(); ++e) {
        const Mat42 c = mesh.element_coords(e);
        if (p.x() < c.col(0).minCoeff() - tol || p.x() > c.col(0).maxCoeff() + tol || p.y() < c.col(1).minCoeff() - tol ||
            p.y() > c.col(1).maxCoeff() + tol)
            continue;
        Eigen::Vector2d ref;
        if (map_to_reference(c, p, ref) && ref.cwiseAbs().maxCoeff() <= 1.0 + 1e-9) return std::pair{e, ref};
    }
    return std::nullopt;
}

/// Dense rx x ry grid over the bounding box (row j = y index, column i = x index),
/// interpolated with the bilinear shape functions. Points outside the mesh raise unless
/// `outside` supplies a fill value.
inline Eigen::MatrixXd upsample_field(const Mesh& mesh, const Eigen::VectorXd& field, int rx, int ry,
                                      std::optional<double> outside = std::nullopt) {
    if (rx < 2 || ry < 2) throw ValidationError("upsampled grid needs at least 2 x 2 points");
    if (static_cast<std::size_t>(field.size()) != mesh.node_count()) throw ValidationError("field does not match mesh");
    const auto bb = bounding_box(mesh);
    Eigen::MatrixXd g(ry, rx);
    for (int j = 0; j < ry; ++j)
        for (int i = 0; i < rx; ++i) {
            const Eigen::Vector2d p(bb.xmin + (bb.xmax - bb.xmin) * i / (rx - 1), bb.ymin + (bb.ymax - bb.ymin) * j / (ry - 1));
            const auto loc = locate_point(mesh, p);
            if (!loc) {
                if (!outside) throw ValidationError("query point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) + ") is outside the domain");
                g(j, i) = *outside;
                continue;
            }
            const auto& quad = mesh.elems[loc->first];
            const Vec4 n = shape_values(loc->second.x(), loc->second.y());
            double v = 0.0;
            for (int a = 0; a < 4; ++a) v += n[a] * field[quad[a]];
            g(j, i) = v;
        }
    return g;
}

struct NamedField {
    std::string name;
    FullField field;
};

/// Five evaluation initial conditions; constrained nodes carry their prescribed values.
inline std::vector<NamedField> canonical_test_fields(const Mesh& mesh, const DofMap& dofs, std::uint64_t gaussian_seed = 2024) {
    const auto n = static_cast<Eigen::Index>(mesh.node_count());
    auto eval = [&](auto&& fn) {
        FullField f{Eigen::VectorXd(n)};
        for (Eigen::Index i = 0; i < n; ++i) f.values[i] = fn(mesh.nodes[static_cast<std::size_t>(i)]);
        return apply_dirichlet(dofs, std::move(f));
    };
    std::vector<NamedField> out;
    out.push_back({"sin10y", eval([](const Point& p) { return 0.5 * (std::sin(10.0 * p.y) + 1.0); })});
    Rng rng = sample_stream(gaussian_seed, 7, 0);
    out.push_back({"gaussian", merge_free(dofs, FreeField{gen_gaussian(dofs, rng)})});
    out.push_back({"trig", eval([](const Point& p) {
                       return 0.5 * p.x * p.x * std::abs(std::sin(10.0 * p.x) + std::cos(10.0 * p.y));
                   })});
    out.push_back({"const05", eval([](const Point&) { return 0.5; })});
    out.push_back({"abs_sin10x", eval([](const Point& p) { return std::abs(std::sin(10.0 * p.x)); })});
    return out;
}

inline std::optional<FullField> find_canonical(const std::vector<NamedField>& fields, const std::string& name) {
    for (const auto& f : fields)
        if (f.name == name) return f.field;
    return std::nullopt;
}

struct BenchmarkResult {
    double t_nn = 0.0;  ///< median seconds for n_steps model steps
    double t_fe = 0.0;  ///< median seconds for n_steps FE steps
    double ratio = std::numeric_limits<double>::quiet_NaN();  ///< t_fe / t_nn; NaN when undefined
    bool ratio_defined = false;
    int n_steps = 0;
    int repeats = 0;
};

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <typename Fn>
double time_seconds(Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

/// Median wall clock of n_steps network steps vs n_steps implicit FE steps.
inline BenchmarkResult benchmark_speed(const ModelBundle& model, const ReducedSystem& rs, const DofMap& dofs,
                                       const FullField& t0, int n_steps = 10, int repeats = 5) {
    if (repeats < 5) throw ValidationError("benchmark needs at least 5 repeats");
    if (n_steps < 0) throw ValidationError("step count must be non-negative");
    BenchmarkResult r;
    r.n_steps = n_steps;
    r.repeats = repeats;
    double sink = 0.0;
    auto run_nn = [&] {
        FullField t = t0;
        for (int s = 0; s < n_steps; ++s) t = model_step(model, dofs, t);
        sink += t.values.sum();
    };
    auto run_fe = [&] {
        FullField t = t0;
        for (int s = 0; s < n_steps; ++s) t = step_fe(rs, dofs, t);
        sink += t.values.sum();
    };
    run_nn();  // warm-up
    run_fe();
    std::vector<double> tn, tf;
    for (int i = 0; i < repeats; ++i) {
        tn.push_back(detail::time_seconds(run_nn));
        tf.push_back(detail::time_seconds(run_fe));
    }
    r.t_nn = detail::median(tn);
    r.t_fe = detail::median(tf);
    if (n_steps > 0 && r.t_nn > 0.0 && std::isfinite(sink)) {
        r.ratio = r.t_fe / r.t_nn;
        r.ratio_defined = true;
    }
    return r;
}

} // namespace fol
