#pragma once

#include <algorithm>
#include <cmath>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fol/error.hpp"
#include "fol/mesh.hpp"
#include "fol/shape.hpp"

namespace fol {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Nodal thermal conductivity k_i > 0, W/(m K).
struct ConductivityField {
    Eigen::VectorXd k;
};

struct MaterialParams {
    double rho = 10.0;  ///< kg/m^3
    double c = 1.0;     ///< J/(kg K)
    double rho_c() const { return rho * c; }
};

struct Circle {
    double cx, cy, r;
};

/// Circular low-conductivity inclusions in a uniform background.
struct InclusionSpec {
    double background = 1.0;
    double inclusion = 0.1;
    std::vector<Circle> circles{{0.3, 0.3, 0.15}, {0.7, 0.6, 0.18}, {0.3, 0.8, 0.1}};
};

inline ConductivityField homogeneous_conductivity(const Mesh& m, double k = 1.0) {
    if (!(k > 0.0)) throw ValidationError("conductivity must be positive");
    return {Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m.node_count()), k)};
}

inline ConductivityField inclusion_conductivity(const Mesh& m, const InclusionSpec& spec = {}) {
    if (!(spec.background > 0.0) || !(spec.inclusion > 0.0)) throw ValidationError("conductivity must be positive");
    ConductivityField f{Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m.node_count()), spec.background)};
    for (std::size_t i = 0; i < m.node_count(); ++i) {
        const Point& p = m.nodes[i];
        for (const auto& c : spec.circles)
            if (std::hypot(p.x - c.cx, p.y - c.cy) <= c.r) f.k[static_cast<Eigen::Index>(i)] = spec.inclusion;
    }
    return f;
}

inline void require_positive(const ConductivityField& k) {
    for (Eigen::Index i = 0; i < k.k.size(); ++i)
        if (!(k.k[i] > 0.0) || !std::isfinite(k.k[i]))
            throw ValidationError("conductivity at node " + std::to_string(i) + " is not a positive finite value");
}

/// Consistent mass matrix of one element.
inline Mat44 element_mass(const Mat42& coords, const MaterialParams& mat, const QuadratureRule& rule = gauss_rule_2x2()) {
    Mat44 me = Mat44::Zero();
    for (std::size_t j = 0; j < rule.points.size(); ++j) {
        const auto [xi, eta] = rule.points[j];
        const BMatrix bm = b_matrix(coords, xi, eta);
        const Vec4 n = shape_values(xi, eta);
        me.noalias() += (n * n.transpose()) * (mat.rho_c() * bm.detJ * rule.weights[j]);
    }
    return me;
}

/// Element stiffness with conductivity interpolated from nodal values at each Gauss point.
inline Mat44 element_stiffness(const Mat42& coords, const Vec4& k_nodal, const QuadratureRule& rule = gauss_rule_2x2()) {
    Mat44 ke = Mat44::Zero();
    for (std::size_t j = 0; j < rule.points.size(); ++j) {
        const auto [xi, eta] = rule.points[j];
        const BMatrix bm = b_matrix(coords, xi, eta);
        const double k = shape_values(xi, eta).dot(k_nodal);
        ke.noalias() += (bm.B.transpose() * bm.B) * (k * bm.detJ * rule.weights[j]);
    }
    return ke;
}

struct SystemMatrices {
    SparseMatrix M;
    SparseMatrix K;
};

namespace detail {

using Triplet = std::tuple<int, int, double>;

/// Sorts contributions (column, row, value) and sums duplicates in that order, so the
/// result does not depend on the order in which elements were visited.
inline SparseMatrix sum_triplets(std::vector<Triplet> t, Eigen::Index rows, Eigen::Index cols) {
    std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
        if (std::get<1>(a) != std::get<1>(b)) return std::get<1>(a) < std::get<1>(b);
        if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) < std::get<0>(b);
        return std::get<2>(a) < std::get<2>(b);
    });
    std::vector<Eigen::Triplet<double>> unique;
    unique.reserve(t.size());
    for (std::size_t i = 0; i < t.size();) {
        const auto [r, c, v0] = t[i];
        double v = v0;
        std::size_t j = i + 1;
        for (; j < t.size() && std::get<0>(t[j]) == r && std::get<1>(t[j]) == c; ++j) v += std::get<2>(t[j]);
        unique.emplace_back(r, c, v);
        i = j;
    }
    SparseMatrix s(rows, cols);
    s.setFromTriplets(unique.begin(), unique.end());
    s.makeCompressed();
    return s;
}

} // namespace detail

inline SystemMatrices assemble(const Mesh& m, const ConductivityField& k, const MaterialParams& mat) {
    if (static_cast<std::size_t>(k.k.size()) != m.node_count())
        throw ValidationError("conductivity field has " + std::to_string(k.k.size()) + " values for " +
                              std::to_string(m.node_count()) + " nodes");
    require_positive(k);
    if (!(mat.rho > 0.0) || !(mat.c > 0.0)) throw ValidationError("density and heat capacity must be positive");
    const auto rule = gauss_rule_2x2();
    std::vector<detail::Triplet> tm, tk;
    tm.reserve(16 * m.element_count());
    tk.reserve(16 * m.element_count());
    for (std::size_t e = 0; e < m.element_count(); ++e) {
        const Mat42 c = m.element_coords(e);
        const auto& q = m.elems[e];
        Vec4 ke_nodal;
        for (int a = 0; a < 4; ++a) ke_nodal[a] = k.k[q[a]];
        const Mat44 me = element_mass(c, mat, rule);
        const Mat44 ke = element_stiffness(c, ke_nodal, rule);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) {
                tm.emplace_back(q[a], q[b], me(a, b));
                tk.emplace_back(q[a], q[b], ke(a, b));
            }
    }
    const auto n = static_cast<Eigen::Index>(m.node_count());
    return {detail::sum_triplets(std::move(tm), n, n), detail::sum_triplets(std::move(tk), n, n)};
}

/// Time-stepping operators on the free dofs with Dirichlet values eliminated.
struct ReducedSystem {
    SparseMatrix A_ff;          ///< M_ff + alpha dt K_ff
    SparseMatrix B_ff;          ///< M_ff - (1 - alpha) dt K_ff
    Eigen::VectorXd rhs_const;  ///< -dt K_fd T_d
    double dt = 0.0;
    double alpha = 1.0;

    Eigen::Index n_free() const { return A_ff.rows(); }
};

inline bool is_supported_alpha(double alpha) { return alpha == 0.0 || alpha == 0.5 || alpha == 1.0; }

/// Splits a global matrix into its free x free block and the free x constrained block applied to `td`.
inline std::pair<SparseMatrix, Eigen::VectorXd> partition(const SparseMatrix& a, const DofMap& dofs, const Eigen::VectorXd& td) {
    const auto nf = static_cast<Eigen::Index>(dofs.n_free());
    std::vector<Eigen::Triplet<double>> ff;
    Eigen::VectorXd fd = Eigen::VectorXd::Zero(nf);
    for (Eigen::Index col = 0; col < a.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
            const auto rs = dofs.node_to_slot[static_cast<std::size_t>(it.row())];
            const auto cs = dofs.node_to_slot[static_cast<std::size_t>(it.col())];
            if (!rs.free) continue;
            if (cs.free)
                ff.emplace_back(rs.index, cs.index, it.value());
            else
                fd[rs.index] += it.value() * td[cs.index];
        }
    SparseMatrix s(nf, nf);
    s.setFromTriplets(ff.begin(), ff.end());
    s.makeCompressed();
    return {std::move(s), std::move(fd)};
}

inline ReducedSystem reduce_system(const SystemMatrices& sys, const DofMap& dofs, double dt, double alpha) {
    if (!(dt > 0.0)) throw ValidationError("time step must be positive");
    if (!is_supported_alpha(alpha)) throw ValidationError("alpha must be 0, 0.5 or 1");
    if (static_cast<std::size_t>(sys.M.rows()) != dofs.node_count()) throw ValidationError("dof map does not match system size");
    const Eigen::VectorXd td = dofs.constrained_values();
    auto [m_ff, m_fd] = partition(sys.M, dofs, td);
    auto [k_ff, k_fd] = partition(sys.K, dofs, td);
    ReducedSystem rs;
    rs.A_ff = m_ff + (alpha * dt) * k_ff;
    rs.B_ff = m_ff - ((1.0 - alpha) * dt) * k_ff;
    rs.A_ff.makeCompressed();
    rs.B_ff.makeCompressed();
    // (M_fd - (1-a) dt K_fd) T_d - (M_fd + a dt K_fd) T_d
    rs.rhs_const = -dt * k_fd;
    rs.dt = dt;
    rs.alpha = alpha;
    return rs;
}

} // namespace fol
