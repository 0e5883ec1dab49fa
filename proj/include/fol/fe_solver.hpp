#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "fol/error.hpp"
#include "fol/fem.hpp"
#include "fol/fields.hpp"

namespace fol {

struct SolveStats {
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradient. Converged when ||Ax - b|| <= tol ||b||
/// for the true (recomputed) residual. `x` carries the initial guess.
inline SolveStats pcg_solve(const SparseMatrix& a, const Eigen::VectorXd& b, Eigen::VectorXd& x, double tol = 1e-12,
                            int max_iterations = -1) {
    const Eigen::Index n = b.size();
    if (a.rows() != n || a.cols() != n) throw ValidationError("linear system dimension mismatch");
    if (!(tol > 0.0)) throw ValidationError("solver tolerance must be positive");
    if (x.size() != n) x = Eigen::VectorXd::Zero(n);
    if (max_iterations < 0) max_iterations = static_cast<int>(std::max<Eigen::Index>(10 * n, 10));
    const double bnorm = b.norm();
    if (n == 0 || bnorm == 0.0) {
        x.setZero();
        return {0, 0.0};
    }
    const Eigen::VectorXd inv_diag = a.diagonal().cwiseInverse();
    if (!inv_diag.allFinite() || (a.diagonal().array() <= 0.0).any())
        throw NumericalError("operator has a non-positive diagonal; not SPD");

    SolveStats st;
    Eigen::VectorXd r = b - a * x;
    double true_res = r.norm();
    while (true) {
        if (true_res <= tol * bnorm) {
            st.relative_residual = true_res / bnorm;
            return st;
        }
        if (st.iterations >= max_iterations) break;
        // one CG cycle from the current iterate; restarts refresh the residual
        Eigen::VectorXd z = inv_diag.cwiseProduct(r);
        Eigen::VectorXd p = z;
        double rz = r.dot(z);
        while (st.iterations < max_iterations) {
            const Eigen::VectorXd q = a * p;
            const double pq = p.dot(q);
            if (!(pq > 0.0)) throw NumericalError("conjugate gradient breakdown: operator is not positive definite");
            const double step = rz / pq;
            x.noalias() += step * p;
            r.noalias() -= step * q;
            ++st.iterations;
            if (r.norm() <= tol * bnorm) break;
            z = inv_diag.cwiseProduct(r);
            const double rz_next = r.dot(z);
            p = z + (rz_next / rz) * p;
            rz = rz_next;
        }
        r = b - a * x;
        true_res = r.norm();
    }
    throw NumericalError("conjugate gradient did not converge in " + std::to_string(max_iterations) +
                         " iterations (relative residual " + std::to_string(true_res / bnorm) + ")");
}

inline Eigen::VectorXd linear_solve_spd(const SparseMatrix& a, const Eigen::VectorXd& b, double tol = 1e-12) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    pcg_solve(a, b, x, tol);
    return x;
}

/// Dense Cholesky; debugging aid for small systems.
inline Eigen::VectorXd linear_solve_dense(const SparseMatrix& a, const Eigen::VectorXd& b) {
    if (a.rows() > 500) throw ValidationError("dense fallback is limited to 500 unknowns");
    const Eigen::MatrixXd dense(a);
    Eigen::LLT<Eigen::MatrixXd> llt(dense);
    if (llt.info() != Eigen::Success) throw NumericalError("dense Cholesky failed: operator is not SPD");
    return llt.solve(b);
}

/// One implicit step: A_ff T_f^{n+1} = B_ff T_f^n + rhs_const.
inline FullField step_fe(const ReducedSystem& rs, const DofMap& dofs, const FullField& t_n, double tol = 1e-12) {
    const FreeField f = extract_free(dofs, t_n);
    const Eigen::VectorXd rhs = rs.B_ff * f.values + rs.rhs_const;
    Eigen::VectorXd x = f.values;  // warm start from the current state
    pcg_solve(rs.A_ff, rhs, x, tol);
    return merge_free(dofs, FreeField{std::move(x)});
}

struct Trajectory {
    std::vector<FullField> fields;
    double dt = 0.0;
};

/// Autoregressive march of any one-step map FullField -> FullField.
template <typename Stepper>
Trajectory march(Stepper&& step, const FullField& t0, int n_steps, double dt) {
    if (n_steps < 0) throw ValidationError("step count must be non-negative");
    Trajectory tr;
    tr.dt = dt;
    tr.fields.reserve(static_cast<std::size_t>(n_steps) + 1);
    tr.fields.push_back(t0);
    for (int s = 0; s < n_steps; ++s) tr.fields.push_back(step(tr.fields.back()));
    return tr;
}

inline Trajectory solve_transient(const ReducedSystem& rs, const DofMap& dofs, const FullField& t0, int n_steps) {
    if (static_cast<std::size_t>(t0.values.size()) != dofs.node_count()) throw ValidationError("initial field does not match mesh");
    return march([&](const FullField& t) { return step_fe(rs, dofs, t); }, t0, n_steps, rs.dt);
}

/// K_ff T_f = -K_fd T_d.
inline FullField steady_state(const SystemMatrices& sys, const DofMap& dofs, double tol = 1e-14) {
    if (dofs.n_constrained() == 0) throw NumericalError("steady state is singular without Dirichlet dofs");
    auto [k_ff, k_fd] = partition(sys.K, dofs, dofs.constrained_values());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dofs.n_free()));
    const Eigen::VectorXd rhs = -k_fd;
    if (dofs.n_free() > 0) pcg_solve(k_ff, rhs, x, tol);
    return merge_free(dofs, FreeField{std::move(x)});
}

/// Discrete heat flow into the domain through a node set: sum of (K T)_i over the set.
inline double reaction_flux(const SystemMatrices& sys, const FullField& t, const std::vector<int>& nodes) {
    const Eigen::VectorXd kt = sys.K * t.values;
    double s = 0.0;
    for (int n : nodes) s += kt[n];
    return s;
}

inline double m_norm(const SparseMatrix& m, const Eigen::VectorXd& v) { return std::sqrt(v.dot(m * v)); }

} // namespace fol
