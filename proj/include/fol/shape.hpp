#pragma once

#include <array>
#include <cmath>

#include <Eigen/Dense>

#include "fol/error.hpp"

namespace fol {

using Vec4 = Eigen::Matrix<double, 4, 1>;
using Mat24 = Eigen::Matrix<double, 2, 4>;
using Mat44 = Eigen::Matrix<double, 4, 4>;
using Mat42 = Eigen::Matrix<double, 4, 2>;  // element node coordinates, one row per node

// Bilinear quadrilateral on the reference square [-1,1]^2. Local node order is
// counter-clockwise from (-1,-1).
inline Vec4 shape_values(double xi, double eta) {
    Vec4 n;
    n << 0.25 * (1 - xi) * (1 - eta), 0.25 * (1 + xi) * (1 - eta), 0.25 * (1 + xi) * (1 + eta),
        0.25 * (1 - xi) * (1 + eta);
    return n;
}

/// Row 0: dN/dxi, row 1: dN/deta.
inline Mat24 shape_gradients_ref(double xi, double eta) {
    Mat24 g;
    g << -0.25 * (1 - eta), 0.25 * (1 - eta), 0.25 * (1 + eta), -0.25 * (1 + eta),
        -0.25 * (1 - xi), -0.25 * (1 + xi), 0.25 * (1 + xi), 0.25 * (1 - xi);
    return g;
}

struct QuadratureRule {
    std::array<std::array<double, 2>, 4> points;
    std::array<double, 4> weights;
};

inline QuadratureRule gauss_rule_2x2() {
    const double g = 1.0 / std::sqrt(3.0);
    return {{{{-g, -g}, {g, -g}, {g, g}, {-g, g}}}, {1.0, 1.0, 1.0, 1.0}};
}

inline Eigen::Matrix2d jacobian(const Mat42& coords, double xi, double eta) {
    return shape_gradients_ref(xi, eta) * coords;
}

inline double jacobian_det(const Mat42& coords, double xi, double eta) {
    return jacobian(coords, xi, eta).determinant();
}

struct BMatrix {
    Mat24 B;      ///< physical gradients, row 0 d/dx, row 1 d/dy
    double detJ;
};

inline BMatrix b_matrix(const Mat42& coords, double xi, double eta) {
    const Mat24 dref = shape_gradients_ref(xi, eta);
    const Eigen::Matrix2d J = dref * coords;
    const double det = J.determinant();
    if (std::abs(det) < 1e-14) throw SingularJacobianError("singular element Jacobian");
    return {J.inverse() * dref, det};
}

/// Physical coordinates of a reference point.
inline Eigen::Vector2d map_to_physical(const Mat42& coords, double xi, double eta) {
    return coords.transpose() * shape_values(xi, eta);
}

/// Newton inversion of the isoparametric map; returns false if it does not converge.
inline bool map_to_reference(const Mat42& coords, const Eigen::Vector2d& p, Eigen::Vector2d& ref) {
    ref.setZero();
    for (int it = 0; it < 30; ++it) {
        const Eigen::Vector2d r = map_to_physical(coords, ref.x(), ref.y()) - p;
        if (r.norm() < 1e-14 * (1.0 + p.norm())) return true;
        const Eigen::Matrix2d J = jacobian(coords, ref.x(), ref.y());
        if (std::abs(J.determinant()) < 1e-14) return false;
        // x(xi) linearization: dx = J^T dxi
        ref -= J.transpose().partialPivLu().solve(r);
        if (!ref.allFinite() || ref.cwiseAbs().maxCoeff() > 10.0) return false;
    }
    return (map_to_physical(coords, ref.x(), ref.y()) - p).norm() < 1e-10 * (1.0 + p.norm());
}

} // namespace fol
