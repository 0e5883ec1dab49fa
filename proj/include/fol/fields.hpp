#pragma once

#include <string>

#include <Eigen/Dense>

#include "fol/error.hpp"
#include "fol/mesh.hpp"

namespace fol {

/// One temperature per mesh node.
struct FullField {
    Eigen::VectorXd values;
};

/// Temperatures on the free dofs only, in dof order.
struct FreeField {
    Eigen::VectorXd values;
};

inline FreeField extract_free(const DofMap& dofs, const FullField& t) {
    if (static_cast<std::size_t>(t.values.size()) != dofs.node_count())
        throw ValidationError("field has " + std::to_string(t.values.size()) + " values, mesh has " +
                              std::to_string(dofs.node_count()) + " nodes");
    FreeField f{Eigen::VectorXd(static_cast<Eigen::Index>(dofs.n_free()))};
    for (std::size_t i = 0; i < dofs.n_free(); ++i) f.values[static_cast<Eigen::Index>(i)] = t.values[dofs.free[i]];
    return f;
}

/// Free values scattered to their nodes, constrained nodes set to the prescribed values.
inline FullField merge_free(const DofMap& dofs, const FreeField& f) {
    if (static_cast<std::size_t>(f.values.size()) != dofs.n_free())
        throw ValidationError("free field has " + std::to_string(f.values.size()) + " values, expected " +
                              std::to_string(dofs.n_free()));
    FullField t{Eigen::VectorXd(static_cast<Eigen::Index>(dofs.node_count()))};
    for (std::size_t i = 0; i < dofs.n_free(); ++i) t.values[dofs.free[i]] = f.values[static_cast<Eigen::Index>(i)];
    for (const auto& [node, value] : dofs.constrained) t.values[node] = value;
    return t;
}

inline FullField apply_dirichlet(const DofMap& dofs, FullField t) {
    for (const auto& [node, value] : dofs.constrained) t.values[node] = value;
    return t;
}

} // namespace fol
