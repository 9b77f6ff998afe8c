#pragma once

#include <Eigen/Dense>

#include "slowcone/lattice.hpp"
#include "slowcone/wavefunction.hpp"

namespace slowcone {

/// Tr(q M q G) for q = 1 - |phi><phi| and M the indicator of `region`,
/// via the rank-one expansion of q G q (O(n^2), no dense products).
inline double projected_trace(const Eigen::MatrixXcd& g, const Eigen::VectorXcd& phi, const std::vector<char>& mask) {
    const Eigen::VectorXcd g_phi = g * phi;
    const Eigen::RowVectorXcd phi_g = phi.adjoint() * g;
    const cplx c = phi.dot(g_phi);
    cplx acc{};
    for (Eigen::Index x = 0; x < phi.size(); ++x) {
        if (!mask[x]) continue;
        acc += g(x, x) - phi(x) * phi_g(x) - g_phi(x) * std::conj(phi(x)) + c * std::norm(phi(x));
    }
    return acc.real();
}

/// <phi| G |phi>
inline double condensate_weight(const Eigen::MatrixXcd& g, const Eigen::VectorXcd& phi) {
    return std::real(phi.dot(g * phi));
}

} // namespace slowcone
