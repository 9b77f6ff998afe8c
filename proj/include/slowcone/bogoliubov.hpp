#pragma once

#include <algorithm>
#include <cmath>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "slowcone/errors.hpp"
#include "slowcone/hartree.hpp"
#include "slowcone/projection.hpp"

// Quadratic (Bogoliubov) fluctuation dynamics around a Hartree trajectory,
// written with full-space a-operators:
//   a_x(t) = sum_y U_xy a_y + W_xy a*_y,
//   i d/dt [U; conj W] = [[A, B], [-conj B, -conj A]] [U; conj W].

namespace slowcone {

inline constexpr int default_bogoliubov_site_cap = 2048;

/// H = sum A_xy a*_x a_y + (1/2) sum (B_xy a*_x a*_y + h.c.)
struct BdgGenerator {
    Eigen::MatrixXcd A;
    Eigen::MatrixXcd B;
    bool projected = true;
};

/// Projected: A = h + U|phi|^2 + U q|phi|^2 q,  B = U q diag(phi^2) q^T.
/// Unprojected: A = h + 2U|phi|^2,  B = U diag(phi^2).
/// B pairs creation operators a*(q e_x), hence q on both indices.
inline BdgGenerator bdg_generator(const WaveFunction& phi, const OneBodyHamiltonian& h, double U,
                                  bool projected = true) {
    const int n = h.site_count();
    if (phi.size() != n) throw std::invalid_argument("bdg_generator: state is not on this box");
    const auto& p = phi.amplitudes();

    BdgGenerator g;
    g.projected = projected;
    g.A = Eigen::MatrixXd(h.matrix()).cast<cplx>();
    g.B = Eigen::MatrixXcd::Zero(n, n);
    if (U == 0.0) return g;

    Eigen::VectorXd dens(n);
    for (int x = 0; x < n; ++x) dens(x) = std::norm(p(x));

    if (!projected) {
        for (int x = 0; x < n; ++x) {
            g.A(x, x) += 2.0 * U * dens(x);
            g.B(x, x) = U * p(x) * p(x);
        }
        return g;
    }

    const double c = dens.squaredNorm(); // sum |phi|^4
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            // (q D q)_xy with D = diag|phi|^2
            const cplx qdq = -p(x) * std::conj(p(y)) * (dens(y) + dens(x) - c);
            g.A(x, y) += U * qdq;
            // (q P q^T)_xy with P = diag(phi^2)
            g.B(x, y) = U * p(x) * p(y) * (c - dens(y) - dens(x));
        }
    for (int x = 0; x < n; ++x) {
        g.A(x, x) += 2.0 * U * dens(x);
        g.B(x, x) += U * p(x) * p(x);
    }
    return g;
}

/// Quasi-free state reached from the fluctuation vacuum. Gamma(x,y) = <a*_y a_x>.
class QuasiFreeState {
public:
    QuasiFreeState(double t, Eigen::MatrixXcd u, Eigen::MatrixXcd w) : t_(t), u_(std::move(u)), w_(std::move(w)) {}

    static QuasiFreeState vacuum(int n) {
        return {0.0, Eigen::MatrixXcd::Identity(n, n), Eigen::MatrixXcd::Zero(n, n)};
    }

    double time() const { return t_; }
    const Eigen::MatrixXcd& u() const { return u_; }
    const Eigen::MatrixXcd& w() const { return w_; }
    int size() const { return static_cast<int>(u_.rows()); }

    Eigen::MatrixXcd gamma() const { return w_ * w_.adjoint(); }
    Eigen::MatrixXcd pairing() const { return u_ * w_.transpose(); }

    /// Tr Gamma = sum |W_xy|^2
    double total_fluctuations() const { return w_.squaredNorm(); }

    double ccr_defect() const {
        const Eigen::MatrixXcd d = u_ * u_.adjoint() - w_ * w_.adjoint() - Eigen::MatrixXcd::Identity(size(), size());
        return d.cwiseAbs().maxCoeff();
    }

    /// CCR defect measured against the size of the blocks; roundoff in
    /// U U^* - W W^* alone is ~1e-16 (1 + Tr Gamma).
    double relative_ccr_defect() const { return ccr_defect() / (1.0 + total_fluctuations()); }

    double pairing_defect() const {
        const Eigen::MatrixXcd d = u_ * w_.transpose() - w_ * u_.transpose();
        return d.cwiseAbs().maxCoeff();
    }

    double min_gamma_eigenvalue() const {
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(gamma(), Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    }

private:
    double t_;
    Eigen::MatrixXcd u_;
    Eigen::MatrixXcd w_;
};

/// Tr(q 1_region q Gamma) with q = 1 - |phi><phi|.
inline double local_fluctuation_number(const QuasiFreeState& state, const WaveFunction& phi, const Region& region) {
    if (phi.size() != state.size() || static_cast<int>(region.mask.size()) != state.size())
        throw std::invalid_argument("local_fluctuation_number: region or state on a different box");
    return projected_trace(state.gamma(), phi.amplitudes(), region.mask);
}

struct BogoliubovOptions {
    bool projected = true;
    int sample_every = 1;
    /// Abort bound on the relative CCR defect.
    double ccr_tol = 1e-6;
    int site_cap = default_bogoliubov_site_cap;
};

/// Condensate at time t, linearly interpolated between stored Hartree
/// samples and renormalized.
inline WaveFunction interpolate_condensate(const HartreeTrajectory& traj, double t) {
    const auto& ts = traj.times;
    if (t <= ts.front()) return traj.states.front();
    if (t >= ts.back()) return traj.states.back();
    const auto hi = static_cast<std::size_t>(std::upper_bound(ts.begin(), ts.end(), t) - ts.begin());
    const std::size_t lo = hi - 1;
    const double s = (t - ts[lo]) / (ts[hi] - ts[lo]);
    const Eigen::VectorXcd mix = (1.0 - s) * traj.states[lo].amplitudes() + s * traj.states[hi].amplitudes();
    return WaveFunction(traj.states[lo].box(), mix).normalized();
}

/// Implicit-midpoint (Cayley) stepping of the block system, generator taken
/// at the step midpoint. The Cayley map of a sigma_3-Hermitian generator is
/// exactly symplectic, so the CCR and pairing symmetry are kept to roundoff.
/// `visit(state, phi)` sees the vacuum at t=0, every `sample_every` steps,
/// and the final state; a visitor returning bool stops the run on false.
template <class Visitor>
void evolve_fluctuations(const HartreeTrajectory& traj, double dt, const BogoliubovOptions& opt, Visitor&& visit) {
    auto call = [&](const QuasiFreeState& s, const WaveFunction& phi) -> bool {
        if constexpr (std::is_same_v<std::invoke_result_t<Visitor&, const QuasiFreeState&, const WaveFunction&>, bool>)
            return visit(s, phi);
        else {
            visit(s, phi);
            return true;
        }
    };
    const int n = traj.h.site_count();
    if (n > opt.site_cap)
        throw CapacityError("Bogoliubov blocks need " + std::to_string(n) + " sites <= cap " + std::to_string(opt.site_cap));
    if (!(dt > 0.0)) throw std::invalid_argument("evolve_fluctuations: dt must be > 0");
    if (dt > traj.dt * (1.0 + 1e-12)) throw std::invalid_argument("evolve_fluctuations: dt must not exceed the Hartree dt");
    if (opt.sample_every < 1) throw std::invalid_argument("evolve_fluctuations: sample_every must be >= 1");

    const double t_final = traj.t_final();
    const long steps = t_final > 0.0 ? static_cast<long>(std::ceil(t_final / dt - 1e-9)) : 0;
    const double tau = steps > 0 ? t_final / static_cast<double>(steps) : 0.0;

    Eigen::MatrixXcd z(2 * n, n);
    z.topRows(n).setIdentity();
    z.bottomRows(n).setZero();
    if (!call(QuasiFreeState::vacuum(n), traj.initial())) return;

    Eigen::MatrixXcd g(2 * n, 2 * n);
    const cplx half_step{0.0, 0.5 * tau};
    for (long s = 1; s <= steps; ++s) {
        const double t_mid = (static_cast<double>(s) - 0.5) * tau;
        const auto gen = bdg_generator(interpolate_condensate(traj, t_mid), traj.h, traj.U, opt.projected);
        g.topLeftCorner(n, n) = gen.A;
        g.topRightCorner(n, n) = gen.B;
        g.bottomLeftCorner(n, n) = -gen.B.conjugate();
        g.bottomRightCorner(n, n) = -gen.A.conjugate();

        const Eigen::MatrixXcd rhs = z - half_step * (g * z);
        g *= half_step;
        g.diagonal().array() += 1.0;
        z = g.partialPivLu().solve(rhs);

        if (s % opt.sample_every == 0 || s == steps) {
            const double t = s == steps ? t_final : static_cast<double>(s) * tau;
            QuasiFreeState state(t, z.topRows(n), z.bottomRows(n).conjugate());
            const double defect = state.relative_ccr_defect();
            if (defect > opt.ccr_tol) throw ConservationError("CCR", s, defect, opt.ccr_tol);
            if (!call(state, interpolate_condensate(traj, t))) return;
        }
    }
}

struct BogoliubovTrajectory {
    std::vector<QuasiFreeState> states;
    std::vector<WaveFunction> condensate;

    std::vector<double> times() const {
        std::vector<double> t;
        for (const auto& s : states) t.push_back(s.time());
        return t;
    }
};

/// Stores every sampled state; memory is 2 n^2 complex numbers per sample.
inline BogoliubovTrajectory evolve_fluctuations(const HartreeTrajectory& traj, double dt,
                                                const BogoliubovOptions& opt = {}) {
    BogoliubovTrajectory out;
    evolve_fluctuations(traj, dt, opt, [&](const QuasiFreeState& s, const WaveFunction& phi) {
        out.states.push_back(s);
        out.condensate.push_back(phi);
    });
    return out;
}

} // namespace slowcone
