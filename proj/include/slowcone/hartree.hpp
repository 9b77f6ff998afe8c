#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "slowcone/errors.hpp"
#include "slowcone/lattice.hpp"
#include "slowcone/onebody.hpp"
#include "slowcone/wavefunction.hpp"

namespace slowcone {

/// E(phi) = <phi, h phi> + (U/2) sum_x |phi(x)|^4, conserved by the Hartree flow.
inline double hartree_energy(const WaveFunction& phi, const OneBodyHamiltonian& h, double U) {
    if (phi.size() != h.site_count()) throw std::invalid_argument("hartree_energy: state is not on this box");
    const auto& a = phi.amplitudes();
    double quartic = 0.0;
    for (Eigen::Index x = 0; x < a.size(); ++x) quartic += std::norm(a(x)) * std::norm(a(x));
    return h.expectation(a) + 0.5 * U * quartic;
}

/// mu = (1/2) (sum_x |phi(x)|^2)(sum_y |phi(y)|^2); 1/2 for normalized phi.
inline double mu_t(const WaveFunction& phi) {
    const double n2 = phi.norm() * phi.norm();
    return 0.5 * n2 * n2;
}

struct HartreeOptions {
    Method method = Method::automatic;
    double tol = 1e-13;
    /// Relative drift bounds; exceeding either aborts the run.
    double norm_tol = 1e-9;
    double energy_tol = 1e-3;
};

struct HartreeTrajectory {
    OneBodyHamiltonian h;
    double U = 0.0;
    double dt = 0.0;
    std::vector<double> times;
    std::vector<WaveFunction> states;
    /// Conserved-quantity log at every step (index = step).
    std::vector<double> step_times;
    std::vector<double> norms;
    std::vector<double> energies;

    const WaveFunction& initial() const { return states.front(); }
    const WaveFunction& final() const { return states.back(); }
    double t_final() const { return times.empty() ? 0.0 : times.back(); }

    double max_norm_drift() const {
        double d = 0.0;
        for (double n : norms) d = std::max(d, std::abs(n - norms.front()) / norms.front());
        return d;
    }

    double max_energy_drift() const {
        const double scale = std::max(std::abs(energies.front()), 1e-12);
        double d = 0.0;
        for (double e : energies) d = std::max(d, std::abs(e - energies.front()) / scale);
        return d;
    }
};

namespace detail {

inline void nonlinear_phase(Eigen::VectorXcd& phi, double U, double tau) {
    for (Eigen::Index x = 0; x < phi.size(); ++x) phi(x) *= std::polar(1.0, -tau * U * std::norm(phi(x)));
}

} // namespace detail

/// Integrates i d/dt phi = (h + U |phi|^2) phi by Strang splitting: exact
/// half-step nonlinear phase, exact linear step, half-step phase. Both
/// sub-steps are unitary. Samples every `sample_every` steps and at t_final.
inline HartreeTrajectory hartree_evolve(const OneBodyHamiltonian& h, double U, const WaveFunction& phi0, double t_final,
                                        double dt, int sample_every = 1, const HartreeOptions& opt = {}) {
    if (phi0.size() != h.site_count()) throw std::invalid_argument("hartree_evolve: state is not on this box");
    if (std::abs(phi0.norm() - 1.0) > 1e-10) throw std::invalid_argument("hartree_evolve: initial state must be normalized");
    if (!(dt > 0.0)) throw std::invalid_argument("hartree_evolve: dt must be > 0");
    if (t_final < 0.0) throw std::invalid_argument("hartree_evolve: t_final must be >= 0");
    if (sample_every < 1) throw std::invalid_argument("hartree_evolve: sample_every must be >= 1");

    HartreeTrajectory traj{h, U, dt, {}, {}, {}, {}, {}};
    auto full_steps = static_cast<long>(std::floor(t_final / dt + 1e-9));
    double remainder = t_final - static_cast<double>(full_steps) * dt;
    if (remainder < 1e-12 * dt) remainder = 0.0;

    const StepPropagator linear(h, dt, opt.method, opt.tol);
    std::optional<StepPropagator> tail;
    if (remainder > 0.0) tail.emplace(h, remainder, opt.method, opt.tol);

    Eigen::VectorXcd phi = phi0.amplitudes();
    const double n0 = phi.norm();
    const double e0 = hartree_energy(phi0, h, U);
    const double e_scale = std::max(std::abs(e0), 1e-12);

    auto log_step = [&](long step, double t) {
        const WaveFunction w(phi0.box(), phi);
        const double n = w.norm();
        const double e = hartree_energy(w, h, U);
        traj.step_times.push_back(t);
        traj.norms.push_back(n);
        traj.energies.push_back(e);
        if (std::abs(n - n0) / n0 > opt.norm_tol) throw ConservationError("norm", step, std::abs(n - n0) / n0, opt.norm_tol);
        if (std::abs(e - e0) / e_scale > opt.energy_tol)
            throw ConservationError("energy", step, std::abs(e - e0) / e_scale, opt.energy_tol);
    };

    traj.times.push_back(0.0);
    traj.states.push_back(phi0);
    log_step(0, 0.0);

    auto strang = [&](const StepPropagator& p, double tau) {
        detail::nonlinear_phase(phi, U, 0.5 * tau);
        phi = p.step(phi);
        detail::nonlinear_phase(phi, U, 0.5 * tau);
    };

    for (long s = 1; s <= full_steps; ++s) {
        strang(linear, dt);
        const double t = static_cast<double>(s) * dt;
        log_step(s, t);
        if (s % sample_every == 0 || (s == full_steps && remainder == 0.0)) {
            traj.times.push_back(t);
            traj.states.emplace_back(phi0.box(), phi);
        }
    }
    if (remainder > 0.0) {
        strang(*tail, remainder);
        log_step(full_steps + 1, t_final);
        traj.times.push_back(t_final);
        traj.states.emplace_back(phi0.box(), phi);
    }
    return traj;
}

/// Mass inside B_r along a trajectory, compared with exp(-M rho / eps).
struct C2Report {
    int r = 0;
    int R = 0;
    int rho = 0;
    double eps = 0.0;
    double M = 0.0;
    std::vector<double> times;
    std::vector<double> mass_in;
    std::vector<double> mass_out;
    double peak = 0.0;
    double threshold = 0.0;
    bool pass = false;
    bool clipped = false;
};

inline C2Report c2_scan(const HartreeTrajectory& traj, int r, int R, double eps, double M, Norm norm = Norm::l1) {
    if (r < 0) throw std::invalid_argument("c2_scan: r must be >= 0");
    if (R < 2 * r) throw std::invalid_argument("c2_scan: R >= 2r violated");
    if (!(eps > 0.0)) throw std::invalid_argument("c2_scan: eps must be > 0");
    const auto& box = traj.h.box();
    const double horizon = static_cast<double>(R - r) / eps;
    if (traj.t_final() < horizon * (1.0 - 1e-12))
        throw std::invalid_argument("c2_scan: trajectory ends at t=" + std::to_string(traj.t_final()) +
                                    " before the horizon (R-r)/eps=" + std::to_string(horizon));
    const Region outer = ball_region(box, R, norm);
    if (!traj.initial().vanishes_on(outer)) throw std::invalid_argument("c2_scan: initial state has support in B_R");

    const Region inner = ball_region(box, r, norm);
    C2Report rep;
    rep.r = r;
    rep.R = R;
    rep.rho = R - r;
    rep.eps = eps;
    rep.M = M;
    rep.clipped = outer.clipped;
    rep.threshold = std::exp(-M * rep.rho / eps);
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        if (traj.times[k] > horizon * (1.0 + 1e-12)) break;
        const auto& s = traj.states[k];
        const double in = s.mass_in(inner);
        rep.times.push_back(traj.times[k]);
        rep.mass_in.push_back(in);
        rep.mass_out.push_back(s.mass_in(complement_region(inner)));
        rep.peak = std::max(rep.peak, in);
    }
    rep.pass = rep.peak < rep.threshold;
    return rep;
}

} // namespace slowcone
