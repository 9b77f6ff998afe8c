#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "slowcone/errors.hpp"

// Time propagators e^{-itH} psi for real symmetric sparse H acting on complex
// vectors. Shared by the one-body dynamics and the exact Fock-space oracle.

namespace slowcone {

using cplx = std::complex<double>;
using SparseReal = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SpectralBounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// Gershgorin enclosure of the spectrum of a real symmetric matrix.
inline SpectralBounds gershgorin_bounds(const SparseReal& h) {
    SpectralBounds b{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (int r = 0; r < h.outerSize(); ++r) {
        double diag = 0.0, off = 0.0;
        for (SparseReal::InnerIterator it(h, r); it; ++it) {
            if (it.col() == r)
                diag = it.value();
            else
                off += std::abs(it.value());
        }
        b.lower = std::min(b.lower, diag - off);
        b.upper = std::max(b.upper, diag + off);
    }
    if (h.outerSize() == 0) b = {0.0, 0.0};
    return b;
}

/// Full eigendecomposition h = V diag(E) V^T.
struct SpectralCache {
    Eigen::VectorXd energies;
    Eigen::MatrixXd vectors;

    explicit SpectralCache(const SparseReal& h) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(h), Eigen::ComputeEigenvectors);
        if (es.info() != Eigen::Success) throw ConvergenceError("dense eigensolver failed", 0.0);
        energies = es.eigenvalues();
        vectors = es.eigenvectors();
    }

    Eigen::VectorXcd evolve(const Eigen::VectorXcd& psi, double t) const {
        Eigen::VectorXcd c = vectors.transpose() * psi;
        for (Eigen::Index k = 0; k < c.size(); ++k) c(k) *= std::polar(1.0, -energies(k) * t);
        return vectors * c;
    }

    /// Dense e^{-ith}; used when the same step is applied many times.
    Eigen::MatrixXcd propagator(double t) const {
        Eigen::VectorXcd phases(energies.size());
        for (Eigen::Index k = 0; k < energies.size(); ++k) phases(k) = std::polar(1.0, -energies(k) * t);
        return vectors * phases.asDiagonal() * vectors.transpose();
    }
};

/// Chebyshev expansion of e^{-iHt} psi with Bessel coefficients.
/// Long times are split so that each sub-step spans at most `max_phase`
/// radians of the rescaled spectrum.
inline Eigen::VectorXcd chebyshev_evolve(const SparseReal& h, SpectralBounds bounds, const Eigen::VectorXcd& psi,
                                         double t, double tol, double max_phase = 200.0) {
    if (t == 0.0) return psi;
    const double pad = 1e-2 * std::max(1.0, bounds.upper - bounds.lower);
    const double center = 0.5 * (bounds.upper + bounds.lower);
    const double half = 0.5 * (bounds.upper - bounds.lower) + pad;

    const int substeps = std::max(1, static_cast<int>(std::ceil(half * std::abs(t) / max_phase)));
    const double tau = t / substeps;
    const double x = half * tau;

    // coefficients c_k = (2 - delta_k0) (-i)^k J_k(x), truncated past the
    // Bessel cliff once they fall below tol/100
    std::vector<cplx> coeff;
    const cplx minus_i{0.0, -1.0};
    cplx ipow{1.0, 0.0};
    for (int k = 0;; ++k) {
        const double jk = std::cyl_bessel_j(static_cast<double>(k), std::abs(x));
        const double sign = (x < 0.0 && (k % 2 == 1)) ? -1.0 : 1.0;
        coeff.push_back((k == 0 ? 1.0 : 2.0) * ipow * (sign * jk));
        ipow *= minus_i;
        if (k > std::abs(x) + 2 && std::abs(jk) < 1e-2 * tol) break;
        if (k > 100000) throw ConvergenceError("Chebyshev expansion did not terminate", std::abs(jk));
    }

    auto apply_scaled = [&](const Eigen::VectorXcd& v) -> Eigen::VectorXcd {
        return (h * v - center * v) / half;
    };

    const cplx global_phase = std::polar(1.0, -center * tau);
    Eigen::VectorXcd out = psi;
    for (int s = 0; s < substeps; ++s) {
        Eigen::VectorXcd prev = out;
        Eigen::VectorXcd cur = apply_scaled(prev);
        Eigen::VectorXcd acc = coeff[0] * prev + coeff[1] * cur;
        for (std::size_t k = 2; k < coeff.size(); ++k) {
            Eigen::VectorXcd next = 2.0 * apply_scaled(cur) - prev;
            acc += coeff[k] * next;
            prev.swap(cur);
            cur.swap(next);
        }
        out = global_phase * acc;
    }
    return out;
}

struct KrylovOptions {
    int subspace = 30;
    long max_steps = 200000;
};

/// Adaptive Lanczos propagation. Each accepted sub-step keeps the a
/// posteriori error estimate beta_m |[e^{-i tau T}]_{m,1}| below
/// tol * tau / t, so the total error stays below tol.
inline Eigen::VectorXcd krylov_evolve(const SparseReal& h, const Eigen::VectorXcd& psi, double t, double tol,
                                      const KrylovOptions& opt = {}) {
    if (t == 0.0) return psi;
    const Eigen::Index n = psi.size();
    const int m_max = static_cast<int>(std::min<Eigen::Index>(opt.subspace, n));
    const double direction = t < 0.0 ? -1.0 : 1.0;
    const double total = std::abs(t);

    Eigen::VectorXcd v = psi;
    double done = 0.0;
    double tau = total;
    long steps = 0;
    double last_err = 0.0;

    Eigen::MatrixXcd basis(n, m_max + 1);
    std::vector<double> alpha, beta;

    while (done < total) {
        const double beta0 = v.norm();
        if (beta0 == 0.0) return v;

        basis.col(0) = v / beta0;
        alpha.clear();
        beta.clear();
        int m = 0;
        double beta_next = 0.0;
        bool exhausted = false;
        for (int j = 0; j < m_max; ++j) {
            Eigen::VectorXcd w = h * basis.col(j);
            const double a = std::real(basis.col(j).dot(w));
            w -= a * basis.col(j);
            if (j > 0) w -= beta.back() * basis.col(j - 1);
            for (int pass = 0; pass < 2; ++pass)
                for (int k = 0; k <= j; ++k) w -= basis.col(k).dot(w) * basis.col(k);
            alpha.push_back(a);
            m = j + 1;
            beta_next = w.norm();
            if (beta_next <= 1e-13 * std::max(1.0, std::abs(a))) {
                exhausted = true;
                break;
            }
            if (j + 1 < m_max) beta.push_back(beta_next);
            basis.col(j + 1) = w / beta_next;
        }

        Eigen::MatrixXd tri = Eigen::MatrixXd::Zero(m, m);
        for (int j = 0; j < m; ++j) tri(j, j) = alpha[j];
        for (int j = 0; j + 1 < m; ++j) tri(j, j + 1) = tri(j + 1, j) = beta[j];
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(tri);
        const Eigen::VectorXd theta = es.eigenvalues();
        const Eigen::MatrixXd q = es.eigenvectors();

        auto small_exp = [&](double step) {
            Eigen::VectorXcd c(m);
            for (int k = 0; k < m; ++k) c(k) = std::polar(1.0, -direction * theta(k) * step) * q(0, k);
            return Eigen::VectorXcd(q.cast<cplx>() * c);
        };

        tau = std::min(tau, total - done);
        Eigen::VectorXcd y;
        while (true) {
            y = small_exp(tau);
            const double err = exhausted ? 0.0 : beta0 * beta_next * std::abs(y(m - 1));
            const double allowed = tol * tau / total;
            last_err = err;
            if (err <= allowed) {
                const double grow = err > 0.0 ? 0.9 * std::pow(allowed / err, 1.0 / m) : 2.0;
                v = beta0 * (basis.leftCols(m) * y);
                done += tau;
                if (total - done < 1e-14 * total) done = total;
                tau = std::min(tau * std::clamp(grow, 1.0, 2.0), total - done);
                break;
            }
            tau *= std::clamp(0.9 * std::pow(allowed / err, 1.0 / m), 0.1, 0.9);
            if (++steps > opt.max_steps) throw ConvergenceError("Krylov propagation exceeded its step budget", last_err);
        }
        if (++steps > opt.max_steps) throw ConvergenceError("Krylov propagation exceeded its step budget", last_err);
    }
    return v;
}

} // namespace slowcone
