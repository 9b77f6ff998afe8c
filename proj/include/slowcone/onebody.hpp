#pragma once

#include <cmath>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <json.hpp>

#include "slowcone/disorder.hpp"
#include "slowcone/lattice.hpp"
#include "slowcone/propagators.hpp"
#include "slowcone/stats.hpp"
#include "slowcone/wavefunction.hpp"

namespace slowcone {

enum class Method { automatic, eigen, chebyshev, krylov };

inline std::string to_string(Method m) {
    switch (m) {
    case Method::eigen: return "eigen";
    case Method::chebyshev: return "chebyshev";
    case Method::krylov: return "krylov";
    default: return "auto";
    }
}

inline Method parse_method(const std::string& s) {
    if (s == "auto") return Method::automatic;
    if (s == "eigen") return Method::eigen;
    if (s == "chebyshev") return Method::chebyshev;
    if (s == "krylov") return Method::krylov;
    throw std::invalid_argument("unknown propagation method '" + s + "'");
}

inline constexpr int default_spectral_cap = 4096;

/// h = -Laplacian + lambda v with the hopping convention
///   h(x,y) = -1 for x~y,  h(x,x) = lambda v(x),  0 otherwise
/// (the 2d diagonal of the Laplacian is absorbed into the energy zero).
class OneBodyHamiltonian {
public:
    OneBodyHamiltonian(Potential potential, double lambda, int spectral_cap = default_spectral_cap)
        : box_(potential.box), potential_(std::move(potential)), lambda_(lambda), spectral_cap_(spectral_cap),
          slot_(std::make_shared<Slot>()) {
        const int n = box_->site_count();
        std::vector<Eigen::Triplet<double>> entries;
        entries.reserve(n + 2 * box_->edge_count());
        for (int x = 0; x < n; ++x) {
            entries.emplace_back(x, x, lambda_ * potential_[x]);
            for (int y : box_->neighbors(x)) entries.emplace_back(x, y, -1.0);
        }
        matrix_.resize(n, n);
        matrix_.setFromTriplets(entries.begin(), entries.end());
        bounds_ = gershgorin_bounds(matrix_);
    }

    const BoxPtr& box() const { return box_; }
    const Potential& potential() const { return potential_; }
    double lambda() const { return lambda_; }
    const SparseReal& matrix() const { return matrix_; }
    SpectralBounds bounds() const { return bounds_; }
    int site_count() const { return box_->site_count(); }

    bool spectral_cache_feasible() const { return site_count() <= spectral_cap_; }

    /// Eigendecomposition, computed once on first use and shared by copies.
    const SpectralCache& spectrum() const {
        if (!spectral_cache_feasible())
            throw CapacityError("spectral cache needs " + std::to_string(site_count()) + " sites <= cap " +
                                std::to_string(spectral_cap_));
        std::call_once(slot_->once, [&] { slot_->cache = std::make_unique<SpectralCache>(matrix_); });
        return *slot_->cache;
    }

    Eigen::VectorXcd apply(const Eigen::VectorXcd& v) const { return matrix_ * v; }

    /// <psi, h psi>
    double expectation(const Eigen::VectorXcd& psi) const { return std::real(psi.dot(matrix_ * psi)); }

private:
    struct Slot {
        std::once_flag once;
        std::unique_ptr<SpectralCache> cache;
    };

    BoxPtr box_;
    Potential potential_;
    double lambda_;
    int spectral_cap_;
    SparseReal matrix_;
    SpectralBounds bounds_;
    std::shared_ptr<Slot> slot_;
};

inline OneBodyHamiltonian assemble_hamiltonian(const BoxPtr& box, const Potential& potential, double lambda,
                                               int spectral_cap = default_spectral_cap) {
    if (potential.box->dim() != box->dim() || potential.box->side() != box->side() ||
        potential.box->boundary() != box->boundary() ||
        static_cast<int>(potential.values.size()) != box->site_count())
        throw std::invalid_argument("potential is not defined on this box");
    Potential p = potential;
    p.box = box;
    return OneBodyHamiltonian(std::move(p), lambda, spectral_cap);
}

inline Method resolve_method(const OneBodyHamiltonian& h, Method m) {
    if (m != Method::automatic) return m;
    return h.spectral_cache_feasible() ? Method::eigen : Method::chebyshev;
}

/// e^{-ith} psi0.
inline WaveFunction propagate(const OneBodyHamiltonian& h, const WaveFunction& psi0, double t,
                              Method method = Method::automatic, double tol = 1e-12) {
    if (t < 0.0) throw std::invalid_argument("propagate: t must be >= 0");
    if (!(tol > 0.0)) throw std::invalid_argument("propagate: tol must be > 0");
    if (psi0.size() != h.site_count()) throw std::invalid_argument("propagate: state is not on this box");
    if (t == 0.0) return psi0;
    switch (resolve_method(h, method)) {
    case Method::eigen: return {psi0.box(), h.spectrum().evolve(psi0.amplitudes(), t)};
    case Method::chebyshev:
        return {psi0.box(), chebyshev_evolve(h.matrix(), h.bounds(), psi0.amplitudes(), t, tol)};
    default: return {psi0.box(), krylov_evolve(h.matrix(), psi0.amplitudes(), t, tol)};
    }
}

/// Repeated application of a fixed step e^{-i dt h}. With the spectral
/// cache this is one dense matrix-vector product per step.
class StepPropagator {
public:
    StepPropagator(const OneBodyHamiltonian& h, double dt, Method method = Method::automatic, double tol = 1e-12)
        : h_(&h), dt_(dt), method_(resolve_method(h, method)), tol_(tol) {
        if (method_ == Method::eigen) dense_ = h.spectrum().propagator(dt);
    }

    Eigen::VectorXcd step(const Eigen::VectorXcd& psi) const {
        switch (method_) {
        case Method::eigen: return dense_ * psi;
        case Method::chebyshev: return chebyshev_evolve(h_->matrix(), h_->bounds(), psi, dt_, tol_);
        default: return krylov_evolve(h_->matrix(), psi, dt_, tol_);
        }
    }

    double dt() const { return dt_; }
    Method method() const { return method_; }

private:
    const OneBodyHamiltonian* h_;
    double dt_;
    Method method_;
    double tol_;
    Eigen::MatrixXcd dense_;
};

namespace detail {

inline void check_time_grid(const std::vector<double>& t_grid) {
    if (t_grid.empty()) throw std::invalid_argument("time grid is empty");
    if (t_grid.front() < 0.0) throw std::invalid_argument("time grid must be non-negative");
    for (std::size_t i = 1; i < t_grid.size(); ++i)
        if (t_grid[i] < t_grid[i - 1]) throw std::invalid_argument("time grid must be sorted");
}

/// Calls visit(k, e^{-i t_k h} psi0) for each grid time in order.
template <class Visit>
void sweep_time_grid(const OneBodyHamiltonian& h, const WaveFunction& psi0, const std::vector<double>& t_grid,
                     Method method, double tol, Visit&& visit) {
    check_time_grid(t_grid);
    method = resolve_method(h, method);
    if (method == Method::eigen) {
        const auto& sp = h.spectrum();
        const Eigen::VectorXcd c = sp.vectors.transpose() * psi0.amplitudes();
        Eigen::VectorXcd phased(c.size());
        for (std::size_t k = 0; k < t_grid.size(); ++k) {
            if (t_grid[k] == 0.0) {
                visit(k, psi0.amplitudes());
                continue;
            }
            for (Eigen::Index j = 0; j < c.size(); ++j) phased(j) = std::polar(1.0, -sp.energies(j) * t_grid[k]) * c(j);
            visit(k, Eigen::VectorXcd(sp.vectors * phased));
        }
        return;
    }
    // incremental stepping; each increment carries tol / steps so the
    // accumulated error stays within tol
    const double per_step = tol / static_cast<double>(t_grid.size());
    Eigen::VectorXcd cur = psi0.amplitudes();
    double t_cur = 0.0;
    for (std::size_t k = 0; k < t_grid.size(); ++k) {
        const double step = t_grid[k] - t_cur;
        if (step > 0.0) {
            cur = method == Method::chebyshev ? chebyshev_evolve(h.matrix(), h.bounds(), cur, step, per_step)
                                              : krylov_evolve(h.matrix(), cur, step, per_step);
            t_cur = t_grid[k];
        }
        visit(k, cur);
    }
}

} // namespace detail

/// Columns u_{x,z}(t) = <delta_z, e^{-ith} delta_x> over the time grid.
/// h is real symmetric, so column t is e^{-ith} delta_z.
inline Eigen::MatrixXcd propagator_kernel(const OneBodyHamiltonian& h, int z, const std::vector<double>& t_grid,
                                          Method method = Method::automatic, double tol = 1e-12) {
    if (z < 0 || z >= h.site_count()) throw std::out_of_range("kernel source outside box");
    Eigen::MatrixXcd out(h.site_count(), static_cast<Eigen::Index>(t_grid.size()));
    detail::sweep_time_grid(h, WaveFunction::delta(h.box(), z), t_grid, method, tol,
                            [&](std::size_t k, const Eigen::VectorXcd& v) { out.col(static_cast<Eigen::Index>(k)) = v; });
    return out;
}

struct FitWindow {
    int r_min = 1;
    int r_max = 10;
};

/// Peak-amplitude profile D(y) = max_t |<e^{-ith} delta_x0, delta_y>| and
/// its fitted exponential decay rate.
struct SudlProfile {
    int source = 0;
    Norm norm = Norm::l1;
    std::vector<double> peak;        ///< D(y) per site
    std::vector<int> distance;       ///< |y - x0| per site
    std::vector<double> bin_peak;    ///< max of D over sites at each integer distance
    std::vector<char> bin_in_fit;    ///< distance bin entered the fit
    FitWindow window;
    double floor = 1e-14;
    double gamma = 0.0;
    double fit_slope = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    std::vector<double> t_grid;

    double t_max() const { return t_grid.empty() ? 0.0 : t_grid.back(); }
};

inline std::vector<double> uniform_grid(double t_max, double dt) {
    if (!(dt > 0.0)) throw std::invalid_argument("grid step must be > 0");
    const auto steps = static_cast<long>(std::llround(t_max / dt));
    std::vector<double> g(steps + 1);
    for (long k = 0; k <= steps; ++k) g[k] = static_cast<double>(k) * dt;
    return g;
}

/// Fits log D against distance over the window. Distances are binned by
/// integer value keeping the largest D per bin; bins below `floor` are left
/// out. The decay rate is minus the slope, clamped at 0.
inline void fit_sudl_profile(SudlProfile& p) {
    const int max_dist = p.distance.empty() ? 0 : *std::max_element(p.distance.begin(), p.distance.end());
    p.bin_peak.assign(max_dist + 1, 0.0);
    p.bin_in_fit.assign(max_dist + 1, 0);
    for (std::size_t y = 0; y < p.peak.size(); ++y)
        p.bin_peak[p.distance[y]] = std::max(p.bin_peak[p.distance[y]], p.peak[y]);

    std::vector<double> xs, ys;
    for (int d = std::max(0, p.window.r_min); d <= std::min(max_dist, p.window.r_max); ++d) {
        if (p.bin_peak[d] < p.floor) continue;
        p.bin_in_fit[d] = 1;
        xs.push_back(d);
        ys.push_back(std::log(p.bin_peak[d]));
    }
    if (xs.size() < 4)
        throw std::invalid_argument("fit window [" + std::to_string(p.window.r_min) + ", " +
                                    std::to_string(p.window.r_max) + "] holds " + std::to_string(xs.size()) +
                                    " usable distances; need at least 4");
    const LineFit f = linear_fit(xs, ys);
    p.fit_slope = f.slope;
    p.intercept = f.intercept;
    p.residual = f.residual;
    p.gamma = std::max(0.0, -f.slope);
}

inline SudlProfile sudl_profile(const OneBodyHamiltonian& h, int x0, const std::vector<double>& t_grid,
                                FitWindow window, Norm norm = Norm::l1, Method method = Method::automatic,
                                double tol = 1e-12) {
    if (x0 < 0 || x0 >= h.site_count()) throw std::out_of_range("profile source outside box");
    if (window.r_min < 0 || window.r_max < window.r_min) throw std::invalid_argument("malformed fit window");
    SudlProfile p;
    p.source = x0;
    p.norm = norm;
    p.window = window;
    p.t_grid = t_grid;
    p.peak.assign(h.site_count(), 0.0);
    detail::sweep_time_grid(h, WaveFunction::delta(h.box(), x0), t_grid, method, tol,
                            [&](std::size_t, const Eigen::VectorXcd& v) {
                                for (int y = 0; y < h.site_count(); ++y)
                                    p.peak[y] = std::max(p.peak[y], std::min(1.0, std::abs(v(y))));
                            });
    // the t = 0 term gives exactly 1 at the source
    if (t_grid.front() == 0.0) p.peak[x0] = 1.0;
    p.distance.resize(h.site_count());
    for (int y = 0; y < h.site_count(); ++y) p.distance[y] = h.box()->distance(y, x0, norm);
    fit_sudl_profile(p);
    return p;
}

} // namespace slowcone
