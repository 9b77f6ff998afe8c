#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "slowcone/errors.hpp"
#include "slowcone/onebody.hpp"
#include "slowcone/projection.hpp"
#include "slowcone/propagators.hpp"

namespace slowcone {

inline constexpr std::int64_t default_fock_nnz_budget = 5'000'000;

/// N-boson occupation basis over `sites` modes, in descending lexicographic
/// order starting from (N,0,...,0). Indices come from a combinatorial rank,
/// which is a perfect hash of the occupation vector.
class FockBasis {
public:
    FockBasis(int sites, int particles, std::int64_t max_dimension = std::int64_t{1} << 31)
        : sites_(sites), n_(particles) {
        if (sites < 1) throw std::invalid_argument("Fock basis needs at least one site");
        if (particles < 0 || particles > 255) throw std::invalid_argument("particle number must be in [0, 255]");

        // count_[k][m] = number of ways to put m bosons on k sites
        count_.assign(sites + 1, std::vector<double>(particles + 1, 0.0));
        count_[0][0] = 1.0;
        for (int k = 1; k <= sites; ++k) {
            double acc = 0.0;
            for (int m = 0; m <= particles; ++m) {
                acc += count_[k - 1][m];
                count_[k][m] = acc;
            }
        }
        const double dim = count_[sites][particles];
        if (dim > static_cast<double>(max_dimension))
            throw CapacityError("Fock dimension " + std::to_string(dim) + " exceeds cap " + std::to_string(max_dimension));
        dim_ = static_cast<std::int64_t>(dim);

        occ_.reserve(static_cast<std::size_t>(dim_) * sites_);
        std::vector<std::uint8_t> cur(sites_, 0);
        enumerate(cur, 0, particles);
    }

    int sites() const { return sites_; }
    int particles() const { return n_; }
    std::int64_t dimension() const { return dim_; }

    /// C(N + sites - 1, N) by the stars-and-bars recursion.
    static double stars_and_bars(int sites, int particles) {
        return std::round(std::exp(std::lgamma(particles + sites) - std::lgamma(particles + 1) - std::lgamma(sites)));
    }

    std::span<const std::uint8_t> occupation(std::int64_t i) const {
        return {occ_.data() + i * sites_, static_cast<std::size_t>(sites_)};
    }

    template <class Occ>
    std::int64_t index(const Occ& occ) const {
        double rank = 0.0;
        int rem = n_;
        for (int i = 0; i < sites_ - 1; ++i) {
            const int ni = occ[i];
            // vectors sharing the prefix with a larger entry at position i
            for (int v = ni + 1; v <= rem; ++v) rank += count_[sites_ - i - 1][rem - v];
            rem -= ni;
        }
        return static_cast<std::int64_t>(rank);
    }

private:
    void enumerate(std::vector<std::uint8_t>& cur, int pos, int rem) {
        if (pos == sites_ - 1) {
            cur[pos] = static_cast<std::uint8_t>(rem);
            occ_.insert(occ_.end(), cur.begin(), cur.end());
            return;
        }
        for (int v = rem; v >= 0; --v) {
            cur[pos] = static_cast<std::uint8_t>(v);
            enumerate(cur, pos + 1, rem - v);
        }
        cur[pos] = 0;
    }

    int sites_;
    int n_;
    std::int64_t dim_ = 0;
    std::vector<std::vector<double>> count_;
    std::vector<std::uint8_t> occ_;
};

using FockBasisPtr = std::shared_ptr<const FockBasis>;

class FockState {
public:
    FockState(FockBasisPtr basis, Eigen::VectorXcd amplitudes) : basis_(std::move(basis)), amp_(std::move(amplitudes)) {
        if (amp_.size() != basis_->dimension()) throw std::invalid_argument("Fock state length does not match basis");
        norm_ = amp_.norm();
    }

    const FockBasisPtr& basis() const { return basis_; }
    const Eigen::VectorXcd& amplitudes() const { return amp_; }
    double norm() const { return norm_; }
    int particles() const { return basis_->particles(); }

private:
    FockBasisPtr basis_;
    Eigen::VectorXcd amp_;
    double norm_ = 0.0;
};

/// H_N = sum_{x,y} h(x,y) a_x^* a_y + U/(2N) sum_x a_x^* a_x^* a_x a_x on the N-particle sector.
struct FockHamiltonian {
    FockBasisPtr basis;
    SparseReal matrix;
    double U = 0.0;

    double energy(const FockState& psi) const { return std::real(psi.amplitudes().dot(matrix * psi.amplitudes())); }
};

namespace detail {

template <class F>
void parallel_chunks(std::int64_t n, int threads, F&& body) {
    threads = std::max(1, threads);
    if (threads == 1 || n < 4096) {
        body(0, std::int64_t{0}, n);
        return;
    }
    std::vector<std::jthread> pool;
    const std::int64_t chunk = (n + threads - 1) / threads;
    for (int c = 0; c < threads; ++c) {
        const std::int64_t lo = c * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, c, lo, hi] { body(c, lo, hi); });
    }
}

} // namespace detail

inline FockHamiltonian build_fock_hamiltonian(const OneBodyHamiltonian& h, double U, int N,
                                              std::int64_t nnz_budget = default_fock_nnz_budget, int threads = 1) {
    if (N < 1) throw std::invalid_argument("particle number must be >= 1");
    const int sites = h.site_count();
    const double dim = FockBasis::stars_and_bars(sites, N);
    const double off_diag = static_cast<double>(h.matrix().nonZeros());
    if (dim * (1.0 + off_diag) > static_cast<double>(nnz_budget))
        throw CapacityError("Fock Hamiltonian for N=" + std::to_string(N) + " on " + std::to_string(sites) +
                            " sites (dimension " + std::to_string(dim) + ") exceeds the nonzero budget " +
                            std::to_string(nnz_budget));
    auto basis = std::make_shared<const FockBasis>(sites, N);

    struct Hop {
        int x, y;
        double value;
    };
    std::vector<double> onsite(sites, 0.0);
    std::vector<Hop> hops;
    for (int x = 0; x < sites; ++x)
        for (SparseReal::InnerIterator it(h.matrix(), x); it; ++it) {
            if (it.col() == x)
                onsite[x] = it.value();
            else
                hops.push_back({x, static_cast<int>(it.col()), it.value()});
        }

    const double pair = U / (2.0 * N);
    const int chunks = std::max(1, threads);
    std::vector<std::vector<Eigen::Triplet<double>>> parts(chunks);
    detail::parallel_chunks(basis->dimension(), threads, [&](int c, std::int64_t lo, std::int64_t hi) {
        auto& out = parts[c];
        std::vector<int> occ(sites);
        for (std::int64_t col = lo; col < hi; ++col) {
            const auto n = basis->occupation(col);
            double diag = 0.0;
            for (int x = 0; x < sites; ++x) {
                occ[x] = n[x];
                diag += onsite[x] * n[x] + pair * n[x] * (n[x] - 1);
            }
            out.emplace_back(col, col, diag);
            // h(x,y) a_x^* a_y |n> = h(x,y) sqrt(n_y (n_x + 1)) |n + e_x - e_y>
            for (const auto& hop : hops) {
                if (occ[hop.y] == 0) continue;
                const double amp = hop.value * std::sqrt(static_cast<double>(occ[hop.y]) * (occ[hop.x] + 1));
                --occ[hop.y];
                ++occ[hop.x];
                out.emplace_back(basis->index(occ), col, amp);
                ++occ[hop.y];
                --occ[hop.x];
            }
        }
    });
    std::vector<Eigen::Triplet<double>> all;
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    FockHamiltonian H{basis, SparseReal(basis->dimension(), basis->dimension()), U};
    H.matrix.setFromTriplets(all.begin(), all.end());
    return H;
}

inline FockHamiltonian build_fock_hamiltonian(const BoxPtr& box, const Potential& potential, double lambda, double U,
                                              int N, std::int64_t nnz_budget = default_fock_nnz_budget) {
    return build_fock_hamiltonian(assemble_hamiltonian(box, potential, lambda), U, N, nnz_budget);
}

/// e^{-itH} psi0 by adaptive Krylov stepping; throws if the norm moves by more than tol.
inline FockState evolve_fock(const FockHamiltonian& H, const FockState& psi0, double t, double tol = 1e-10) {
    if (!(tol > 0.0)) throw std::invalid_argument("evolve_fock: tol must be > 0");
    if (psi0.basis()->dimension() != H.basis->dimension()) throw std::invalid_argument("evolve_fock: basis mismatch");
    if (t == 0.0) return psi0;
    FockState out(psi0.basis(), krylov_evolve(H.matrix, psi0.amplitudes(), t, tol));
    const double drift = std::abs(out.norm() - psi0.norm());
    if (drift > tol) throw ConservationError("Fock norm", 0, drift, tol);
    return out;
}

namespace detail {

inline cplx int_pow(cplx z, int k) {
    cplx r{1.0, 0.0};
    for (int i = 0; i < k; ++i) r *= z;
    return r;
}

} // namespace detail

/// phi^{(x)N}: amplitude(n) = sqrt(N! / prod n_x!) prod phi(x)^{n_x}.
inline FockState product_state(const WaveFunction& phi, int N) {
    if (std::abs(phi.norm() - 1.0) > 1e-10) throw std::invalid_argument("product_state: phi must be normalized");
    auto basis = std::make_shared<const FockBasis>(phi.size(), N);
    Eigen::VectorXcd amp(basis->dimension());
    const double log_nfact = std::lgamma(N + 1.0);
    for (std::int64_t i = 0; i < basis->dimension(); ++i) {
        const auto n = basis->occupation(i);
        double log_w = log_nfact;
        cplx prod{1.0, 0.0};
        for (int x = 0; x < phi.size(); ++x) {
            if (n[x] == 0) continue;
            log_w -= std::lgamma(n[x] + 1.0);
            prod *= detail::int_pow(phi[x], n[x]);
        }
        amp(i) = std::sqrt(std::exp(log_w)) * prod;
    }
    return {basis, std::move(amp)};
}

/// gamma(x,y) = <Psi, a_y^* a_x Psi>.
inline Eigen::MatrixXcd one_rdm(const FockState& psi) {
    const auto& basis = *psi.basis();
    const int sites = basis.sites();
    const auto& a = psi.amplitudes();
    Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(sites, sites);
    std::vector<int> occ(sites);
    for (std::int64_t i = 0; i < basis.dimension(); ++i) {
        if (a(i) == cplx{}) continue;
        const auto n = basis.occupation(i);
        for (int x = 0; x < sites; ++x) occ[x] = n[x];
        for (int x = 0; x < sites; ++x) {
            if (occ[x] == 0) continue;
            g(x, x) += std::norm(a(i)) * static_cast<double>(occ[x]);
            for (int y = 0; y < sites; ++y) {
                if (y == x) continue;
                // a_y^* a_x |n> = sqrt(n_x (n_y + 1)) |n - e_x + e_y>
                const double amp = std::sqrt(static_cast<double>(occ[x]) * (occ[y] + 1));
                --occ[x];
                ++occ[y];
                g(x, y) += std::conj(a(basis.index(occ))) * amp * a(i);
                ++occ[x];
                --occ[y];
            }
        }
    }
    return g;
}

struct FluctuationNumbers {
    double global = 0.0; ///< <N^+> = N - <phi|gamma|phi>
    double local = 0.0;  ///< Tr(q 1_region q gamma)
};

inline FluctuationNumbers fluctuation_numbers(const FockState& psi, const WaveFunction& phi, const Region& region) {
    if (std::abs(phi.norm() - 1.0) > 1e-10) throw std::invalid_argument("fluctuation_numbers: phi must be normalized");
    const Eigen::MatrixXcd g = one_rdm(psi);
    return {psi.particles() * psi.norm() * psi.norm() - condensate_weight(g, phi.amplitudes()),
            projected_trace(g, phi.amplitudes(), region.mask)};
}

inline FluctuationNumbers fluctuation_numbers(const FockState& psi, const WaveFunction& phi) {
    return fluctuation_numbers(psi, phi, full_region(phi.box()));
}

/// <(N^+ + 1)^j> for j in {1, 2}, applying N^+ = N - a^*(phi) a(phi)
/// directly to the state through the (N-1)-particle sector.
inline double fluctuation_moment(const FockState& psi, const WaveFunction& phi, int j) {
    if (j != 1 && j != 2) throw std::invalid_argument("fluctuation_moment: j must be 1 or 2");
    const auto& basis = *psi.basis();
    const int sites = basis.sites();
    const int N = basis.particles();
    const auto& a = psi.amplitudes();

    Eigen::VectorXcd projected = Eigen::VectorXcd::Zero(a.size()); // a^*(phi) a(phi) Psi
    if (N > 0) {
        const FockBasis lower(sites, N - 1);
        Eigen::VectorXcd chi = Eigen::VectorXcd::Zero(lower.dimension());
        std::vector<int> occ(sites);
        // chi(k) = sum_y conj(phi_y) sqrt(k_y + 1) Psi(k + e_y)
        for (std::int64_t k = 0; k < lower.dimension(); ++k) {
            const auto m = lower.occupation(k);
            for (int y = 0; y < sites; ++y) occ[y] = m[y];
            cplx acc{};
            for (int y = 0; y < sites; ++y) {
                ++occ[y];
                acc += std::conj(phi[y]) * std::sqrt(static_cast<double>(occ[y])) * a(basis.index(occ));
                --occ[y];
            }
            chi(k) = acc;
        }
        // (a^*(phi) chi)(n) = sum_x phi_x sqrt(n_x) chi(n - e_x)
        for (std::int64_t i = 0; i < basis.dimension(); ++i) {
            const auto n = basis.occupation(i);
            for (int x = 0; x < sites; ++x) occ[x] = n[x];
            cplx acc{};
            for (int x = 0; x < sites; ++x) {
                if (occ[x] == 0) continue;
                --occ[x];
                acc += phi[x] * std::sqrt(static_cast<double>(occ[x] + 1)) * chi(lower.index(occ));
                ++occ[x];
            }
            projected(i) = acc;
        }
    }
    const Eigen::VectorXcd shifted = (N + 1.0) * a - projected; // (N^+ + 1) Psi
    return j == 1 ? std::real(a.dot(shifted)) : shifted.squaredNorm();
}

/// |Tr((gamma/N - |phi><phi|) O)| for O supported on region x region.
inline double meanfield_error(const FockState& psi, const WaveFunction& phi, const Eigen::MatrixXcd& O,
                              const Region& region) {
    const int n = phi.size();
    if (O.rows() != n || O.cols() != n) throw std::invalid_argument("meanfield_error: observable has wrong shape");
    for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
            if ((!region.mask[x] || !region.mask[y]) && O(x, y) != cplx{})
                throw std::invalid_argument("meanfield_error: observable is not supported on the region");
    const Eigen::MatrixXcd diff =
        one_rdm(psi) / static_cast<double>(psi.particles()) - phi.amplitudes() * phi.amplitudes().adjoint();
    return std::abs((diff * O).trace());
}

/// 1_region as a one-body operator.
inline Eigen::MatrixXcd region_indicator(const Region& region) {
    const int n = static_cast<int>(region.mask.size());
    Eigen::MatrixXcd O = Eigen::MatrixXcd::Zero(n, n);
    for (int x = 0; x < n; ++x)
        if (region.mask[x]) O(x, x) = 1.0;
    return O;
}

} // namespace slowcone
