#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "slowcone/lattice.hpp"

namespace slowcone {

struct RandomProvenance {
    std::uint64_t seed = 0;
};

struct QuasiPeriodicProvenance {
    double theta = 0.0;
    std::vector<double> alpha;
};

struct ExplicitProvenance {};

using Provenance = std::variant<RandomProvenance, QuasiPeriodicProvenance, ExplicitProvenance>;

/// Real on-site values v(x) over a box, together with how they were made.
struct Potential {
    BoxPtr box;
    std::vector<double> values;
    Provenance provenance = ExplicitProvenance{};

    double operator[](int site) const { return values[site]; }

    double max_abs() const {
        double m = 0.0;
        for (double v : values) m = std::max(m, std::abs(v));
        return m;
    }
};

namespace detail {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t zigzag(std::int64_t v) {
    return (static_cast<std::uint64_t>(v) << 1) ^ static_cast<std::uint64_t>(v >> 63);
}

} // namespace detail

/// Counter-based uniform draw in [0,1) addressed by (key, counters...).
/// Pure function of its arguments; no generator state.
inline double keyed_uniform(std::uint64_t key, const std::vector<std::int64_t>& counters) {
    std::uint64_t h = detail::mix64(key);
    for (auto c : counters) h = detail::mix64(h ^ detail::zigzag(c));
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double keyed_uniform(std::uint64_t key, std::int64_t counter) {
    return keyed_uniform(key, std::vector<std::int64_t>{counter});
}

/// i.i.d. Uniform[0,1] potential. The value at a site depends only on the
/// seed and the site's coordinate relative to the origin, so centered boxes
/// of different sizes agree on their overlap.
inline Potential sample_random_potential(const BoxPtr& box, std::uint64_t seed) {
    Potential p;
    p.box = box;
    p.provenance = RandomProvenance{seed};
    p.values.resize(box->site_count());
    std::vector<std::int64_t> key(box->dim());
    for (int i = 0; i < box->site_count(); ++i) {
        const Coord c = box->offset(i);
        for (int a = 0; a < box->dim(); ++a) key[a] = c[a];
        p.values[i] = keyed_uniform(seed, key);
    }
    return p;
}

/// v(x) = cos(2 pi (theta + x . alpha)), x relative to the origin.
inline Potential quasiperiodic_potential(const BoxPtr& box, double theta, const std::vector<double>& alpha) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in [0,1]");
    if (static_cast<int>(alpha.size()) != box->dim())
        throw std::invalid_argument("alpha must have one component per lattice axis");
    for (double a : alpha)
        if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("alpha components must lie in [0,1]");

    Potential p;
    p.box = box;
    p.provenance = QuasiPeriodicProvenance{theta, alpha};
    p.values.resize(box->site_count());
    for (int i = 0; i < box->site_count(); ++i) {
        const Coord c = box->offset(i);
        double phase = theta;
        for (int a = 0; a < box->dim(); ++a) phase += c[a] * alpha[a];
        p.values[i] = std::cos(2.0 * std::numbers::pi * phase);
    }
    return p;
}

inline Potential explicit_potential(const BoxPtr& box, std::vector<double> values) {
    if (static_cast<int>(values.size()) != box->site_count())
        throw std::invalid_argument("potential has " + std::to_string(values.size()) + " values for a box of " +
                                    std::to_string(box->site_count()) + " sites");
    return Potential{box, std::move(values), ExplicitProvenance{}};
}

/// Default frequency vector: golden mean in d=1, sqrt(p)-floor(sqrt(p)) for
/// successive primes otherwise.
inline std::vector<double> default_alpha(int dim) {
    if (dim == 1) return {(std::sqrt(5.0) - 1.0) / 2.0};
    static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
    std::vector<double> alpha(dim);
    for (int a = 0; a < dim; ++a) {
        const double s = std::sqrt(static_cast<double>(primes[a % 10] + 10 * (a / 10)));
        alpha[a] = s - std::floor(s);
    }
    return alpha;
}

/// Finite proxy for the Diophantine condition:
///   min over 0 < |k|_inf <= bound of dist(k.alpha, Z) * |k|_inf^(d+1).
inline double diophantine_score(const std::vector<double>& alpha, int denominator_bound) {
    if (denominator_bound < 1) throw std::invalid_argument("denominator bound must be >= 1");
    const int d = static_cast<int>(alpha.size());
    if (d < 1) throw std::invalid_argument("alpha must be non-empty");

    std::vector<int> k(d, -denominator_bound);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        int kinf = 0;
        long double dot = 0.0L;
        for (int a = 0; a < d; ++a) {
            kinf = std::max(kinf, std::abs(k[a]));
            dot += static_cast<long double>(k[a]) * alpha[a];
        }
        if (kinf > 0) {
            const double frac = static_cast<double>(std::fabs(dot - std::nearbyint(dot)));
            best = std::min(best, frac * std::pow(static_cast<double>(kinf), d + 1));
        }
        int a = d - 1;
        while (a >= 0 && k[a] == denominator_bound) k[a--] = -denominator_bound;
        if (a < 0) break;
        ++k[a];
    }
    return best;
}

// ---- serialization ---------------------------------------------------------

inline nlohmann::json provenance_json(const Provenance& prov) {
    using nlohmann::json;
    return std::visit(
        [](const auto& p) -> json {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, RandomProvenance>)
                return json{{"family", "random"}, {"seed", p.seed}};
            else if constexpr (std::is_same_v<T, QuasiPeriodicProvenance>)
                return json{{"family", "quasiperiodic"}, {"theta", p.theta}, {"alpha", p.alpha}};
            else
                return json{{"family", "explicit"}};
        },
        prov);
}

/// {provenance, d, L, values}; values are omitted for regenerable families
/// unless `with_values` is set.
inline nlohmann::json to_json(const Potential& p, bool with_values = false) {
    nlohmann::json j{{"provenance", provenance_json(p.provenance)},
                     {"d", p.box->dim()},
                     {"L", p.box->side()},
                     {"bc", to_string(p.box->boundary())}};
    if (with_values || std::holds_alternative<ExplicitProvenance>(p.provenance)) j["values"] = p.values;
    return j;
}

inline Potential potential_from_json(const nlohmann::json& j) {
    const int d = j.at("d").get<int>();
    const int L = j.at("L").get<int>();
    const Boundary bc = j.contains("bc") ? parse_boundary(j.at("bc").get<std::string>()) : Boundary::open;
    auto box = build_box(d, L, bc);
    const auto& prov = j.at("provenance");
    const auto family = prov.at("family").get<std::string>();
    if (family == "random") return sample_random_potential(box, prov.at("seed").get<std::uint64_t>());
    if (family == "quasiperiodic")
        return quasiperiodic_potential(box, prov.at("theta").get<double>(), prov.at("alpha").get<std::vector<double>>());
    if (family == "explicit") return explicit_potential(box, j.at("values").get<std::vector<double>>());
    throw std::invalid_argument("unknown potential family '" + family + "'");
}

} // namespace slowcone
