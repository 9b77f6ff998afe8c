#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "slowcone/io.hpp"
#include "slowcone/stats.hpp"

namespace slowcone {

enum class FrontSource { hartree_mass, bogoliubov_fluct, exact_fluct };

inline std::string to_string(FrontSource s) {
    switch (s) {
    case FrontSource::hartree_mass: return "hartree_mass";
    case FrontSource::bogoliubov_fluct: return "bogoliubov_fluct";
    case FrontSource::exact_fluct: return "exact_fluct";
    }
    return "?";
}

/// Default arrival thresholds: fraction of total mass, fluctuation quanta.
inline double default_threshold(FrontSource s) { return s == FrontSource::hartree_mass ? 1e-4 : 1e-3; }

/// Signal m(t) in B_r on the uniform grid t0 + k dt.
struct FrontSeries {
    FrontSource source = FrontSource::hartree_mass;
    int r = 0;
    int R = 0;
    /// Distance from the initial support to B_r.
    double rho = 0.0;
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> values;
    double lambda = 0.0;
    double U = 0.0;
    std::uint64_t realization = 0;

    double time(std::size_t k) const { return t0 + dt * static_cast<double>(k); }
    double horizon() const { return values.empty() ? t0 : time(values.size() - 1); }
};

inline void check_series(const FrontSeries& s) {
    if (s.values.empty()) throw std::invalid_argument("front series is empty");
    if (s.values.size() > 1 && !(s.dt > 0.0)) throw std::invalid_argument("front series needs dt > 0");
    for (double v : s.values)
        if (!std::isfinite(v) || v < -1e-8) throw std::invalid_argument("front series values must be finite and >= -1e-8");
}

/// First crossing of `threshold`, linearly interpolated between samples.
inline std::optional<double> front_arrival(const FrontSeries& s, double threshold) {
    if (!(threshold > 0.0)) throw std::invalid_argument("front_arrival: threshold must be > 0");
    check_series(s);
    if (s.values[0] >= threshold) return s.t0;
    for (std::size_t k = 1; k < s.values.size(); ++k) {
        const double a = s.values[k - 1], b = s.values[k];
        if (b >= threshold) return s.time(k - 1) + s.dt * (threshold - a) / (b - a);
    }
    return std::nullopt;
}

struct VelocityFit {
    std::vector<double> rho;
    std::vector<double> arrival;
    /// Fitted velocity, or an upper bound when `arrived` is false.
    double epsilon_hat = 0.0;
    double intercept = 0.0;
    double residual = 0.0;
    double r2 = 0.0;
    double lambda = 0.0;
    bool arrived = true;
    std::vector<std::string> flags;
};

/// Least squares t* = rho / v + c.
inline VelocityFit velocity_fit(const std::vector<double>& rho, const std::vector<double>& arrival) {
    if (rho.size() != arrival.size()) throw std::invalid_argument("velocity_fit: length mismatch");
    if (rho.size() < 3) throw std::invalid_argument("velocity_fit: need at least three arrivals");
    std::vector<double> sorted = rho;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw std::invalid_argument("velocity_fit: distances must be distinct");
    const auto line = linear_fit(rho, arrival);
    VelocityFit f;
    f.rho = rho;
    f.arrival = arrival;
    f.intercept = line.intercept;
    f.residual = line.residual;
    f.r2 = line.r2;
    if (line.slope > 0.0) {
        f.epsilon_hat = 1.0 / line.slope;
    } else {
        f.epsilon_hat = std::numeric_limits<double>::infinity();
        f.flags.push_back("non-positive slope");
    }
    return f;
}

struct ArrivalPoint {
    double rho = 0.0;
    std::optional<double> t;
};

/// Fit from arrivals at several distances observed up to `horizon`. With
/// fewer than three crossings the result is flagged "no arrival within
/// horizon" and epsilon_hat is the bound rho_min / horizon, rho_min being
/// the smallest distance the front failed to reach.
inline VelocityFit velocity_fit_censored(const std::vector<ArrivalPoint>& points, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("velocity_fit_censored: horizon must be > 0");
    std::vector<double> rho, t;
    double rho_missing = std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
        if (p.t) {
            rho.push_back(p.rho);
            t.push_back(*p.t);
        } else {
            rho_missing = std::min(rho_missing, p.rho);
        }
    }
    if (rho.size() >= 3) {
        auto f = velocity_fit(rho, t);
        if (std::isfinite(rho_missing)) f.flags.push_back("partial arrivals");
        return f;
    }
    VelocityFit f;
    f.rho = rho;
    f.arrival = t;
    f.arrived = false;
    f.flags.push_back("no arrival within horizon");
    if (!std::isfinite(rho_missing)) throw std::invalid_argument("velocity_fit_censored: need at least three points");
    f.epsilon_hat = rho_missing / horizon;
    return f;
}

/// Exponential rate K from log m(t) on the pre-arrival window (samples with
/// floor < m < threshold before the first crossing).
inline std::optional<LineFit> growth_rate(const FrontSeries& s, double threshold, double floor = 1e-14) {
    check_series(s);
    std::vector<double> t, logm;
    for (std::size_t k = 0; k < s.values.size(); ++k) {
        const double v = s.values[k];
        if (v >= threshold) break;
        if (v > floor) {
            t.push_back(s.time(k));
            logm.push_back(std::log(v));
        }
    }
    if (t.size() < 3) return std::nullopt;
    return linear_fit(t, logm);
}

/// Relative change of a velocity when the threshold moves by x10 and /10.
struct ThresholdRobustness {
    double base = 0.0;
    double up = 0.0;
    double down = 0.0;
    double worst_change = 0.0;
    bool flagged = false;
};

inline ThresholdRobustness threshold_robustness(double base, double up, double down, double tolerance = 0.2) {
    ThresholdRobustness r{base, up, down, 0.0, false};
    auto rel = [&](double v) { return std::isfinite(v) && std::isfinite(base) && base != 0.0 ? std::abs(v - base) / std::abs(base) : std::numeric_limits<double>::infinity(); };
    r.worst_change = std::max(rel(up), rel(down));
    r.flagged = !(r.worst_change < tolerance);
    return r;
}

struct ScanMember {
    VelocityFit fit;
    bool clipped = false;
};

struct ScanRow {
    double lambda = 0.0;
    double v_median = 0.0;
    double v_q25 = 0.0;
    double v_q75 = 0.0;
    int members = 0;
    int censored = 0;
};

struct ScanTable {
    std::vector<ScanRow> rows;
    /// v ~ c / log(lambda) through the origin, over rows with lambda > 1.
    std::optional<double> c_over_log;
    double r2 = std::numeric_limits<double>::quiet_NaN();
    bool decreasing = true;
};

/// Per-lambda ensemble summary of fitted velocities. Censored members
/// contribute their upper bound.
inline ScanTable epsilon_scan(const std::vector<double>& lambdas, const std::vector<std::vector<ScanMember>>& members,
                              int min_members = 8) {
    if (lambdas.size() != members.size()) throw std::invalid_argument("epsilon_scan: one member list per lambda");
    if (lambdas.empty()) throw std::invalid_argument("epsilon_scan: empty lambda list");
    ScanTable table;
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        const auto& group = members[i];
        if (static_cast<int>(group.size()) < min_members)
            throw std::invalid_argument("epsilon_scan: lambda=" + io::format_double(lambdas[i]) + " has " +
                                        std::to_string(group.size()) + " members, need " + std::to_string(min_members));
        std::vector<double> v;
        ScanRow row;
        row.lambda = lambdas[i];
        for (const auto& m : group) {
            if (m.clipped)
                throw std::invalid_argument("epsilon_scan: member at lambda=" + io::format_double(lambdas[i]) +
                                            " used a clipped observation ball");
            v.push_back(m.fit.epsilon_hat);
            row.censored += m.fit.arrived ? 0 : 1;
        }
        row.members = static_cast<int>(group.size());
        row.v_median = median(v);
        row.v_q25 = quantile(v, 0.25);
        row.v_q75 = quantile(v, 0.75);
        table.rows.push_back(row);
    }
    for (std::size_t i = 1; i < table.rows.size(); ++i)
        if (!(table.rows[i].v_median < table.rows[i - 1].v_median)) table.decreasing = false;

    std::vector<double> u, v;
    for (const auto& row : table.rows)
        if (row.lambda > 1.0 && std::isfinite(row.v_median)) {
            u.push_back(1.0 / std::log(row.lambda));
            v.push_back(row.v_median);
        }
    if (u.size() >= 2) {
        double suv = 0.0, suu = 0.0, mean = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            suv += u[k] * v[k];
            suu += u[k] * u[k];
            mean += v[k];
        }
        mean /= static_cast<double>(v.size());
        const double c = suv / suu;
        double ss_res = 0.0, ss_tot = 0.0;
        for (std::size_t k = 0; k < u.size(); ++k) {
            ss_res += (v[k] - c * u[k]) * (v[k] - c * u[k]);
            ss_tot += (v[k] - mean) * (v[k] - mean);
        }
        table.c_over_log = c;
        table.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    }
    return table;
}

inline std::string scan_csv(const ScanTable& table) {
    io::Csv csv({"lambda", "v_median", "v_q25", "v_q75", "c_over_log_fit", "r2"});
    const std::string c = table.c_over_log ? io::format_double(*table.c_over_log) : "";
    const std::string r2 = table.c_over_log ? io::format_double(table.r2) : "";
    for (const auto& row : table.rows)
        csv.row(row.lambda, row.v_median, row.v_q25, row.v_q75, c, r2);
    return csv.str();
}

/// Self-contained SVG: median velocity (with quartile bars) against
/// lambda on a log axis; lambda <= 0 rows are drawn at the left edge.
inline std::string scan_svg(const ScanTable& table) {
    const double W = 480, H = 320, left = 60, right = 20, top = 20, bottom = 50;
    double lmin = std::numeric_limits<double>::infinity(), lmax = -lmin, vmax = 0.0;
    for (const auto& r : table.rows) {
        if (r.lambda > 0.0) {
            lmin = std::min(lmin, r.lambda);
            lmax = std::max(lmax, r.lambda);
        }
        if (std::isfinite(r.v_q75)) vmax = std::max(vmax, r.v_q75);
    }
    if (!std::isfinite(lmin)) lmin = lmax = 1.0;
    if (lmax <= lmin) lmax = lmin * 10.0;
    const double x_lo = std::log10(lmin) - 0.3, x_hi = std::log10(lmax) + 0.1;
    if (vmax <= 0.0) vmax = 1.0;
    auto X = [&](double lambda) {
        const double lx = lambda > 0.0 ? std::log10(lambda) : x_lo;
        return left + (lx - x_lo) / (x_hi - x_lo) * (W - left - right);
    };
    auto Y = [&](double v) { return top + (1.0 - std::min(v, vmax) / (1.05 * vmax)) * (H - top - bottom); };
    auto f = [](double v) { return io::format_double(std::round(v * 100.0) / 100.0); };

    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + f(W) + "\" height=\"" + f(H) + "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s += "<line x1=\"" + f(left) + "\" y1=\"" + f(H - bottom) + "\" x2=\"" + f(W - right) + "\" y2=\"" + f(H - bottom) +
         "\" stroke=\"black\"/>\n";
    s += "<line x1=\"" + f(left) + "\" y1=\"" + f(top) + "\" x2=\"" + f(left) + "\" y2=\"" + f(H - bottom) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + f(W / 2) + "\" y=\"" + f(H - 10) + "\" text-anchor=\"middle\">lambda (log scale)</text>\n";
    s += "<text x=\"15\" y=\"" + f(H / 2) + "\" transform=\"rotate(-90 15 " + f(H / 2) +
         ")\" text-anchor=\"middle\">velocity</text>\n";
    std::string path;
    for (const auto& r : table.rows) {
        const double x = X(r.lambda);
        if (std::isfinite(r.v_q25) && std::isfinite(r.v_q75))
            s += "<line x1=\"" + f(x) + "\" y1=\"" + f(Y(r.v_q25)) + "\" x2=\"" + f(x) + "\" y2=\"" + f(Y(r.v_q75)) +
                 "\" stroke=\"gray\"/>\n";
        if (!std::isfinite(r.v_median)) continue;
        s += "<circle cx=\"" + f(x) + "\" cy=\"" + f(Y(r.v_median)) + "\" r=\"3\" fill=\"black\"/>\n";
        s += "<text x=\"" + f(x) + "\" y=\"" + f(H - bottom + 15) + "\" text-anchor=\"middle\" font-size=\"10\">" +
             io::format_double(r.lambda) + "</text>\n";
        path += (path.empty() ? "M" : " L") + f(x) + " " + f(Y(r.v_median));
    }
    if (!path.empty()) s += "<path d=\"" + path + "\" fill=\"none\" stroke=\"black\"/>\n";
    s += "</svg>\n";
    return s;
}

} // namespace slowcone
