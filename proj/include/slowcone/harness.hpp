#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "slowcone/bogoliubov.hpp"
#include "slowcone/config.hpp"
#include "slowcone/disorder.hpp"
#include "slowcone/exactfock.hpp"
#include "slowcone/hartree.hpp"
#include "slowcone/io.hpp"
#include "slowcone/lightcone.hpp"
#include "slowcone/onebody.hpp"
#include "slowcone/stats.hpp"

#ifndef SLOWCONE_VERSION
#define SLOWCONE_VERSION "0.0.0"
#endif

namespace slowcone {

inline std::string code_version() { return SLOWCONE_VERSION; }

namespace fs = std::filesystem;
using nlohmann::json;

struct RunOptions {
    fs::path out_dir;
    int threads = 1;
    std::optional<std::uint64_t> seed_override;
};

struct MemberSpec {
    int index = 0;         ///< ensemble member
    int lambda_index = 0;  ///< position in the lambda list
    double lambda = 0.0;
    std::uint64_t seed = 0;
};

struct CheckResult {
    std::string name;
    double value = 0.0;
    double tolerance = 0.0;
    bool pass = true;
};

struct MemberResult {
    MemberSpec spec;
    bool ok = false;
    std::string error;
    std::vector<std::string> outputs;
    std::vector<CheckResult> checks;
    json metrics = json::object();

    bool passed() const {
        return ok && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
    }
};

struct RunReport {
    json config;
    std::string config_hash;
    std::string version;
    std::vector<MemberResult> members;
    std::vector<std::string> summary_outputs;
    std::vector<std::string> errors;
    double wall_time = 0.0;

    bool pass() const {
        return errors.empty() && std::all_of(members.begin(), members.end(), [](const MemberResult& m) { return m.passed(); });
    }

    json to_json() const {
        json members_json = json::array();
        for (const auto& m : members) {
            json checks = json::array();
            for (const auto& c : m.checks)
                checks.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance}, {"pass", c.pass}});
            members_json.push_back({{"member", m.spec.index},
                                    {"lambda", m.spec.lambda},
                                    {"seed", m.spec.seed},
                                    {"status", m.ok ? "ok" : "failed"},
                                    {"error", m.error},
                                    {"outputs", m.outputs},
                                    {"checks", checks},
                                    {"metrics", m.metrics}});
        }
        return {{"config", config},
                {"config_hash", config_hash},
                {"code_version", version},
                {"members", members_json},
                {"summary_outputs", summary_outputs},
                {"errors", errors},
                {"wall_time_s", wall_time},
                {"pass", pass()}};
    }
};

// ---- ensemble summary -----------------------------------------------------------

struct SummaryRow {
    double t = 0.0;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    int members = 0;
};

/// Per-time median and quartiles across members sharing one time grid.
inline std::vector<SummaryRow> ensemble_summary(const std::vector<std::vector<double>>& grids,
                                                const std::vector<std::vector<double>>& values) {
    if (grids.empty()) throw std::invalid_argument("ensemble_summary: need at least one member");
    if (grids.size() != values.size()) throw std::invalid_argument("ensemble_summary: grids and values differ in count");
    for (std::size_t m = 0; m < grids.size(); ++m) {
        if (grids[m] != grids[0]) throw std::invalid_argument("ensemble_summary: inconsistent time grids across members");
        if (values[m].size() != grids[m].size()) throw std::invalid_argument("ensemble_summary: series length mismatch");
    }
    std::vector<SummaryRow> rows;
    for (std::size_t k = 0; k < grids[0].size(); ++k) {
        std::vector<double> v;
        for (const auto& s : values) v.push_back(s[k]);
        rows.push_back({grids[0][k], median(v), quantile(v, 0.25), quantile(v, 0.75), static_cast<int>(v.size())});
    }
    return rows;
}

namespace detail {

/// Shared per-member context.
struct MemberContext {
    const ExperimentConfig& cfg;
    const RunOptions& opt;
    const std::string& hash;
    MemberSpec spec;
    BoxPtr box;
    MemberResult& result;

    std::string stem(const std::string& kind) const {
        return kind + "_l" + std::to_string(spec.lambda_index) + "_m" + std::to_string(spec.index);
    }

    json sidecar() const {
        return {{"code_version", code_version()},
                {"config_hash", hash},
                {"seeds", json::array({spec.seed})},
                {"member", spec.index},
                {"lambda", spec.lambda}};
    }

    void write(const std::string& name, const std::string& content) {
        io::atomic_write(opt.out_dir / name, content);
        result.outputs.push_back(name);
    }

    void write_json(const std::string& name, const json& j) {
        if (cfg.wants("json")) write(name, j.dump(2) + "\n");
    }

    void check(std::string name, double value, double tol) {
        result.checks.push_back({std::move(name), value, tol, value <= tol});
    }
};

inline Potential member_potential(const ExperimentConfig& cfg, const BoxPtr& box, std::uint64_t seed) {
    const auto& fam = cfg.potential.family;
    if (fam == "random") return sample_random_potential(box, seed);
    if (fam == "explicit") {
        auto p = potential_from_json(json::parse(io::read_file(cfg.potential.file)));
        if (p.box->dim() != box->dim() || p.box->side() != box->side())
            throw std::invalid_argument("potential file does not match the lattice");
        return explicit_potential(box, p.values);
    }
    const double theta = cfg.potential.theta ? *cfg.potential.theta : keyed_uniform(seed, 0);
    return quasiperiodic_potential(box, theta, cfg.potential.alpha.empty() ? default_alpha(box->dim()) : cfg.potential.alpha);
}

inline HartreeOptions hartree_options(const ExperimentConfig& cfg) {
    return {cfg.dynamics.method, std::min(cfg.dynamics.tol, 1e-12), cfg.dynamics.norm_tol, cfg.dynamics.energy_tol};
}

/// Sites within `padding` of an open face.
inline Region boundary_layer(const BoxPtr& box, int padding) {
    Region reg;
    reg.box = box;
    reg.kind = Region::Kind::explicit_set;
    reg.mask.assign(box->site_count(), 0);
    if (box->boundary() == Boundary::periodic) return reg;
    for (int i = 0; i < box->site_count(); ++i) {
        const Coord c = box->coord(i);
        for (int v : c)
            if (v < padding || v >= box->side() - padding) reg.mask[i] = 1;
    }
    return reg;
}

/// JSON has no infinity; censored quantities are stored as null.
inline json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
inline double number_or_inf(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

// ---- sudl ---------------------------------------------------------------------

inline void run_sudl(MemberContext& ctx, const Potential& pot) {
    const auto& cfg = ctx.cfg;
    const auto h = assemble_hamiltonian(ctx.box, pot, ctx.spec.lambda);
    const Coord src = cfg.geometry.source.empty() ? Coord(cfg.lattice.d, 0) : cfg.geometry.source;
    const int x0 = ctx.box->site_at_offset(src);
    const auto p = sudl_profile(h, x0, uniform_grid(cfg.dynamics.t_final, cfg.dynamics.dt), cfg.geometry.fit_window,
                                cfg.lattice.norm, cfg.dynamics.method, cfg.dynamics.tol);
    io::Csv csv({"site_index", "distance", "D", "log_D", "in_fit_window"});
    for (int y = 0; y < h.site_count(); ++y) {
        const int dist = p.distance[y];
        csv.row(y, dist, p.peak[y], std::log(p.peak[y]), static_cast<bool>(p.bin_in_fit[dist] != 0));
    }
    const auto stem = ctx.stem("sudl");
    ctx.write(stem + ".csv", csv.str());
    auto side = ctx.sidecar();
    side["gamma"] = p.gamma;
    side["residual"] = p.residual;
    side["t_max"] = p.t_max();
    side["dt"] = cfg.dynamics.dt;
    side["provenance"] = provenance_json(pot.provenance);
    side["fit_window"] = {p.window.r_min, p.window.r_max};
    ctx.write_json(stem + ".json", side);
    ctx.result.metrics["gamma"] = p.gamma;
}

// ---- hartree ------------------------------------------------------------------

inline void run_hartree(MemberContext& ctx, const Potential& pot) {
    const auto& cfg = ctx.cfg;
    const auto h = assemble_hamiltonian(ctx.box, pot, ctx.spec.lambda);
    const auto init = build_phi0(ctx.box, cfg.geometry.phi0);
    const auto traj = hartree_evolve(h, cfg.dynamics.U, init.phi, cfg.dynamics.t_final, cfg.dynamics.dt,
                                     cfg.dynamics.sample_every, hartree_options(cfg));
    const auto rep = c2_scan(traj, *cfg.geometry.r, *cfg.geometry.R, cfg.c2.eps, cfg.c2.M, cfg.lattice.norm);
    io::Csv csv({"t", "mass_in_ball", "mass_outside"});
    for (std::size_t k = 0; k < rep.times.size(); ++k) csv.row(rep.times[k], rep.mass_in[k], rep.mass_out[k]);
    const auto stem = ctx.stem("hartree");
    ctx.write(stem + ".csv", csv.str());
    auto side = ctx.sidecar();
    side.update({{"r", rep.r},
                 {"R", rep.R},
                 {"eps", rep.eps},
                 {"M", rep.M},
                 {"U", cfg.dynamics.U},
                 {"peak", rep.peak},
                 {"threshold", rep.threshold},
                 {"pass", rep.pass},
                 {"clipped", rep.clipped},
                 {"norm_drift", traj.max_norm_drift()},
                 {"energy_drift", traj.max_energy_drift()},
                 {"provenance", provenance_json(pot.provenance)},
                 {"phi0_window", init.window}});
    ctx.write_json(stem + ".json", side);
    ctx.check("norm_drift", traj.max_norm_drift(), cfg.dynamics.norm_tol);
    ctx.check("energy_drift", traj.max_energy_drift(), cfg.dynamics.energy_tol);
    ctx.result.metrics["peak"] = rep.peak;
    ctx.result.metrics["c2_pass"] = rep.pass;
    ctx.result.metrics["energy_drift"] = traj.max_energy_drift();
}

// ---- bogoliubov -----------------------------------------------------------------

struct BogoliubovSeries {
    std::vector<double> t;
    std::vector<double> trace;
    std::vector<std::vector<double>> local; ///< one per region
    double ccr_abs = 0.0, ccr_rel = 0.0, pairing_rel = 0.0, min_eig_rel = 0.0;
    double stopped_at = -1.0;
};

/// Runs the fluctuation flow, sampling Tr Gamma and local numbers. If a
/// guard region is given, the run stops once the signal there exceeds
/// `guard_level`; `stop_when` may also end it early.
template <class Stop>
BogoliubovSeries bogoliubov_series(const ExperimentConfig& cfg, const HartreeTrajectory& traj,
                                   const std::vector<Region>& regions, const Region* guard, double guard_level,
                                   Stop&& stop_when, bool full_checks) {
    BogoliubovSeries s;
    s.local.resize(regions.size());
    BogoliubovOptions bo;
    bo.projected = cfg.bogoliubov.projected;
    bo.sample_every = cfg.dynamics.sample_every;
    evolve_fluctuations(traj, cfg.dynamics.dt, bo, [&](const QuasiFreeState& st, const WaveFunction& phi) {
        const Eigen::MatrixXcd g = st.gamma();
        const double tr = st.total_fluctuations();
        s.t.push_back(st.time());
        s.trace.push_back(tr);
        for (std::size_t k = 0; k < regions.size(); ++k)
            s.local[k].push_back(std::max(0.0, projected_trace(g, phi.amplitudes(), regions[k].mask)));
        const double scale = 1.0 + tr;
        const double ccr = st.ccr_defect();
        s.ccr_abs = std::max(s.ccr_abs, ccr);
        s.ccr_rel = std::max(s.ccr_rel, ccr / scale);
        if (full_checks) {
            s.pairing_rel = std::max(s.pairing_rel, st.pairing_defect() / scale);
            const double me = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd>(g, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
            s.min_eig_rel = std::min(s.min_eig_rel, me / scale);
        }
        if (guard && projected_trace(g, phi.amplitudes(), guard->mask) > guard_level) {
            s.stopped_at = st.time();
            return false;
        }
        return !stop_when(s);
    });
    return s;
}

inline void run_bogoliubov(MemberContext& ctx, const Potential& pot) {
    const auto& cfg = ctx.cfg;
    const auto h = assemble_hamiltonian(ctx.box, pot, ctx.spec.lambda);
    const auto init = build_phi0(ctx.box, cfg.geometry.phi0);
    const auto traj = hartree_evolve(h, cfg.dynamics.U, init.phi, cfg.dynamics.t_final, cfg.dynamics.dt, 1,
                                     hartree_options(cfg));
    std::vector<int> radii{*cfg.geometry.r};
    for (int r : cfg.geometry.front_radii)
        if (std::find(radii.begin(), radii.end(), r) == radii.end()) radii.push_back(r);
    std::vector<Region> regions;
    for (int r : radii) regions.push_back(ball_region(ctx.box, r, cfg.lattice.norm));
    const auto s = bogoliubov_series(cfg, traj, regions, nullptr, 0.0, [](const BogoliubovSeries&) { return false; }, true);

    std::vector<std::string> header{"t", "trace_gamma"};
    for (int r : radii) header.push_back("local_r" + std::to_string(r));
    io::Csv csv(header);
    for (std::size_t k = 0; k < s.t.size(); ++k) {
        std::vector<std::string> row{io::format_double(s.t[k]), io::format_double(s.trace[k])};
        for (const auto& l : s.local) row.push_back(io::format_double(l[k]));
        csv.row_strings(row);
    }
    const auto stem = ctx.stem("bogoliubov");
    ctx.write(stem + ".csv", csv.str());
    auto side = ctx.sidecar();
    side.update({{"generator", {{"projected", cfg.bogoliubov.projected}, {"U", cfg.dynamics.U}, {"lambda", ctx.spec.lambda}}},
                 {"dt", cfg.dynamics.dt},
                 {"sample_every", cfg.dynamics.sample_every},
                 {"t_final", cfg.dynamics.t_final},
                 {"radii", radii},
                 {"ccr_defect_abs", s.ccr_abs},
                 {"ccr_defect_rel", s.ccr_rel},
                 {"pairing_defect_rel", s.pairing_rel},
                 {"min_gamma_eig_rel", s.min_eig_rel},
                 {"provenance", provenance_json(pot.provenance)},
                 {"phi0_window", init.window}});
    ctx.write_json(stem + ".json", side);
    ctx.check("ccr_defect_rel", s.ccr_rel, 1e-8);
    ctx.check("pairing_defect_rel", s.pairing_rel, 1e-8);
    ctx.check("neg_gamma_eig_rel", -s.min_eig_rel, 1e-8);
    ctx.result.metrics["t"] = s.t;
    ctx.result.metrics["trace"] = s.trace;
    ctx.result.metrics["local_r"] = s.local[0];
}

// ---- exact ------------------------------------------------------------------------

inline void run_exact(MemberContext& ctx, const Potential& pot) {
    const auto& cfg = ctx.cfg;
    const auto h = assemble_hamiltonian(ctx.box, pot, ctx.spec.lambda);
    const auto init = build_phi0(ctx.box, cfg.geometry.phi0);
    const auto traj = hartree_evolve(h, cfg.dynamics.U, init.phi, cfg.dynamics.t_final, cfg.dynamics.dt, 1,
                                     hartree_options(cfg));
    const Region ball = ball_region(ctx.box, *cfg.geometry.r, cfg.lattice.norm);
    const Eigen::MatrixXcd O = region_indicator(ball);

    // cumulative integral of sup|phi_s| by the trapezoid rule on the Hartree steps
    std::vector<double> sup_integral{0.0};
    for (std::size_t k = 1; k < traj.states.size(); ++k)
        sup_integral.push_back(sup_integral.back() + 0.5 * (traj.times[k] - traj.times[k - 1]) *
                                                         (traj.states[k].sup_norm() + traj.states[k - 1].sup_norm()));

    json per_n = json::array();
    for (int N : cfg.exact.N) {
        const auto H = build_fock_hamiltonian(h, cfg.dynamics.U, N, cfg.exact.nnz_budget);
        auto psi = product_state(init.phi, N);
        io::Csv csv({"t", "N_plus", "N_plus_ball", "mf_error", "energy", "norm"});
        io::Csv moments({"t", "moment1", "moment2", "sup_phi_integral"});
        double t_prev = 0.0;
        for (std::size_t k = 0; k < traj.times.size(); ++k) {
            const bool last = k + 1 == traj.times.size();
            if (k % static_cast<std::size_t>(cfg.dynamics.sample_every) != 0 && !last) continue;
            const double t = traj.times[k];
            psi = evolve_fock(H, psi, t - t_prev, std::max(cfg.dynamics.tol, 1e-12));
            t_prev = t;
            const auto& phi = traj.states[k];
            const auto f = fluctuation_numbers(psi, phi, ball);
            csv.row(t, f.global, f.local, meanfield_error(psi, phi, O, ball), H.energy(psi), psi.norm());
            moments.row(t, fluctuation_moment(psi, phi, 1), fluctuation_moment(psi, phi, 2), sup_integral[k]);
        }
        const auto stem = ctx.stem("exact") + "_N" + std::to_string(N);
        ctx.write(stem + ".csv", csv.str());
        ctx.write(stem + "_moments.csv", moments.str());
        auto side = ctx.sidecar();
        side.update({{"N", N},
                     {"L", cfg.lattice.L},
                     {"d", cfg.lattice.d},
                     {"U", cfg.dynamics.U},
                     {"dt", cfg.dynamics.dt},
                     {"r", *cfg.geometry.r},
                     {"provenance", provenance_json(pot.provenance)},
                     {"dimension", H.basis->dimension()}});
        ctx.write_json(stem + ".json", side);
        per_n.push_back(N);
    }
    ctx.result.metrics["N"] = per_n;
}

// ---- lightcone scan ------------------------------------------------------------------

inline void run_scan(MemberContext& ctx, const Potential& pot) {
    const auto& cfg = ctx.cfg;
    const auto h = assemble_hamiltonian(ctx.box, pot, ctx.spec.lambda);
    const auto init = build_phi0(ctx.box, cfg.geometry.phi0);
    const int inner = support_inner_radius(init.phi, cfg.lattice.norm);
    const double thr = cfg.arrival_threshold();

    std::vector<int> radii = cfg.geometry.front_radii;
    if (std::find(radii.begin(), radii.end(), *cfg.geometry.r) == radii.end()) radii.push_back(*cfg.geometry.r);
    std::sort(radii.begin(), radii.end());
    std::vector<Region> regions;
    bool clipped = false;
    for (int r : radii) {
        regions.push_back(ball_region(ctx.box, r, cfg.lattice.norm));
        clipped = clipped || regions.back().clipped;
    }
    const Region guard = boundary_layer(ctx.box, cfg.geometry.padding);
    const double guard_level = 1e-3 * thr;

    // the observation window ends once every radius has been reached at the
    // lowest threshold used by the robustness check
    auto all_arrived = [&](const std::vector<std::vector<double>>& local) {
        for (const auto& l : local)
            if (l.empty() || l.back() < 10.0 * thr) return false;
        return true;
    };

    std::vector<double> t;
    std::vector<std::vector<double>> local;
    double stopped_at = -1.0;
    json extra = json::object();
    if (cfg.scan.source == "bogoliubov") {
        const auto traj = hartree_evolve(h, cfg.dynamics.U, init.phi, cfg.dynamics.t_final, cfg.dynamics.dt, 1,
                                         hartree_options(cfg));
        auto s = bogoliubov_series(cfg, traj, regions, &guard, guard_level,
                                   [&](const BogoliubovSeries& s) { return all_arrived(s.local); }, false);
        t = std::move(s.t);
        local = std::move(s.local);
        stopped_at = s.stopped_at;
        extra["ccr_defect_rel"] = s.ccr_rel;
        ctx.check("ccr_defect_rel", s.ccr_rel, 1e-8);
    } else {
        const auto traj = hartree_evolve(h, cfg.dynamics.U, init.phi, cfg.dynamics.t_final, cfg.dynamics.dt,
                                         cfg.dynamics.sample_every, hartree_options(cfg));
        local.resize(regions.size());
        for (std::size_t k = 0; k < traj.times.size(); ++k) {
            t.push_back(traj.times[k]);
            for (std::size_t j = 0; j < regions.size(); ++j) local[j].push_back(traj.states[k].mass_in(regions[j]));
            if (traj.states[k].mass_in(guard) > guard_level) {
                stopped_at = traj.times[k];
                break;
            }
            if (all_arrived(local)) break;
        }
        ctx.check("norm_drift", traj.max_norm_drift(), cfg.dynamics.norm_tol);
    }
    const double horizon = t.back();

    // uniform grid: sampling is every sample_every steps except possibly the last
    const double grid_dt = t.size() > 1 ? t[1] - t[0] : cfg.dynamics.dt;
    auto arrivals_at = [&](double level) {
        std::vector<ArrivalPoint> pts;
        std::vector<std::optional<double>> at;
        for (std::size_t j = 0; j < radii.size(); ++j) {
            FrontSeries fs;
            fs.source = cfg.scan.source == "bogoliubov" ? FrontSource::bogoliubov_fluct : FrontSource::hartree_mass;
            fs.r = radii[j];
            fs.R = *cfg.geometry.R;
            fs.rho = inner - radii[j];
            fs.dt = grid_dt;
            fs.values = local[j];
            fs.lambda = ctx.spec.lambda;
            fs.U = cfg.dynamics.U;
            fs.realization = ctx.spec.index;
            at.push_back(front_arrival(fs, level));
            pts.push_back({fs.rho, at.back()});
        }
        return std::make_pair(pts, at);
    };
    const auto [points, arrivals] = arrivals_at(thr);
    const auto fit = velocity_fit_censored(points, horizon);
    const auto fit_up = velocity_fit_censored(arrivals_at(10.0 * thr).first, horizon);
    const auto fit_down = velocity_fit_censored(arrivals_at(0.1 * thr).first, horizon);
    const auto robust = threshold_robustness(fit.epsilon_hat, fit_up.epsilon_hat, fit_down.epsilon_hat);

    std::vector<std::string> header{"t"};
    for (int r : radii) header.push_back("local_r" + std::to_string(r));
    io::Csv csv(header);
    for (std::size_t k = 0; k < t.size(); ++k) {
        std::vector<std::string> row{io::format_double(t[k])};
        for (const auto& l : local) row.push_back(io::format_double(l[k]));
        csv.row_strings(row);
    }
    io::Csv arr({"radius", "rho", "t_arrival", "arrived"});
    for (std::size_t j = 0; j < radii.size(); ++j)
        arr.row(radii[j], inner - radii[j], arrivals[j] ? *arrivals[j] : std::numeric_limits<double>::infinity(),
                arrivals[j].has_value());
    const auto stem = ctx.stem("scan");
    ctx.write(stem + ".csv", csv.str());
    ctx.write(stem + "_arrivals.csv", arr.str());

    const auto r_index = static_cast<std::size_t>(std::find(radii.begin(), radii.end(), *cfg.geometry.r) - radii.begin());
    const double t_r = arrivals[r_index] ? *arrivals[r_index] : std::numeric_limits<double>::infinity();
    auto side = ctx.sidecar();
    side.update({{"source", cfg.scan.source},
                 {"threshold", thr},
                 {"horizon", horizon},
                 {"guard_tripped", stopped_at >= 0.0},
                 {"epsilon_hat", fit.epsilon_hat},
                 {"arrived", fit.arrived},
                 {"intercept", fit.intercept},
                 {"r2", fit.r2},
                 {"flags", fit.flags},
                 {"threshold_robustness", {{"up", fit_up.epsilon_hat}, {"down", fit_down.epsilon_hat},
                                           {"worst_change", robust.worst_change}, {"flagged", robust.flagged}}},
                 {"clipped", clipped},
                 {"provenance", provenance_json(pot.provenance)},
                 {"phi0_window", init.window}});
    side.update(extra);
    ctx.write_json(stem + ".json", side);

    auto& m = ctx.result.metrics;
    m["epsilon_hat"] = finite_or_null(fit.epsilon_hat);
    m["arrived"] = fit.arrived;
    m["clipped"] = clipped;
    m["horizon"] = horizon;
    m["arrival_r"] = finite_or_null(t_r);
    m["robust_flagged"] = robust.flagged;
    m["flags"] = fit.flags;
}

inline void run_member(const ExperimentConfig& cfg, const RunOptions& opt, const std::string& hash, MemberResult& result) {
    try {
        auto box = build_box(cfg.lattice.d, cfg.lattice.L, cfg.lattice.bc);
        MemberContext ctx{cfg, opt, hash, result.spec, box, result};
        const auto pot = member_potential(cfg, box, result.spec.seed);
        if (result.spec.lambda_index == 0 && cfg.wants("json"))
            ctx.write("potential_m" + std::to_string(result.spec.index) + ".json", to_json(pot).dump(2) + "\n");
        switch (cfg.kind) {
        case ExperimentKind::sudl: run_sudl(ctx, pot); break;
        case ExperimentKind::hartree: run_hartree(ctx, pot); break;
        case ExperimentKind::bogoliubov: run_bogoliubov(ctx, pot); break;
        case ExperimentKind::exact: run_exact(ctx, pot); break;
        case ExperimentKind::scan: run_scan(ctx, pot); break;
        }
        result.ok = true;
    } catch (const std::exception& e) {
        result.ok = false;
        result.error = e.what();
    }
}


/// Aggregates after every member has finished; outputs depend only on
/// member results in index order.
inline void write_summaries(const ExperimentConfig& cfg, const RunOptions& opt, RunReport& report) {
    const auto& lambdas = cfg.potential.lambdas;
    auto members_of = [&](std::size_t li) {
        std::vector<const MemberResult*> out;
        for (const auto& m : report.members)
            if (m.spec.lambda_index == static_cast<int>(li) && m.ok) out.push_back(&m);
        return out;
    };
    auto write = [&](const std::string& name, const std::string& content) {
        io::atomic_write(opt.out_dir / name, content);
        report.summary_outputs.push_back(name);
    };

    if (cfg.kind == ExperimentKind::sudl) {
        io::Csv csv({"lambda", "gamma_median", "gamma_q25", "gamma_q75", "members"});
        for (std::size_t li = 0; li < lambdas.size(); ++li) {
            std::vector<double> g;
            for (const auto* m : members_of(li)) g.push_back(m->metrics.at("gamma").get<double>());
            if (g.empty()) continue;
            csv.row(lambdas[li], median(g), quantile(g, 0.25), quantile(g, 0.75), static_cast<int>(g.size()));
        }
        write("sudl_summary.csv", csv.str());
    } else if (cfg.kind == ExperimentKind::hartree) {
        io::Csv csv({"lambda", "peak_median", "peak_q25", "peak_q75", "c2_pass", "members"});
        for (std::size_t li = 0; li < lambdas.size(); ++li) {
            std::vector<double> p;
            int pass = 0;
            for (const auto* m : members_of(li)) {
                p.push_back(m->metrics.at("peak").get<double>());
                pass += m->metrics.at("c2_pass").get<bool>() ? 1 : 0;
            }
            if (p.empty()) continue;
            csv.row(lambdas[li], median(p), quantile(p, 0.25), quantile(p, 0.75), pass, static_cast<int>(p.size()));
        }
        write("hartree_summary.csv", csv.str());
    } else if (cfg.kind == ExperimentKind::bogoliubov) {
        io::Csv csv({"lambda", "t", "trace_median", "trace_q25", "trace_q75", "local_median", "local_q25", "local_q75",
                     "members"});
        for (std::size_t li = 0; li < lambdas.size(); ++li) {
            std::vector<std::vector<double>> grids, trace, local;
            for (const auto* m : members_of(li)) {
                grids.push_back(m->metrics.at("t").get<std::vector<double>>());
                trace.push_back(m->metrics.at("trace").get<std::vector<double>>());
                local.push_back(m->metrics.at("local_r").get<std::vector<double>>());
            }
            if (grids.empty()) continue;
            const auto a = ensemble_summary(grids, trace);
            const auto b = ensemble_summary(grids, local);
            for (std::size_t k = 0; k < a.size(); ++k)
                csv.row(lambdas[li], a[k].t, a[k].median, a[k].q25, a[k].q75, b[k].median, b[k].q25, b[k].q75, a[k].members);
        }
        write("bogoliubov_summary.csv", csv.str());
    } else if (cfg.kind == ExperimentKind::scan) {
        std::vector<std::vector<ScanMember>> groups(lambdas.size());
        io::Csv arrivals({"lambda", "radius", "arrival_median", "arrival_q25", "arrival_q75", "censored", "horizon_min",
                          "members"});
        for (std::size_t li = 0; li < lambdas.size(); ++li) {
            std::vector<double> t;
            double horizon = std::numeric_limits<double>::infinity();
            int censored = 0;
            for (const auto* m : members_of(li)) {
                ScanMember sm;
                sm.fit.epsilon_hat = number_or_inf(m->metrics.at("epsilon_hat"));
                sm.fit.arrived = m->metrics.at("arrived").get<bool>();
                sm.clipped = m->metrics.at("clipped").get<bool>();
                groups[li].push_back(sm);
                const double a = number_or_inf(m->metrics.at("arrival_r"));
                t.push_back(a);
                censored += std::isfinite(a) ? 0 : 1;
                horizon = std::min(horizon, m->metrics.at("horizon").get<double>());
            }
            if (t.empty()) continue;
            arrivals.row(lambdas[li], *cfg.geometry.r, median(t), quantile(t, 0.25), quantile(t, 0.75), censored, horizon,
                         static_cast<int>(t.size()));
        }
        write("arrivals_summary.csv", arrivals.str());
        try {
            const auto table = epsilon_scan(lambdas, groups, cfg.scan.min_members);
            write("scan.csv", scan_csv(table));
            if (cfg.wants("svg")) write("scan.svg", scan_svg(table));
        } catch (const std::exception& e) {
            report.errors.push_back(std::string("scan table: ") + e.what());
        }
    }
}

} // namespace detail

/// Executes every (lambda, member) job on a worker pool, then writes
/// summaries and finally the report (atomically).
inline RunReport run(const ExperimentConfig& cfg_in, const RunOptions& opt) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = cfg_in;
    if (opt.seed_override) cfg.ensemble.base_seed = *opt.seed_override;
    validate_config(cfg);
    fs::create_directories(opt.out_dir);

    RunReport report;
    report.config = config_echo(cfg);
    report.config_hash = config_hash(cfg);
    report.version = code_version();

    for (int li = 0; li < static_cast<int>(cfg.potential.lambdas.size()); ++li)
        for (int m = 0; m < cfg.ensemble.size; ++m) {
            MemberResult r;
            r.spec = {m, li, cfg.potential.lambdas[li], cfg.ensemble.base_seed + static_cast<std::uint64_t>(m)};
            report.members.push_back(std::move(r));
        }

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < report.members.size(); i = next++)
            detail::run_member(cfg, opt, report.config_hash, report.members[i]);
    };
    const int threads = std::max(1, std::min<int>(opt.threads, static_cast<int>(report.members.size())));
    {
        std::vector<std::jthread> pool;
        for (int k = 1; k < threads; ++k) pool.emplace_back(worker);
        worker();
    }
    for (auto& m : report.members) std::sort(m.outputs.begin(), m.outputs.end());

    try {
        detail::write_summaries(cfg, opt, report);
    } catch (const std::exception& e) {
        report.errors.push_back(std::string("summary: ") + e.what());
    }
    report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    io::atomic_write(opt.out_dir / "report.json", report.to_json().dump(2) + "\n");
    return report;
}

} // namespace slowcone
