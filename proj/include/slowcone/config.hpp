#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>
#include <toml.hpp>

#include "slowcone/disorder.hpp"
#include "slowcone/io.hpp"
#include "slowcone/lattice.hpp"
#include "slowcone/onebody.hpp"
#include "slowcone/wavefunction.hpp"

namespace slowcone {

enum class ExperimentKind { sudl, hartree, bogoliubov, exact, scan };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::sudl: return "sudl";
    case ExperimentKind::hartree: return "hartree";
    case ExperimentKind::bogoliubov: return "bogoliubov";
    case ExperimentKind::exact: return "exact";
    case ExperimentKind::scan: return "lightcone-scan";
    }
    return "?";
}

struct ConfigIssue {
    std::string path;
    std::string message;
};

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<ConfigIssue> issues)
        : std::runtime_error(describe(issues)), issues_(std::move(issues)) {}

    const std::vector<ConfigIssue>& issues() const { return issues_; }

private:
    static std::string describe(const std::vector<ConfigIssue>& issues) {
        std::string s = "invalid configuration:";
        for (const auto& i : issues) s += "\n  " + i.path + ": " + i.message;
        return s;
    }
    std::vector<ConfigIssue> issues_;
};

struct Phi0Spec {
    enum class Kind { none, bump, delta, file };
    Kind kind = Kind::none;
    Coord center;
    double width = 1.0;
    int half_window = -1; ///< default ceil(3 width)
    Coord site;
    std::string file;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::sudl;

    struct {
        int d = 1;
        int L = 0;
        Boundary bc = Boundary::open;
        Norm norm = Norm::l1;
    } lattice;

    struct {
        std::string family = "quasiperiodic";
        std::optional<double> theta;
        std::vector<double> alpha;
        std::string file;
        std::vector<double> lambdas;
    } potential;

    struct {
        double U = 0.0;
        double dt = 0.01;
        double t_final = 1.0;
        int sample_every = 1;
        double tol = 1e-12;
        Method method = Method::automatic;
        double norm_tol = 1e-9;
        double energy_tol = 1e-3;
    } dynamics;

    struct {
        std::optional<int> r;
        std::optional<int> R;
        Phi0Spec phi0;
        FitWindow fit_window;
        Coord source;
        std::vector<int> front_radii;
        int padding = 10;
    } geometry;

    struct {
        int size = 1;
        std::uint64_t base_seed = 0;
    } ensemble;

    struct {
        std::string directory = "out";
        std::vector<std::string> formats{"csv", "json"};
    } output;

    struct {
        std::vector<int> N{8};
        std::int64_t nnz_budget = 5'000'000;
    } exact;

    struct {
        bool projected = true;
    } bogoliubov;

    struct {
        std::string source = "bogoliubov";
        std::optional<double> threshold;
        int min_members = 8;
    } scan;

    struct {
        double eps = 0.5;
        double M = 1.0;
    } c2;

    bool wants(const std::string& format) const {
        for (const auto& f : output.formats)
            if (f == format) return true;
        return false;
    }

    /// Cone experiments carry the (r, R) geometry and initial-support rule.
    bool cone_experiment() const {
        return kind == ExperimentKind::hartree || kind == ExperimentKind::bogoliubov ||
               kind == ExperimentKind::exact || kind == ExperimentKind::scan;
    }

    double arrival_threshold() const {
        if (scan.threshold) return *scan.threshold;
        return scan.source == "hartree" ? 1e-4 : 1e-3;
    }
};

namespace detail {

class TomlReader {
public:
    explicit TomlReader(std::vector<ConfigIssue>& issues) : issues_(issues) {}

    void allow(const toml::table& t, const std::string& path, const std::set<std::string>& keys) {
        for (const auto& [k, v] : t) {
            const std::string key(k.str());
            if (!keys.count(key)) issue(join(path, key), "unknown key");
        }
    }

    const toml::table* table(const toml::table& t, const std::string& key, const std::string& path) {
        const auto* node = t.get(key);
        if (!node) return nullptr;
        if (!node->is_table()) {
            issue(join(path, key), "expected a table");
            return nullptr;
        }
        return node->as_table();
    }

    template <class T>
    void get(const toml::table& t, const std::string& key, const std::string& path, T& out) {
        const auto* node = t.get(key);
        if (!node) return;
        if constexpr (std::is_same_v<T, double>) {
            if (auto v = node->value<double>()) {
                out = *v;
                return;
            }
            issue(join(path, key), "expected a number");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (auto v = node->value<bool>()) {
                out = *v;
                return;
            }
            issue(join(path, key), "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (node->is_integer()) {
                const auto v = node->as_integer()->get();
                if constexpr (std::is_unsigned_v<T>) {
                    if (v < 0) {
                        issue(join(path, key), "must be >= 0");
                        return;
                    }
                }
                out = static_cast<T>(v);
                return;
            }
            issue(join(path, key), "expected an integer");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = node->value<std::string>()) {
                out = *v;
                return;
            }
            issue(join(path, key), "expected a string");
        }
    }

    template <class T>
    void get(const toml::table& t, const std::string& key, const std::string& path, std::optional<T>& out) {
        if (!t.get(key)) return;
        T v{};
        const auto before = issues_.size();
        get(t, key, path, v);
        if (issues_.size() == before) out = v;
    }

    template <class T>
    void get_list(const toml::table& t, const std::string& key, const std::string& path, std::vector<T>& out) {
        const auto* node = t.get(key);
        if (!node) return;
        const auto* arr = node->as_array();
        if (!arr) {
            issue(join(path, key), "expected an array");
            return;
        }
        std::vector<T> vals;
        for (const auto& el : *arr) {
            if constexpr (std::is_same_v<T, double>) {
                if (auto v = el.value<double>()) {
                    vals.push_back(*v);
                    continue;
                }
            } else if constexpr (std::is_integral_v<T>) {
                if (el.is_integer()) {
                    vals.push_back(static_cast<T>(el.as_integer()->get()));
                    continue;
                }
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (auto v = el.value<std::string>()) {
                    vals.push_back(*v);
                    continue;
                }
            }
            issue(join(path, key), "array element has the wrong type");
            return;
        }
        out = std::move(vals);
    }

    void issue(std::string path, std::string message) { issues_.push_back({std::move(path), std::move(message)}); }

    static std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

private:
    std::vector<ConfigIssue>& issues_;
};

} // namespace detail

/// Parses TOML into a config with defaults; unknown keys and type errors
/// are collected and thrown together.
inline ExperimentConfig parse_config(const toml::table& root) {
    std::vector<ConfigIssue> issues;
    detail::TomlReader rd(issues);
    ExperimentConfig c;

    rd.allow(root, "", {"kind", "lattice", "potential", "dynamics", "geometry", "ensemble", "output", "exact", "bogoliubov",
                        "scan", "c2"});
    std::string kind = "sudl";
    rd.get(root, "kind", "", kind);
    if (kind == "sudl") c.kind = ExperimentKind::sudl;
    else if (kind == "hartree") c.kind = ExperimentKind::hartree;
    else if (kind == "bogoliubov") c.kind = ExperimentKind::bogoliubov;
    else if (kind == "exact") c.kind = ExperimentKind::exact;
    else if (kind == "lightcone-scan" || kind == "scan") c.kind = ExperimentKind::scan;
    else rd.issue("kind", "unknown experiment kind '" + kind + "'");

    if (const auto* t = rd.table(root, "lattice", "")) {
        rd.allow(*t, "lattice", {"d", "L", "bc", "norm"});
        rd.get(*t, "d", "lattice", c.lattice.d);
        rd.get(*t, "L", "lattice", c.lattice.L);
        std::string bc = "open", norm = "l1";
        rd.get(*t, "bc", "lattice", bc);
        rd.get(*t, "norm", "lattice", norm);
        try {
            c.lattice.bc = parse_boundary(bc);
        } catch (const std::exception& e) {
            rd.issue("lattice.bc", e.what());
        }
        try {
            c.lattice.norm = parse_norm(norm);
        } catch (const std::exception& e) {
            rd.issue("lattice.norm", e.what());
        }
    } else {
        rd.issue("lattice", "missing table");
    }

    if (const auto* t = rd.table(root, "potential", "")) {
        rd.allow(*t, "potential", {"family", "theta", "alpha", "file", "lambda", "lambda_list"});
        rd.get(*t, "family", "potential", c.potential.family);
        rd.get(*t, "theta", "potential", c.potential.theta);
        rd.get_list(*t, "alpha", "potential", c.potential.alpha);
        rd.get(*t, "file", "potential", c.potential.file);
        if (t->get("lambda") && t->get("lambda_list")) rd.issue("potential", "give either lambda or lambda_list, not both");
        if (t->get("lambda")) {
            double l = 0.0;
            rd.get(*t, "lambda", "potential", l);
            c.potential.lambdas = {l};
        }
        rd.get_list(*t, "lambda_list", "potential", c.potential.lambdas);
    }
    if (c.potential.lambdas.empty()) c.potential.lambdas = {0.0};

    if (const auto* t = rd.table(root, "dynamics", "")) {
        rd.allow(*t, "dynamics", {"U", "dt", "t_final", "sample_every", "tol", "method", "norm_tol", "energy_tol"});
        rd.get(*t, "U", "dynamics", c.dynamics.U);
        rd.get(*t, "dt", "dynamics", c.dynamics.dt);
        rd.get(*t, "t_final", "dynamics", c.dynamics.t_final);
        rd.get(*t, "sample_every", "dynamics", c.dynamics.sample_every);
        rd.get(*t, "tol", "dynamics", c.dynamics.tol);
        rd.get(*t, "norm_tol", "dynamics", c.dynamics.norm_tol);
        rd.get(*t, "energy_tol", "dynamics", c.dynamics.energy_tol);
        std::string m = "auto";
        rd.get(*t, "method", "dynamics", m);
        try {
            c.dynamics.method = parse_method(m);
        } catch (const std::exception& e) {
            rd.issue("dynamics.method", e.what());
        }
    }

    if (const auto* t = rd.table(root, "geometry", "")) {
        rd.allow(*t, "geometry", {"r", "R", "phi0", "fit_window", "source", "front_radii", "padding"});
        rd.get(*t, "r", "geometry", c.geometry.r);
        rd.get(*t, "R", "geometry", c.geometry.R);
        rd.get(*t, "padding", "geometry", c.geometry.padding);
        rd.get_list(*t, "source", "geometry", c.geometry.source);
        rd.get_list(*t, "front_radii", "geometry", c.geometry.front_radii);
        std::vector<int> window;
        rd.get_list(*t, "fit_window", "geometry", window);
        if (t->get("fit_window")) {
            if (window.size() == 2) c.geometry.fit_window = {window[0], window[1]};
            else rd.issue("geometry.fit_window", "expected [r_min, r_max]");
        }
        if (const auto* p = rd.table(*t, "phi0", "geometry")) {
            rd.allow(*p, "geometry.phi0", {"bump", "delta", "file"});
            int kinds = 0;
            auto& phi = c.geometry.phi0;
            if (const auto* b = rd.table(*p, "bump", "geometry.phi0")) {
                ++kinds;
                phi.kind = Phi0Spec::Kind::bump;
                rd.allow(*b, "geometry.phi0.bump", {"center", "width", "half_window"});
                rd.get_list(*b, "center", "geometry.phi0.bump", phi.center);
                rd.get(*b, "width", "geometry.phi0.bump", phi.width);
                rd.get(*b, "half_window", "geometry.phi0.bump", phi.half_window);
                if (!b->get("center")) rd.issue("geometry.phi0.bump.center", "missing");
            }
            if (const auto* d = rd.table(*p, "delta", "geometry.phi0")) {
                ++kinds;
                phi.kind = Phi0Spec::Kind::delta;
                rd.allow(*d, "geometry.phi0.delta", {"site"});
                rd.get_list(*d, "site", "geometry.phi0.delta", phi.site);
                if (!d->get("site")) rd.issue("geometry.phi0.delta.site", "missing");
            }
            if (p->get("file")) {
                ++kinds;
                phi.kind = Phi0Spec::Kind::file;
                rd.get(*p, "file", "geometry.phi0", phi.file);
            }
            if (kinds != 1) rd.issue("geometry.phi0", "give exactly one of bump, delta, file");
        }
    }

    if (const auto* t = rd.table(root, "ensemble", "")) {
        rd.allow(*t, "ensemble", {"size", "base_seed"});
        rd.get(*t, "size", "ensemble", c.ensemble.size);
        rd.get(*t, "base_seed", "ensemble", c.ensemble.base_seed);
    }
    if (const auto* t = rd.table(root, "output", "")) {
        rd.allow(*t, "output", {"directory", "formats"});
        rd.get(*t, "directory", "output", c.output.directory);
        rd.get_list(*t, "formats", "output", c.output.formats);
    }
    if (const auto* t = rd.table(root, "exact", "")) {
        rd.allow(*t, "exact", {"N", "N_list", "nnz_budget"});
        if (t->get("N")) {
            int n = 0;
            rd.get(*t, "N", "exact", n);
            c.exact.N = {n};
        }
        rd.get_list(*t, "N_list", "exact", c.exact.N);
        rd.get(*t, "nnz_budget", "exact", c.exact.nnz_budget);
    }
    if (const auto* t = rd.table(root, "bogoliubov", "")) {
        rd.allow(*t, "bogoliubov", {"projected"});
        rd.get(*t, "projected", "bogoliubov", c.bogoliubov.projected);
    }
    if (const auto* t = rd.table(root, "scan", "")) {
        rd.allow(*t, "scan", {"source", "threshold", "min_members"});
        rd.get(*t, "source", "scan", c.scan.source);
        rd.get(*t, "threshold", "scan", c.scan.threshold);
        rd.get(*t, "min_members", "scan", c.scan.min_members);
    }
    if (const auto* t = rd.table(root, "c2", "")) {
        rd.allow(*t, "c2", {"eps", "M"});
        rd.get(*t, "eps", "c2", c.c2.eps);
        rd.get(*t, "M", "c2", c.c2.M);
    }

    if (!issues.empty()) throw ConfigError(std::move(issues));
    return c;
}

inline ExperimentConfig parse_config_string(const std::string& text, const std::string& source = "config") {
    try {
        return parse_config(toml::parse(text, source));
    } catch (const toml::parse_error& e) {
        throw ConfigError({{source, std::string("TOML syntax error: ") + std::string(e.description())}});
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config_string(io::read_file(path), path.string());
}

// ---- initial state -----------------------------------------------------------

struct InitialState {
    WaveFunction phi;
    /// Support window as offsets [lo, hi] per axis (bump and delta), or empty.
    std::vector<std::pair<int, int>> window;
};

/// Normalized discrete Gaussian truncated to its window, or a delta, or
/// amplitudes from a JSON file {"re": [...], "im": [...]}.
inline InitialState build_phi0(const BoxPtr& box, const Phi0Spec& spec) {
    const int d = box->dim();
    switch (spec.kind) {
    case Phi0Spec::Kind::none: throw std::invalid_argument("geometry.phi0 is required for this experiment");
    case Phi0Spec::Kind::delta: {
        if (static_cast<int>(spec.site.size()) != d) throw std::invalid_argument("geometry.phi0.delta.site needs d coordinates");
        const Coord abs = [&] {
            Coord c = spec.site;
            for (auto& v : c) v += box->side() / 2;
            return c;
        }();
        if (!box->contains(abs)) throw std::invalid_argument("geometry.phi0.delta.site lies outside the box");
        InitialState s{WaveFunction::delta(box, box->site_at_offset(spec.site)), {}};
        for (int a = 0; a < d; ++a) s.window.emplace_back(spec.site[a], spec.site[a]);
        return s;
    }
    case Phi0Spec::Kind::bump: {
        if (static_cast<int>(spec.center.size()) != d) throw std::invalid_argument("geometry.phi0.bump.center needs d coordinates");
        if (!(spec.width > 0.0)) throw std::invalid_argument("geometry.phi0.bump.width must be > 0");
        const int hw = spec.half_window >= 0 ? spec.half_window : static_cast<int>(std::ceil(3.0 * spec.width));
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(box->site_count());
        for (int i = 0; i < box->site_count(); ++i) {
            const Coord off = box->offset(i);
            double r2 = 0.0;
            bool inside = true;
            for (int a = 0; a < d; ++a) {
                const int k = off[a] - spec.center[a];
                if (std::abs(k) > hw) inside = false;
                r2 += static_cast<double>(k) * k;
            }
            if (inside) v(i) = std::exp(-0.5 * r2 / (spec.width * spec.width));
        }
        WaveFunction w(box, v);
        if (w.norm() == 0.0) throw std::invalid_argument("geometry.phi0.bump has no support inside the box");
        InitialState s{w.normalized(), {}};
        for (int a = 0; a < d; ++a) s.window.emplace_back(spec.center[a] - hw, spec.center[a] + hw);
        return s;
    }
    case Phi0Spec::Kind::file: {
        const auto j = nlohmann::json::parse(io::read_file(spec.file));
        const auto re = j.at("re").get<std::vector<double>>();
        const auto im = j.contains("im") ? j.at("im").get<std::vector<double>>() : std::vector<double>(re.size(), 0.0);
        if (static_cast<int>(re.size()) != box->site_count() || im.size() != re.size())
            throw std::invalid_argument("geometry.phi0.file has the wrong number of amplitudes");
        Eigen::VectorXcd v(box->site_count());
        for (int i = 0; i < box->site_count(); ++i) v(i) = cplx(re[i], im[i]);
        return {WaveFunction(box, v).normalized(), {}};
    }
    }
    throw std::logic_error("unreachable");
}

/// Largest distance from the origin of any site where phi is nonzero.
inline int support_radius(const WaveFunction& phi, Norm norm) {
    int r = 0;
    for (int i = 0; i < phi.size(); ++i)
        if (phi[i] != cplx{}) r = std::max(r, phi.box()->radius(i, norm));
    return r;
}

/// Smallest distance from the origin of any site where phi is nonzero.
inline int support_inner_radius(const WaveFunction& phi, Norm norm) {
    int r = std::numeric_limits<int>::max();
    for (int i = 0; i < phi.size(); ++i)
        if (phi[i] != cplx{}) r = std::min(r, phi.box()->radius(i, norm));
    return r;
}

// ---- validation ----------------------------------------------------------------

/// Checks every invariant, reporting each violation with its config path.
inline void validate_config(const ExperimentConfig& c) {
    std::vector<ConfigIssue> issues;
    auto bad = [&](std::string path, std::string msg) { issues.push_back({std::move(path), std::move(msg)}); };

    if (c.lattice.d < 1) bad("lattice.d", "must be >= 1");
    if (c.lattice.L < 1) bad("lattice.L", "must be >= 1");
    BoxPtr box;
    if (issues.empty()) {
        try {
            box = build_box(c.lattice.d, c.lattice.L, c.lattice.bc);
        } catch (const std::exception& e) {
            bad("lattice", e.what());
        }
    }

    const auto& fam = c.potential.family;
    if (fam != "quasiperiodic" && fam != "random" && fam != "explicit") bad("potential.family", "unknown family '" + fam + "'");
    if (fam == "explicit" && c.potential.file.empty()) bad("potential.file", "explicit potentials need a file");
    if (c.potential.theta && !(*c.potential.theta >= 0.0 && *c.potential.theta <= 1.0)) bad("potential.theta", "must lie in [0,1]");
    if (!c.potential.alpha.empty() && static_cast<int>(c.potential.alpha.size()) != c.lattice.d)
        bad("potential.alpha", "needs one component per lattice axis");
    for (double a : c.potential.alpha)
        if (!(a >= 0.0 && a <= 1.0)) bad("potential.alpha", "components must lie in [0,1]");
    for (double l : c.potential.lambdas)
        if (!std::isfinite(l) || l < 0.0) bad("potential.lambda", "disorder strengths must be finite and >= 0");

    if (!(c.dynamics.dt > 0.0)) bad("dynamics.dt", "must be > 0");
    if (!(c.dynamics.t_final >= 0.0)) bad("dynamics.t_final", "must be >= 0");
    if (c.dynamics.sample_every < 1) bad("dynamics.sample_every", "must be >= 1");
    if (!(c.dynamics.tol > 0.0)) bad("dynamics.tol", "must be > 0");
    if (c.ensemble.size < 1) bad("ensemble.size", "must be >= 1");
    for (const auto& f : c.output.formats)
        if (f != "csv" && f != "json" && f != "svg") bad("output.formats", "unknown format '" + f + "'");
    if (!c.wants("csv")) bad("output.formats", "csv output is required");
    if (c.geometry.padding < 0) bad("geometry.padding", "must be >= 0");

    if (c.kind == ExperimentKind::sudl) {
        if (c.geometry.fit_window.r_min < 0 || c.geometry.fit_window.r_max < c.geometry.fit_window.r_min)
            bad("geometry.fit_window", "malformed window");
        if (c.geometry.fit_window.r_max - std::max(0, c.geometry.fit_window.r_min) + 1 < 4)
            bad("geometry.fit_window", "needs at least 4 distances");
        if (!c.geometry.source.empty() && static_cast<int>(c.geometry.source.size()) != c.lattice.d)
            bad("geometry.source", "needs d coordinates");
        if (box && c.lattice.bc == Boundary::open && box->half_extent() < c.geometry.fit_window.r_max + c.geometry.padding)
            bad("lattice.L", "padding rule violated: half-width " + std::to_string(box->half_extent()) +
                                 " < fit_window.r_max + padding = " +
                                 std::to_string(c.geometry.fit_window.r_max + c.geometry.padding));
    }

    if (c.kind == ExperimentKind::exact) {
        if (c.exact.N.empty()) bad("exact.N", "needs at least one particle number");
        for (int n : c.exact.N)
            if (n < 1 || n > 255) bad("exact.N", "particle numbers must lie in [1, 255]");
    }
    if (c.kind == ExperimentKind::scan) {
        if (c.scan.source != "bogoliubov" && c.scan.source != "hartree") bad("scan.source", "must be bogoliubov or hartree");
        if (c.scan.threshold && !(*c.scan.threshold > 0.0)) bad("scan.threshold", "must be > 0");
        if (c.ensemble.size < c.scan.min_members)
            bad("ensemble.size", "scan needs at least " + std::to_string(c.scan.min_members) + " members");
        if (c.geometry.front_radii.empty()) bad("geometry.front_radii", "scan needs front radii");
    }

    if (c.cone_experiment()) {
        if (!c.geometry.r) bad("geometry.r", "missing");
        if (!c.geometry.R) bad("geometry.R", "missing");
        if (c.geometry.r && c.geometry.R) {
            if (*c.geometry.r < 0) bad("geometry.r", "must be >= 0");
            if (*c.geometry.R < 2 * *c.geometry.r) bad("geometry.R", "R >= 2r violated");
        }
        for (int fr : c.geometry.front_radii)
            if (c.geometry.R && (fr < 0 || fr >= *c.geometry.R)) bad("geometry.front_radii", "radii must lie in [0, R)");
        if (c.geometry.phi0.kind == Phi0Spec::Kind::none) bad("geometry.phi0", "missing");
        if (c.kind == ExperimentKind::hartree && c.geometry.r && c.geometry.R) {
            if (!(c.c2.eps > 0.0)) bad("c2.eps", "must be > 0");
            else if (c.dynamics.t_final < (*c.geometry.R - *c.geometry.r) / c.c2.eps * (1.0 - 1e-12))
                bad("dynamics.t_final", "must reach the horizon (R - r) / eps");
        }
        if (box && c.geometry.phi0.kind != Phi0Spec::Kind::none && c.geometry.R) {
            try {
                const auto init = build_phi0(box, c.geometry.phi0);
                if (!init.phi.vanishes_on(ball_region(box, *c.geometry.R, c.lattice.norm)))
                    bad("geometry.phi0", "support intersects B_R");
                // tiny exact-diagonalization boxes are exempt from padding
                const int reach = std::max(support_radius(init.phi, c.lattice.norm), *c.geometry.R);
                if (c.kind != ExperimentKind::exact && c.lattice.bc == Boundary::open &&
                    box->half_extent() < reach + c.geometry.padding)
                    bad("lattice.L", "padding rule violated: half-width " + std::to_string(box->half_extent()) +
                                         " < extent of interest " + std::to_string(reach) + " + padding " +
                                         std::to_string(c.geometry.padding));
            } catch (const std::exception& e) {
                bad("geometry.phi0", e.what());
            }
        }
    }

    if (!issues.empty()) throw ConfigError(std::move(issues));
}

// ---- normalized echo -----------------------------------------------------------

/// Every field with defaults filled. The output directory is left out, so
/// the hash depends only on what determines the numbers.
inline nlohmann::json config_echo(const ExperimentConfig& c) {
    using nlohmann::json;
    json phi0 = nullptr;
    const auto& p = c.geometry.phi0;
    if (p.kind == Phi0Spec::Kind::bump)
        phi0 = {{"bump", {{"center", p.center}, {"width", p.width}, {"half_window", p.half_window}}}};
    else if (p.kind == Phi0Spec::Kind::delta)
        phi0 = {{"delta", {{"site", p.site}}}};
    else if (p.kind == Phi0Spec::Kind::file)
        phi0 = {{"file", p.file}};

    json potential{{"family", c.potential.family}, {"lambda_list", c.potential.lambdas}};
    if (c.potential.theta) potential["theta"] = *c.potential.theta;
    potential["alpha"] = c.potential.alpha.empty() ? default_alpha(c.lattice.d) : c.potential.alpha;
    if (!c.potential.file.empty()) potential["file"] = c.potential.file;

    json geometry{{"phi0", phi0},
                  {"fit_window", {c.geometry.fit_window.r_min, c.geometry.fit_window.r_max}},
                  {"source", c.geometry.source.empty() ? Coord(c.lattice.d, 0) : c.geometry.source},
                  {"front_radii", c.geometry.front_radii},
                  {"padding", c.geometry.padding}};
    if (c.geometry.r) geometry["r"] = *c.geometry.r;
    if (c.geometry.R) geometry["R"] = *c.geometry.R;

    return json{
        {"kind", to_string(c.kind)},
        {"lattice", {{"d", c.lattice.d}, {"L", c.lattice.L}, {"bc", to_string(c.lattice.bc)}, {"norm", to_string(c.lattice.norm)}}},
        {"potential", potential},
        {"dynamics",
         {{"U", c.dynamics.U},
          {"dt", c.dynamics.dt},
          {"t_final", c.dynamics.t_final},
          {"sample_every", c.dynamics.sample_every},
          {"tol", c.dynamics.tol},
          {"method", to_string(c.dynamics.method)},
          {"norm_tol", c.dynamics.norm_tol},
          {"energy_tol", c.dynamics.energy_tol}}},
        {"geometry", geometry},
        {"ensemble", {{"size", c.ensemble.size}, {"base_seed", c.ensemble.base_seed}}},
        {"output", {{"formats", c.output.formats}}},
        {"exact", {{"N_list", c.exact.N}, {"nnz_budget", c.exact.nnz_budget}}},
        {"bogoliubov", {{"projected", c.bogoliubov.projected}}},
        {"scan",
         {{"source", c.scan.source}, {"threshold", c.arrival_threshold()}, {"min_members", c.scan.min_members}}},
        {"c2", {{"eps", c.c2.eps}, {"M", c.c2.M}}},
    };
}

inline std::string config_hash(const ExperimentConfig& c) { return io::hex64(io::fnv1a64(config_echo(c).dump())); }

} // namespace slowcone
