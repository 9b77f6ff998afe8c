#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "slowcone/harness.hpp"

using namespace slowcone;

namespace {

struct Globals {
    std::string config;
    std::string out;
    int threads = 0;
    std::optional<std::uint64_t> seed_override;
};

int resolve_threads(int flag) {
    if (flag > 0) return flag;
    if (const char* env = std::getenv("SLOWCONE_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n > 0) return n;
        } catch (const std::exception&) {
        }
        std::cerr << "warning: ignoring SLOWCONE_THREADS=" << env << "\n";
    }
    return 1;
}

void print_issues(const ConfigError& e) {
    std::cerr << "configuration rejected:\n";
    for (const auto& i : e.issues()) std::cerr << "  " << i.path << ": " << i.message << "\n";
}

int run_kind(const Globals& g, ExperimentKind expected) {
    if (g.config.empty()) {
        std::cerr << "--config is required\n";
        return 2;
    }
    ExperimentConfig cfg;
    try {
        cfg = load_config(g.config);
    } catch (const ConfigError& e) {
        print_issues(e);
        return 2;
    }
    if (cfg.kind != expected) {
        std::cerr << "config kind is '" << to_string(cfg.kind) << "' but the subcommand runs '" << to_string(expected) << "'\n";
        return 2;
    }
    RunOptions opt{g.out.empty() ? fs::path(cfg.output.directory) : fs::path(g.out), resolve_threads(g.threads),
                   g.seed_override};
    RunReport rep;
    try {
        rep = run(cfg, opt);
    } catch (const ConfigError& e) {
        print_issues(e);
        return 2;
    }
    int failed = 0;
    for (const auto& m : rep.members) {
        if (m.passed()) continue;
        ++failed;
        std::cerr << "member " << m.spec.index << " (lambda=" << io::format_double(m.spec.lambda) << "): ";
        if (!m.ok) std::cerr << m.error;
        for (const auto& c : m.checks)
            if (!c.pass) std::cerr << c.name << " " << io::format_double(c.value) << " > " << io::format_double(c.tolerance) << "; ";
        std::cerr << "\n";
    }
    for (const auto& e : rep.errors) std::cerr << e << "\n";
    std::cout << rep.members.size() - failed << "/" << rep.members.size() << " members passed; report "
              << (opt.out_dir / "report.json").string() << " (" << io::format_double(rep.wall_time) << " s)\n";
    return rep.pass() ? 0 : 1;
}

int validate(const Globals& g) {
    try {
        auto cfg = load_config(g.config);
        if (g.seed_override) cfg.ensemble.base_seed = *g.seed_override;
        validate_config(cfg);
        auto echo = config_echo(cfg);
        echo["config_hash"] = config_hash(cfg);
        std::cout << echo.dump(2) << "\n";
        return 0;
    } catch (const ConfigError& e) {
        print_issues(e);
        return 2;
    }
}

int summarize(const Globals& g, const std::string& target) {
    fs::path path = !target.empty() ? fs::path(target) : g.out.empty() ? fs::path("out") : fs::path(g.out);
    if (fs::is_directory(path)) path /= "report.json";
    json rep;
    try {
        rep = json::parse(io::read_file(path));
    } catch (const std::exception& e) {
        std::cerr << "cannot read report " << path.string() << ": " << e.what() << "\n";
        return 2;
    }
    const fs::path dir = path.parent_path();
    std::cout << "kind " << rep["config"]["kind"].get<std::string>() << ", config " << rep["config_hash"].get<std::string>()
              << ", version " << rep["code_version"].get<std::string>() << "\n";
    std::printf("%8s %10s %20s %8s  %s\n", "member", "lambda", "seed", "status", "failed checks");
    bool missing = false;
    for (const auto& m : rep["members"]) {
        std::string failed;
        for (const auto& c : m["checks"])
            if (!c["pass"].get<bool>()) failed += c["name"].get<std::string>() + " ";
        if (m["status"] == "failed") failed += m["error"].get<std::string>();
        std::printf("%8d %10s %20llu %8s  %s\n", m["member"].get<int>(), io::format_double(m["lambda"].get<double>()).c_str(),
                    static_cast<unsigned long long>(m["seed"].get<std::uint64_t>()), m["status"].get<std::string>().c_str(),
                    failed.c_str());
        for (const auto& f : m["outputs"])
            if (!fs::exists(dir / f.get<std::string>())) {
                std::cerr << "missing output " << f.get<std::string>() << "\n";
                missing = true;
            }
    }
    for (const auto& f : rep["summary_outputs"]) {
        const auto p = dir / f.get<std::string>();
        if (!fs::exists(p)) {
            std::cerr << "missing output " << f.get<std::string>() << "\n";
            missing = true;
            continue;
        }
        std::cout << "\n" << f.get<std::string>() << ":\n" << io::read_file(p);
    }
    for (const auto& e : rep["errors"]) std::cerr << e.get<std::string>() << "\n";
    return rep["pass"].get<bool>() && !missing ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"slowcone: disorder-slowed light cones for lattice Bose gases"};
    app.require_subcommand(1);
    app.set_version_flag("--version", code_version());

    Globals g;
    app.add_option("--config", g.config, "experiment TOML file");
    app.add_option("--out", g.out, "output directory (default: output.directory)");
    app.add_option("--threads", g.threads, "worker threads (fallback: SLOWCONE_THREADS, then 1)")->check(CLI::PositiveNumber);
    app.add_option("--seed-override", g.seed_override, "replace ensemble.base_seed");
    app.fallthrough();

    const std::pair<const char*, ExperimentKind> kinds[] = {{"sudl", ExperimentKind::sudl},
                                                            {"hartree", ExperimentKind::hartree},
                                                            {"bogoliubov", ExperimentKind::bogoliubov},
                                                            {"exact", ExperimentKind::exact},
                                                            {"scan", ExperimentKind::scan}};
    int code = 0;
    for (const auto& [name, kind] : kinds) {
        auto* sub = app.add_subcommand(name, std::string("run a ") + to_string(kind) + " experiment");
        sub->callback([&g, &code, kind = kind] { code = run_kind(g, kind); });
    }
    app.add_subcommand("validate", "check a config and print its normalized echo")->callback([&] {
        if (g.config.empty()) {
            std::cerr << "--config is required\n";
            code = 2;
            return;
        }
        code = validate(g);
    });
    std::string report_path;
    auto* sum = app.add_subcommand("summarize", "print a run report and its summary tables");
    sum->add_option("report", report_path, "report.json or its directory (default: --out)");
    sum->callback([&] { code = summarize(g, report_path); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return code;
}
