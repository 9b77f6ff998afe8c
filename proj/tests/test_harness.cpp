#include <gtest/gtest.h>

#include <filesystem>

#include "slowcone/harness.hpp"

using namespace slowcone;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("slowcone_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::map<std::string, std::string> csv_files(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") out[e.path().filename().string()] = io::read_file(e.path());
    return out;
}

const char* sudl_config = R"(
kind = "sudl"
[lattice]
L = 41
[potential]
lambda_list = [0.0, 3.0]
[dynamics]
t_final = 8.0
dt = 0.1
[geometry]
fit_window = [1, 8]
[ensemble]
size = 3
base_seed = 11
)";

} // namespace

TEST(EnsembleSummary, QuantilesPerTime) {
    const std::vector<std::vector<double>> grids{{0, 1}, {0, 1}, {0, 1}};
    const auto rows = ensemble_summary(grids, {{1, 4}, {2, 5}, {3, 9}});
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_DOUBLE_EQ(rows[0].median, 2.0);
    EXPECT_DOUBLE_EQ(rows[1].median, 5.0);
    EXPECT_DOUBLE_EQ(rows[1].q25, 4.5);
    EXPECT_EQ(rows[0].members, 3);
}

TEST(EnsembleSummary, RejectsInconsistentGrids) {
    EXPECT_THROW(ensemble_summary({{0, 1}, {0, 2}}, {{1, 1}, {1, 1}}), std::invalid_argument);
    EXPECT_THROW(ensemble_summary({}, {}), std::invalid_argument);
}

TEST(Harness, SudlRunWritesOutputsAndReport) {
    const auto dir = scratch("sudl");
    const auto rep = run(parse_config_string(sudl_config), {dir, 1, std::nullopt});
    EXPECT_TRUE(rep.pass());
    ASSERT_EQ(rep.members.size(), 6u);
    EXPECT_EQ(rep.members[0].spec.seed, 11u);
    EXPECT_EQ(rep.members[2].spec.seed, 13u);
    EXPECT_TRUE(fs::exists(dir / "report.json"));
    EXPECT_TRUE(fs::exists(dir / "sudl_summary.csv"));
    EXPECT_TRUE(fs::exists(dir / "sudl_l1_m2.csv"));
    const auto side = nlohmann::json::parse(io::read_file(dir / "sudl_l1_m2.json"));
    for (const char* k : {"code_version", "config_hash", "seeds", "lambda", "gamma", "residual", "t_max", "dt", "provenance"})
        EXPECT_TRUE(side.contains(k)) << k;
    EXPECT_EQ(side["config_hash"], rep.config_hash);
    // the free chain does not localize; disorder does
    EXPECT_LT(rep.members[0].metrics["gamma"].get<double>(), rep.members[3].metrics["gamma"].get<double>());
    // every referenced output exists and parses
    const auto report = nlohmann::json::parse(io::read_file(dir / "report.json"));
    std::vector<std::string> files = report["summary_outputs"].get<std::vector<std::string>>();
    for (const auto& m : report["members"])
        for (const auto& f : m["outputs"]) files.push_back(f.get<std::string>());
    EXPECT_EQ(files.size(), 6u * 2 + 3 + 1);
    for (const auto& f : files) {
        ASSERT_TRUE(fs::exists(dir / f)) << f;
        const auto text = io::read_file(dir / f);
        if (fs::path(f).extension() == ".json") EXPECT_NO_THROW((void)nlohmann::json::parse(text)) << f;
        else EXPECT_EQ(text.back(), '\n') << f;
    }
    const auto header = io::read_file(dir / "sudl_l0_m0.csv").substr(0, 50);
    EXPECT_EQ(header.rfind("site_index,distance,D,log_D,in_fit_window\n", 0), 0u);
}

TEST(Harness, ThreadCountDoesNotChangeOutputs) {
    const auto a = scratch("t1"), b = scratch("t4");
    run(parse_config_string(sudl_config), {a, 1, std::nullopt});
    run(parse_config_string(sudl_config), {b, 4, std::nullopt});
    const auto fa = csv_files(a), fb = csv_files(b);
    EXPECT_EQ(fa.size(), 7u);
    EXPECT_EQ(fa, fb);
}

TEST(Harness, SeedOverrideReplacesBaseSeed) {
    const auto dir = scratch("override");
    const auto rep = run(parse_config_string(sudl_config), {dir, 1, 100});
    EXPECT_EQ(rep.members[1].spec.seed, 101u);
    EXPECT_EQ(rep.config["ensemble"]["base_seed"], 100);
}

TEST(Harness, CapacityFailureIsIsolatedAndReported) {
    const auto dir = scratch("cap");
    const auto rep = run(parse_config_string(R"(
kind = "exact"
[lattice]
L = 6
[potential]
lambda_list = [0.0]
[dynamics]
U = 1.0
t_final = 0.2
dt = 0.05
[exact]
N_list = [4]
nnz_budget = 10
[geometry]
r = 1
R = 2
[geometry.phi0.delta]
site = [-3]
)"),
                         {dir, 1, std::nullopt});
    EXPECT_FALSE(rep.pass());
    ASSERT_EQ(rep.members.size(), 1u);
    EXPECT_FALSE(rep.members[0].ok);
    EXPECT_NE(rep.members[0].error.find("exceeds"), std::string::npos);
    const auto j = nlohmann::json::parse(io::read_file(dir / "report.json"));
    EXPECT_EQ(j["members"][0]["status"], "failed");
    EXPECT_FALSE(j["pass"].get<bool>());
}

TEST(Harness, ExactRunWritesSeries) {
    const auto dir = scratch("exact");
    const auto rep = run(parse_config_string(R"(
kind = "exact"
[lattice]
L = 6
[dynamics]
U = 1.0
t_final = 0.5
dt = 0.01
sample_every = 10
[exact]
N_list = [2, 4]
[geometry]
r = 1
R = 2
[geometry.phi0.delta]
site = [-3]
)"),
                         {dir, 1, std::nullopt});
    ASSERT_TRUE(rep.pass()) << rep.members[0].error;
    const auto csv = io::read_file(dir / "exact_l0_m0_N4.csv");
    EXPECT_EQ(csv.rfind("t,N_plus,N_plus_ball,mf_error,energy,norm\n0,0,0,0,", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
    EXPECT_TRUE(fs::exists(dir / "exact_l0_m0_N2_moments.csv"));
}

TEST(Harness, HartreeAndBogoliubovRuns) {
    const std::string geometry = R"(
[lattice]
L = 61
[potential]
lambda_list = [2.0]
[dynamics]
U = 1.0
t_final = 4.0
dt = 0.02
sample_every = 10
[c2]
eps = 2.0
[geometry]
r = 2
R = 6
[geometry.phi0.bump]
center = [10]
width = 1.0
half_window = 2
)";
    const auto dh = scratch("hartree");
    const auto h = run(parse_config_string("kind = \"hartree\"\n" + geometry), {dh, 1, std::nullopt});
    ASSERT_TRUE(h.members[0].ok) << h.members[0].error;
    EXPECT_TRUE(fs::exists(dh / "hartree_l0_m0.csv"));
    EXPECT_TRUE(fs::exists(dh / "hartree_summary.csv"));

    const auto db = scratch("bogoliubov");
    const auto b = run(parse_config_string("kind = \"bogoliubov\"\n" + geometry), {db, 1, std::nullopt});
    ASSERT_TRUE(b.members[0].ok) << b.members[0].error;
    EXPECT_TRUE(b.pass());
    const auto csv = io::read_file(db / "bogoliubov_l0_m0.csv");
    EXPECT_EQ(csv.rfind("t,trace_gamma,local_r2\n", 0), 0u);
    EXPECT_TRUE(fs::exists(db / "bogoliubov_summary.csv"));
}

TEST(Harness, HartreeScanProducesTable) {
    const auto dir = scratch("scan");
    const auto rep = run(parse_config_string(R"(
kind = "lightcone-scan"
[lattice]
L = 81
[potential]
lambda_list = [0.0, 4.0]
[dynamics]
U = 1.0
t_final = 20.0
dt = 0.02
sample_every = 5
[scan]
source = "hartree"
min_members = 2
[ensemble]
size = 2
[output]
formats = ["csv", "json", "svg"]
[geometry]
r = 0
R = 8
front_radii = [0, 2, 4, 6]
[geometry.phi0.bump]
center = [12]
width = 1.0
half_window = 2
)"),
                         {dir, 1, std::nullopt});
    for (const auto& m : rep.members) ASSERT_TRUE(m.ok) << m.error;
    EXPECT_TRUE(rep.errors.empty());
    const auto table = io::read_file(dir / "scan.csv");
    EXPECT_EQ(table.rfind("lambda,v_median,v_q25,v_q75,c_over_log_fit,r2\n", 0), 0u);
    EXPECT_TRUE(fs::exists(dir / "scan.svg"));
    EXPECT_TRUE(fs::exists(dir / "arrivals_summary.csv"));
    // free fronts move at an O(1) speed
    const double v0 = rep.members[0].metrics["epsilon_hat"].get<double>();
    EXPECT_GT(v0, 0.5);
    EXPECT_LT(v0, 3.0);
}
