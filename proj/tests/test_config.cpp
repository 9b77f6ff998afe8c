#include <gtest/gtest.h>

#include "slowcone/config.hpp"

using namespace slowcone;

namespace {

const char* minimal_sudl = R"(
kind = "sudl"
[lattice]
L = 64
[potential]
lambda = 5.0
)";

const char* cone_base = R"(
kind = "hartree"
[lattice]
L = 121
[potential]
lambda = 10.0
[dynamics]
U = 1.0
t_final = 40.0
)";

bool has_issue(const ConfigError& e, const std::string& path, const std::string& text) {
    for (const auto& i : e.issues())
        if (i.path == path && i.message.find(text) != std::string::npos) return true;
    return false;
}

ConfigError validation_error(const std::string& toml) {
    try {
        validate_config(parse_config_string(toml));
    } catch (const ConfigError& e) {
        return e;
    }
    ADD_FAILURE() << "expected a ConfigError";
    return ConfigError({});
}

} // namespace

TEST(Config, MinimalSudlEchoesDefaults) {
    const auto c = parse_config_string(minimal_sudl);
    EXPECT_NO_THROW(validate_config(c));
    const auto echo = config_echo(c);
    EXPECT_EQ(echo["kind"], "sudl");
    EXPECT_EQ(echo["lattice"]["d"], 1);
    EXPECT_EQ(echo["lattice"]["bc"], "open");
    EXPECT_EQ(echo["potential"]["family"], "quasiperiodic");
    EXPECT_EQ(echo["dynamics"]["method"], "auto");
    EXPECT_EQ(echo["ensemble"]["size"], 1);
    EXPECT_FALSE(echo.contains("output") && echo["output"].contains("directory"));
}

TEST(Config, HashIgnoresOutputDirectoryOnly) {
    auto a = parse_config_string(minimal_sudl);
    auto b = a;
    b.output.directory = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.potential.lambdas = {6.0};
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, UnknownKeysAreErrors) {
    try {
        parse_config_string(std::string(minimal_sudl) + "[dynamics]\nstep = 0.1\n");
        FAIL() << "unknown key accepted";
    } catch (const ConfigError& e) {
        EXPECT_TRUE(has_issue(e, "dynamics.step", "unknown key"));
    }
    EXPECT_THROW(parse_config_string("colour = 1\n[lattice]\nL = 8\n"), ConfigError);
}

TEST(Config, TypeErrorsAndSyntaxErrors) {
    EXPECT_THROW(parse_config_string("[lattice]\nL = \"big\"\n"), ConfigError);
    EXPECT_THROW(parse_config_string("[lattice\nL = 3\n"), ConfigError);
    EXPECT_THROW(parse_config_string("kind = \"mystery\"\n[lattice]\nL = 8\n"), ConfigError);
}

TEST(Config, ConeNeedsRGeqTwoR) {
    const auto e = validation_error(std::string(cone_base) +
                                    "[geometry]\nr = 3\nR = 5\n[geometry.phi0.bump]\ncenter = [30]\nwidth = 1.0\n");
    EXPECT_TRUE(has_issue(e, "geometry.R", "R >= 2r violated"));
}

TEST(Config, DeltaAtOriginIntersectsBall) {
    const auto e = validation_error(std::string(cone_base) +
                                    "[geometry]\nr = 3\nR = 10\n[geometry.phi0.delta]\nsite = [0]\n");
    EXPECT_TRUE(has_issue(e, "geometry.phi0", "support intersects B_R"));
}

TEST(Config, PaddingRule) {
    // bump reaches offset 53, half-width 60 < 53 + 10
    const auto e = validation_error(std::string(cone_base) +
                                    "[geometry]\nr = 3\nR = 20\n[geometry.phi0.bump]\ncenter = [50]\nwidth = 1.0\n");
    EXPECT_TRUE(has_issue(e, "lattice.L", "padding rule violated"));
}

TEST(Config, HartreeHorizon) {
    const auto e = validation_error(std::string(cone_base) +
                                    "[c2]\neps = 0.25\n[geometry]\nr = 3\nR = 20\n[geometry.phi0.bump]\ncenter = [25]\nwidth = 1.0\n");
    EXPECT_TRUE(has_issue(e, "dynamics.t_final", "horizon"));
}

TEST(Config, ValidConeConfig) {
    const auto c = parse_config_string(std::string(cone_base) +
                                       "[geometry]\nr = 3\nR = 20\n[geometry.phi0.bump]\ncenter = [25]\nwidth = 1.0\n");
    EXPECT_NO_THROW(validate_config(c));
    const auto init = build_phi0(build_box(1, 121), c.geometry.phi0);
    EXPECT_NEAR(init.phi.norm(), 1.0, 1e-14);
    EXPECT_EQ(support_inner_radius(init.phi, Norm::l1), 22);
    EXPECT_EQ(support_radius(init.phi, Norm::l1), 28);
}

TEST(Config, LambdaListAndExactN) {
    const auto c = parse_config_string(R"(
kind = "exact"
[lattice]
L = 6
[potential]
lambda_list = [0.0, 2.0]
[exact]
N_list = [4, 8]
)");
    EXPECT_EQ(c.potential.lambdas, (std::vector<double>{0.0, 2.0}));
    EXPECT_EQ(c.exact.N, (std::vector<int>{4, 8}));
    EXPECT_THROW(parse_config_string("[lattice]\nL = 6\n[potential]\nlambda = 1.0\nlambda_list = [2.0]\n"), ConfigError);
}

TEST(Config, ExactParticleRange) {
    const auto e = validation_error(R"(
kind = "exact"
[lattice]
L = 6
[exact]
N = 300
[geometry]
r = 1
R = 2
[geometry.phi0.delta]
site = [-3]
)");
    EXPECT_TRUE(has_issue(e, "exact.N", "[1, 255]"));
}
