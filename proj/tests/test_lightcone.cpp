#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "slowcone/lightcone.hpp"
#include "slowcone/onebody.hpp"

using namespace slowcone;

namespace {

FrontSeries series(std::vector<double> values, double dt = 1.0) {
    FrontSeries s;
    s.dt = dt;
    s.values = std::move(values);
    return s;
}

} // namespace

TEST(FrontArrival, Examples) {
    EXPECT_FALSE(front_arrival(series({0, 0, 0, 0}), 1e-3));
    const auto t = front_arrival(series({0, 1, 2, 3, 4}), 2.5);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ(*t, 2.5);
    EXPECT_FALSE(front_arrival(series({0, 1, 2, 3, 4}), 4.5));
    EXPECT_DOUBLE_EQ(*front_arrival(series({5, 6}), 1.0), 0.0);
}

TEST(FrontArrival, RejectsBadInput) {
    EXPECT_THROW(front_arrival(series({}), 1.0), std::invalid_argument);
    EXPECT_THROW(front_arrival(series({0, 1}), 0.0), std::invalid_argument);
    EXPECT_THROW(front_arrival(series({0, -1}), 1.0), std::invalid_argument);
    EXPECT_THROW(front_arrival(series({0, NAN}), 1.0), std::invalid_argument);
}

TEST(VelocityFit, ExactLines) {
    const auto a = velocity_fit({1, 2, 3, 4}, {2, 4, 6, 8});
    EXPECT_NEAR(a.epsilon_hat, 0.5, 1e-12);
    const auto b = velocity_fit({1, 2, 5}, {11, 21, 51});
    EXPECT_NEAR(b.epsilon_hat, 0.1, 1e-12);
    EXPECT_NEAR(b.intercept, 1.0, 1e-12);
    EXPECT_TRUE(b.arrived);
}

TEST(VelocityFit, NoisyLine) {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 0.01);
    std::vector<double> rho, t;
    for (int k = 3; k <= 30; ++k) {
        rho.push_back(k);
        t.push_back((k / 0.7 + 2.0) * (1.0 + noise(rng)));
    }
    EXPECT_NEAR(velocity_fit(rho, t).epsilon_hat, 0.7, 0.05 * 0.7);
}

TEST(VelocityFit, DegenerateInputs) {
    EXPECT_THROW(velocity_fit({1, 2}, {1, 2}), std::invalid_argument);
    EXPECT_THROW(velocity_fit({1, 1, 2}, {1, 2, 3}), std::invalid_argument);
    const auto flat = velocity_fit({1, 2, 3}, {3, 2, 1});
    EXPECT_FALSE(std::isfinite(flat.epsilon_hat));
    EXPECT_EQ(flat.flags.front(), "non-positive slope");
}

TEST(VelocityFit, CensoredArrivals) {
    const auto none = velocity_fit_censored({{4, std::nullopt}, {5, std::nullopt}, {6, std::nullopt}}, 100.0);
    EXPECT_FALSE(none.arrived);
    EXPECT_DOUBLE_EQ(none.epsilon_hat, 0.04);
    EXPECT_EQ(none.flags.front(), "no arrival within horizon");

    const auto some = velocity_fit_censored({{1, 2.0}, {2, 4.0}, {3, 6.0}, {9, std::nullopt}}, 10.0);
    EXPECT_TRUE(some.arrived);
    EXPECT_NEAR(some.epsilon_hat, 0.5, 1e-12);
}

TEST(GrowthRate, RecoversExponent) {
    std::vector<double> v;
    for (int k = 0; k <= 40; ++k) v.push_back(1e-10 * std::exp(0.8 * k * 0.25));
    const auto fit = growth_rate(series(v, 0.25), 1e-4);
    ASSERT_TRUE(fit);
    EXPECT_NEAR(fit->slope, 0.8, 1e-10);
    EXPECT_FALSE(growth_rate(series({0, 0, 0}), 1e-4));
}

// Free chain: |<delta_rho, e^{-ith} delta_0>|^2 = J_rho(2t)^2 switches on near
// t = rho/2, so threshold arrivals trace a front of speed close to 2.
TEST(FreeFront, BesselFrontSpeed) {
    auto box = build_box(1, 201);
    const auto h = assemble_hamiltonian(box, explicit_potential(box, std::vector<double>(201, 0.0)), 0.0);
    const double dt = 0.05;
    const auto grid = uniform_grid(30.0, dt);
    const auto kernel = propagator_kernel(h, box->site_at_offset({0}), grid, Method::eigen, 1e-12);

    std::vector<double> rho, library, oracle;
    for (int d = 10; d <= 40; d += 5) {
        FrontSeries lib = series({}, dt), ref = series({}, dt);
        for (std::size_t k = 0; k < grid.size(); ++k) {
            lib.values.push_back(std::norm(kernel(box->site_at_offset({d}), static_cast<Eigen::Index>(k))));
            const double j = oracle::bessel_j_series(d, 2.0 * grid[k]);
            ref.values.push_back(j * j);
        }
        rho.push_back(d);
        library.push_back(*front_arrival(lib, 1e-4));
        oracle.push_back(*front_arrival(ref, 1e-4));
        EXPECT_NEAR(library.back(), oracle.back(), 1e-6) << d;
    }
    const double v = velocity_fit(rho, library).epsilon_hat;
    EXPECT_GT(v, 1.8);
    EXPECT_LT(v, 2.3);
}

TEST(ThresholdRobustness, Flags) {
    EXPECT_FALSE(threshold_robustness(1.0, 1.1, 0.9).flagged);
    EXPECT_TRUE(threshold_robustness(1.0, 1.3, 0.9).flagged);
    EXPECT_TRUE(threshold_robustness(1.0, INFINITY, 1.0).flagged);
}

TEST(EpsilonScan, SingleRowAndTrend) {
    auto member = [](double v, bool arrived = true) {
        ScanMember m;
        m.fit.epsilon_hat = v;
        m.fit.arrived = arrived;
        return m;
    };
    const auto one = epsilon_scan({5.0}, {{member(1.0), member(2.0), member(3.0)}}, 3);
    ASSERT_EQ(one.rows.size(), 1u);
    EXPECT_DOUBLE_EQ(one.rows[0].v_median, 2.0);
    EXPECT_FALSE(one.c_over_log);

    std::vector<double> lambdas{std::exp(1.0), std::exp(2.0), std::exp(4.0)};
    std::vector<std::vector<ScanMember>> groups;
    for (double l : lambdas) groups.push_back({member(3.0 / std::log(l)), member(3.0 / std::log(l))});
    const auto trend = epsilon_scan(lambdas, groups, 2);
    ASSERT_TRUE(trend.c_over_log);
    EXPECT_NEAR(*trend.c_over_log, 3.0, 1e-12);
    EXPECT_NEAR(trend.r2, 1.0, 1e-12);
    EXPECT_TRUE(trend.decreasing);

    // quantiles do not depend on member order
    const auto a = epsilon_scan({2.0}, {{member(4.0), member(1.0), member(3.0), member(2.0)}}, 4);
    const auto b = epsilon_scan({2.0}, {{member(2.0), member(3.0), member(4.0), member(1.0)}}, 4);
    EXPECT_EQ(a.rows[0].v_q25, b.rows[0].v_q25);
    EXPECT_EQ(a.rows[0].v_q75, b.rows[0].v_q75);

    const auto censored = epsilon_scan({30.0}, {{member(0.1, false), member(0.2)}}, 2);
    EXPECT_EQ(censored.rows[0].censored, 1);
}

TEST(EpsilonScan, Refusals) {
    ScanMember clipped;
    clipped.fit.epsilon_hat = 1.0;
    clipped.clipped = true;
    EXPECT_THROW(epsilon_scan({1.0}, {{clipped}}, 1), std::invalid_argument);
    EXPECT_THROW(epsilon_scan({1.0}, {{ScanMember{}}}, 8), std::invalid_argument);
    EXPECT_THROW(epsilon_scan({}, {}, 1), std::invalid_argument);
}

TEST(ScanOutput, CsvAndSvg) {
    ScanTable t;
    t.rows.push_back({0.0, 2.0, 1.9, 2.1, 8, 0});
    t.rows.push_back({10.0, 0.1, 0.05, 0.2, 8, 2});
    t.c_over_log = 0.25;
    t.r2 = 0.5;
    EXPECT_EQ(scan_csv(t), "lambda,v_median,v_q25,v_q75,c_over_log_fit,r2\n0,2,1.9,2.1,0.25,0.5\n10,0.1,0.05,0.2,0.25,0.5\n");
    const auto svg = scan_svg(t);
    EXPECT_EQ(svg.rfind("<svg", 0), 0u);
    EXPECT_NE(svg.find("</svg>"), std::string::npos);
}
