#include <catch_amalgamated.hpp>

#include <cmath>

#include <Eigen/Dense>

#include "dicke/ode.hpp"

using namespace dicke;
using Catch::Approx;

namespace {

// y'' = -y written as a first-order system; exact solution (cos t, -sin t).
void oscillator(double, const Eigen::Vector2d& y, Eigen::Vector2d& dy) {
    dy = Eigen::Vector2d(y[1], -y[0]);
}

}  // namespace

TEST_CASE("Dormand-Prince follows a harmonic oscillator", "[ode]") {
    ode::Tolerances tol;
    tol.rtol = 1e-10;
    tol.atol = 1e-13;
    std::vector<double> times;
    for (int k = 1; k <= 50; ++k) times.push_back(0.5 * k);
    const auto ys = ode::integrate_samples<Eigen::Vector2d>(oscillator, Eigen::Vector2d(1.0, 0.0), 0.0, times, tol);
    REQUIRE(ys.size() == times.size());
    for (std::size_t k = 0; k < times.size(); ++k) {
        CHECK(std::abs(ys[k][0] - std::cos(times[k])) < 1e-8);
        CHECK(std::abs(ys[k][1] + std::sin(times[k])) < 1e-8);
    }
}

TEST_CASE("dense output interpolates within a step", "[ode]") {
    ode::Tolerances tol;
    tol.rtol = 1e-10;
    tol.atol = 1e-13;
    ode::DormandPrince<Eigen::Vector2d> dp(oscillator, tol);
    dp.reset(0.0, Eigen::Vector2d(1.0, 0.0));
    for (int s = 0; s < 10; ++s) {
        const double t0 = dp.t();
        const double t1 = dp.step(10.0);
        for (double theta : {0.1, 0.37, 0.5, 0.93}) {
            const double t = t0 + theta * (t1 - t0);
            const Eigen::Vector2d y = dp.dense(t);
            CHECK(std::abs(y[0] - std::cos(t)) < 1e-8);
        }
    }
}

TEST_CASE("complex exponential decay", "[ode]") {
    using V = Eigen::VectorXcd;
    const std::complex<double> lam(-0.3, 2.0);
    auto rhs = [&](double, const V& y, V& dy) { dy = lam * y; };
    ode::Tolerances tol;
    tol.rtol = 1e-10;
    tol.atol = 1e-14;
    V y0(1);
    y0[0] = 1.0;
    const auto ys = ode::integrate_samples<V>(rhs, y0, 0.0, {1.0, 5.0}, tol);
    CHECK(std::abs(ys[1][0] - std::exp(lam * 5.0)) < 1e-9);
}

TEST_CASE("tighter tolerance reduces the error", "[ode]") {
    auto err_at = [](double rtol) {
        ode::Tolerances tol;
        tol.rtol = rtol;
        tol.atol = rtol * 1e-3;
        const auto ys = ode::integrate_samples<Eigen::Vector2d>(oscillator, Eigen::Vector2d(1.0, 0.0), 0.0, {20.0}, tol);
        return std::abs(ys[0][0] - std::cos(20.0));
    };
    CHECK(err_at(1e-10) < err_at(1e-6));
}

TEST_CASE("non-increasing sample times are rejected", "[ode][errors]") {
    ode::Tolerances tol;
    CHECK_THROWS_AS(ode::integrate_samples<Eigen::Vector2d>(oscillator, Eigen::Vector2d(1.0, 0.0), 0.0, {2.0, 1.0}, tol),
                    std::invalid_argument);
}
