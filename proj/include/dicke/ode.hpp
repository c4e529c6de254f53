// ode.hpp - Embedded Dormand-Prince 5(4) integrator with PI step control and
// fourth-order dense output.
//
// Works on any Eigen column vector (real or complex, fixed or dynamic size).

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace dicke::ode {

struct Tolerances {
    double rtol{1e-9};
    double atol{1e-12};
    double h_max{std::numeric_limits<double>::infinity()};
    double h_min{1e-14};
    long max_steps{100'000'000};
};

/// Thrown when the step size falls below h_min (or the step budget runs out).
class StepSizeUnderflow : public std::runtime_error {
public:
    StepSizeUnderflow(double t, const std::string& why)
        : std::runtime_error(describe(t, why)), time_(t) {}
    double time() const { return time_; }

private:
    static std::string describe(double t, const std::string& why) {
        std::ostringstream os;
        os.precision(17);
        os << why << " at t = " << t;
        return os.str();
    }
    double time_;
};

template <class Vec>
class DormandPrince {
public:
    using Rhs = std::function<void(double t, const Vec& y, Vec& dydt)>;

    DormandPrince(Rhs rhs, Tolerances tol) : rhs_(std::move(rhs)), tol_(tol) {}

    void reset(double t0, const Vec& y0, double h0 = 0.0) {
        t_ = t0;
        t_old_ = t0;
        y_ = y0;
        r1_ = y0;
        r2_ = Vec::Zero(y0.size());
        r3_ = r2_;
        r4_ = r2_;
        r5_ = r2_;
        k1_ = k2_ = k3_ = k4_ = k5_ = k6_ = k7_ = r2_;
        h_old_ = 0.0;
        rhs_(t_, y_, k1_);
        h_ = h0 > 0.0 ? std::min(h0, tol_.h_max) : initial_step();
        facold_ = 1e-4;
        rejected_last_ = false;
    }

    /// Takes one accepted step, never past t_limit. Returns the new time.
    double step(double t_limit) {
        if (!(t_limit > t_)) return t_;
        for (;;) {
            if (++n_steps_ > tol_.max_steps) throw StepSizeUnderflow(t_, "step budget exhausted");
            double h = std::min(h_, tol_.h_max);
            bool last = false;
            if (t_ + 1.01 * h >= t_limit) {
                h = t_limit - t_;
                last = true;
            }
            if (h < tol_.h_min && !last) throw StepSizeUnderflow(t_, "step size underflow");

            attempt(h);
            const double err = error_norm();
            const double fac11 = std::pow(err, kExpo1);
            if (err <= 1.0 && std::isfinite(err)) {
                double fac = fac11 / std::pow(facold_, kBeta);
                fac = std::clamp(fac / kSafe, kFacMin, kFacMax);
                const double h_new = h / fac;
                facold_ = std::max(err, 1e-4);
                accept(h);
                t_ = last ? t_limit : t_ + h;
                h_ = rejected_last_ ? std::min(h_new, h) : h_new;
                rejected_last_ = false;
                return t_;
            }
            const double shrink = std::isfinite(err) ? std::min(kFacMax, fac11 / kSafe) : 10.0;
            h_ = h / shrink;
            rejected_last_ = true;
            if (h_ < tol_.h_min) throw StepSizeUnderflow(t_, "step size underflow");
        }
    }

    /// Dense output on the last accepted step, t in [t_prev(), t()].
    Vec dense(double t) const {
        if (h_old_ == 0.0) return y_;
        const double theta = (t - t_old_) / h_old_;
        const double theta1 = 1.0 - theta;
        return r1_ + theta * (r2_ + theta1 * (r3_ + theta * (r4_ + theta1 * r5_)));
    }

    double t() const { return t_; }
    double t_prev() const { return t_old_; }
    const Vec& y() const { return y_; }
    long steps() const { return n_steps_; }
    const Tolerances& tolerances() const { return tol_; }

private:
    static constexpr double kBeta = 0.04;
    static constexpr double kExpo1 = 0.2 - kBeta * 0.75;
    static constexpr double kSafe = 0.9;
    static constexpr double kFacMin = 0.1;  // h_new <= 10 h
    static constexpr double kFacMax = 5.0;  // h_new >= h / 5

    double initial_step() {
        const auto scale = [&](const Vec& y) {
            return (tol_.atol + tol_.rtol * y.cwiseAbs().array()).matrix();
        };
        const Eigen::VectorXd sc = scale(y_);
        const double d0 = rms(y_.cwiseAbs(), sc);
        const double d1 = rms(k1_.cwiseAbs(), sc);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, tol_.h_max);
        Vec y1 = y_ + h0 * k1_;
        Vec f1 = Vec::Zero(y_.size());
        rhs_(t_ + h0, y1, f1);
        const double d2 = rms((f1 - k1_).cwiseAbs(), sc) / h0;
        const double dm = std::max(d1, d2);
        const double h1 = dm <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dm, 0.2);
        return std::min({100.0 * h0, h1, tol_.h_max});
    }

    template <class A, class B>
    static double rms(const A& v, const B& sc) {
        if (v.size() == 0) return 0.0;
        return std::sqrt((v.array() / sc.array()).square().sum() / static_cast<double>(v.size()));
    }

    void attempt(double h) {
        const double t = t_;
        y_stage_ = y_ + h * (a21 * k1_);
        rhs_(t + c2 * h, y_stage_, k2_);
        y_stage_ = y_ + h * (a31 * k1_ + a32 * k2_);
        rhs_(t + c3 * h, y_stage_, k3_);
        y_stage_ = y_ + h * (a41 * k1_ + a42 * k2_ + a43 * k3_);
        rhs_(t + c4 * h, y_stage_, k4_);
        y_stage_ = y_ + h * (a51 * k1_ + a52 * k2_ + a53 * k3_ + a54 * k4_);
        rhs_(t + c5 * h, y_stage_, k5_);
        y_stage_ = y_ + h * (a61 * k1_ + a62 * k2_ + a63 * k3_ + a64 * k4_ + a65 * k5_);
        rhs_(t + h, y_stage_, k6_);
        y_new_ = y_ + h * (a71 * k1_ + a73 * k3_ + a74 * k4_ + a75 * k5_ + a76 * k6_);
        rhs_(t + h, y_new_, k7_);
        err_ = h * (e1 * k1_ + e3 * k3_ + e4 * k4_ + e5 * k5_ + e6 * k6_ + e7 * k7_);
    }

    double error_norm() const {
        const auto sc = (tol_.atol +
                         tol_.rtol * y_.cwiseAbs().array().max(y_new_.cwiseAbs().array()));
        const double n = static_cast<double>(std::max<Eigen::Index>(1, y_.size()));
        return std::sqrt((err_.cwiseAbs().array() / sc).square().sum() / n);
    }

    void accept(double h) {
        r1_ = y_;
        r2_ = y_new_ - y_;
        r3_ = h * k1_ - r2_;
        r4_ = r2_ - h * k7_ - r3_;
        r5_ = h * (d1 * k1_ + d3 * k3_ + d4 * k4_ + d5 * k5_ + d6 * k6_ + d7 * k7_);
        t_old_ = t_;
        h_old_ = h;
        y_ = y_new_;
        k1_ = k7_;
    }

    // Dormand-Prince 5(4) tableau with Hairer's dense-output coefficients.
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                            a75 = -2187.0 / 6784, a76 = 11.0 / 84;
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
    static constexpr double d1 = -12715105075.0 / 11282082432.0,
                            d3 = 87487479700.0 / 32700410799.0,
                            d4 = -10690763975.0 / 1880347072.0,
                            d5 = 701980252875.0 / 199316789632.0,
                            d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

    Rhs rhs_;
    Tolerances tol_;
    double t_{0.0}, t_old_{0.0}, h_{0.0}, h_old_{0.0};
    double facold_{1e-4};
    bool rejected_last_{false};
    long n_steps_{0};
    Vec y_, y_new_, y_stage_, err_;
    Vec k1_, k2_, k3_, k4_, k5_, k6_, k7_;
    Vec r1_, r2_, r3_, r4_, r5_;
};

/// Integrates from (t0, y0) and returns the state at each requested sample
/// time (ascending, all >= t0) using dense output.
template <class Vec>
std::vector<Vec> integrate_samples(typename DormandPrince<Vec>::Rhs rhs, const Vec& y0, double t0,
                                   const std::vector<double>& sample_times, Tolerances tol) {
    for (std::size_t k = 1; k < sample_times.size(); ++k)
        if (!(sample_times[k] > sample_times[k - 1]))
            throw std::invalid_argument("sample times must be strictly increasing");
    std::vector<Vec> out;
    out.reserve(sample_times.size());
    if (sample_times.empty()) return out;
    DormandPrince<Vec> solver(std::move(rhs), tol);
    solver.reset(t0, y0);
    const double t_end = sample_times.back();
    std::size_t next = 0;
    while (next < sample_times.size() && sample_times[next] <= t0) {
        out.push_back(y0);
        ++next;
    }
    while (next < sample_times.size()) {
        solver.step(t_end);
        while (next < sample_times.size() && sample_times[next] <= solver.t()) {
            out.push_back(sample_times[next] == solver.t() ? solver.y()
                                                            : solver.dense(sample_times[next]));
            ++next;
        }
    }
    return out;
}

}  // namespace dicke::ode
