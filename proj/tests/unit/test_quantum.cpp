#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "dicke/quantum.hpp"

using namespace dicke;
using namespace dicke::quantum;
using Catch::Approx;

namespace {

ModelParams params(int N, double V, double gamma, double delta = 0.0) {
    ModelParams p;
    p.N = N;
    p.coupling = V;
    p.spin_decay = gamma;
    p.detuning = delta;
    return validate_params(p);
}

HilbertSpec space(int N, int n_max) {
    HilbertSpec h;
    h.N = N;
    h.modes = {0};
    h.cutoffs = {n_max};
    return h;
}

}  // namespace

TEST_CASE("Hamiltonian is Hermitian", "[quantum]") {
    const ModelParams p = params(3, 0.7, 0.2, -0.1);
    const Eigen::MatrixXcd H(build_hamiltonian(p, space(3, 5)));
    CHECK((H - H.adjoint()).norm() < 1e-14);
}

TEST_CASE("decoupled spectrum", "[quantum]") {
    const ModelParams p = params(1, 0.0, 0.0);
    const Eigen::MatrixXcd H(build_hamiltonian(p, space(1, 2)));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
    const Eigen::VectorXd ev = es.eigenvalues();
    const std::vector<double> want = {-0.5, 0.5, 0.5, 1.5, 1.5, 2.5};
    REQUIRE(ev.size() == 6);
    for (int k = 0; k < 6; ++k) CHECK(ev[k] == Approx(want[k]).margin(1e-12));
}

TEST_CASE("spin-phonon matrix element", "[quantum]") {
    const double V = 0.8;
    const ModelParams p = params(2, V, 0.0);
    const HilbertSpec h = space(2, 3);
    const Eigen::MatrixXcd H(build_hamiltonian(p, h));
    const StateVector a = basis_state(h, 0b00, {1});
    const StateVector b = basis_state(h, 0b00, {0});
    CHECK(a.dot(H * b).real() == Approx(-V).margin(1e-14));
    const StateVector c = basis_state(h, 0b11, {2});
    const StateVector d = basis_state(h, 0b11, {1});
    CHECK(c.dot(H * d).real() == Approx(V * std::sqrt(2.0)).margin(1e-14));
}

TEST_CASE("lowering operators", "[quantum]") {
    const HilbertSpec h = space(2, 3);
    const StateVector up = basis_state(h, 0b10, {2});
    CHECK((spin_lowering(h, 1) * up - basis_state(h, 0b00, {2})).norm() < 1e-15);
    CHECK((spin_lowering(h, 0) * up).norm() == 0.0);
    CHECK((mode_lowering(h, 0) * up - std::sqrt(2.0) * basis_state(h, 0b10, {1})).norm() < 1e-14);
}

TEST_CASE("vacuum displacement element", "[quantum][recoil]") {
    const Eigen::MatrixXcd D = displacement_operator(0.1, 1.0, 10);
    CHECK(std::abs(D(0, 0) - std::exp(-0.005)) < 1e-7);
    CHECK(std::abs(D(0, 0).real() - 0.9950125) < 1e-7);
    CHECK((D.adjoint() * D - Eigen::MatrixXcd::Identity(11, 11)).norm() < 1e-12);
}

TEST_CASE("recoil direction density", "[quantum][recoil]") {
    double integral = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) integral += recoil_density(-1.0 + (k + 0.5) * 2.0 / n) * 2.0 / n;
    CHECK(integral == Approx(1.0).margin(1e-6));
    CHECK(recoil_density(1.5) == 0.0);

    std::mt19937_64 rng(99);
    double m1 = 0.0, m2 = 0.0;
    const int samples = 1000000;
    for (int k = 0; k < samples; ++k) {
        const double x = sample_recoil_x(rng);
        REQUIRE(std::abs(x) <= 1.0);
        m1 += x;
        m2 += x * x;
    }
    CHECK(std::abs(m1 / samples) < 0.003);
    CHECK(m2 / samples == Approx(0.4).margin(0.002));
}

TEST_CASE("jump operators reproduce the excited-state decay", "[quantum]") {
    const ModelParams p = params(2, 0.5, 0.3);
    const HilbertSpec h = space(2, 2);
    const JumpFamily fam = build_jump_operators(p, h, RecoilSpec{});
    REQUIRE(fam.ops.size() == 2);
    for (int i = 0; i < 2; ++i) {
        const Eigen::MatrixXcd L(fam.ops[i]);
        const Eigen::MatrixXcd LL = L.adjoint() * L;
        for (Eigen::Index k = 0; k < LL.rows(); ++k) {
            const bool up = (k % 4) & (1 << i);
            CHECK(LL(k, k).real() == Approx(up ? 0.3 : 0.0).margin(1e-15));
        }
        CHECK((LL - Eigen::MatrixXcd(LL.diagonal().asDiagonal())).norm() < 1e-15);
    }
}

TEST_CASE("dimension limit", "[quantum][errors]") {
    const ModelParams p = params(3, 1.0, 0.1);
    HilbertSpec h = space(3, 10);
    h.max_dimension = 50;
    CHECK_THROWS_AS(h.validate(p), DimensionError);
    CHECK_THROWS_AS(space(2, 10).validate(p), DimensionError);
}

TEST_CASE("default cutoff", "[quantum]") {
    const ModelParams p = params(1, 2.0, 0.1);
    CHECK(default_fock_cutoff(p) == 17);
    ModelParams three = params(3, 1.5, 0.1);
    three.modes = normal_modes_3ion(three.omega(), 1.5);
    const HilbertSpec h = default_hilbert(three);
    CHECK(h.modes == std::vector<int>{0, 1});
}

TEST_CASE("steady emission rate of a driven decaying spin", "[quantum][mcwf]") {
    const ModelParams p = params(1, 0.0, 0.15);
    McwfOptions opt;
    opt.t_final = 2e4;
    opt.seed = 2024;
    opt.rtol = 1e-7;
    const auto res = mcwf_trajectory(ground_state(space(1, 2)), p, space(1, 2), RecoilSpec{}, opt);
    const double n = static_cast<double>(res.record.events.size());
    const double rate = 0.15 * (0.5 - (0.15 * 0.15 / 4.0) / (1.0 + 0.15 * 0.15 / 2.0));
    CHECK(rate == Approx(0.0741656).margin(1e-7));
    CHECK(std::abs(n / opt.t_final - rate) < 4.0 * std::sqrt(n) / opt.t_final);
}

TEST_CASE("norm decays monotonically between emissions", "[quantum][mcwf][invariant]") {
    const ModelParams p = params(2, 0.6, 0.3);
    McwfOptions opt;
    opt.cutoff_guard = 1.0;  // truncated space shared by every run compared here
    opt.t_final = 200.0;
    opt.seed = 17;
    opt.log_norms = true;
    const auto res = mcwf_trajectory(ground_state(space(2, 10)), p, space(2, 10), RecoilSpec{}, opt);
    REQUIRE(res.norm_log.size() > 100);
    REQUIRE_FALSE(res.record.events.empty());
    int violations = 0;
    for (std::size_t k = 1; k < res.norm_log.size(); ++k)
        if (!res.norm_log[k].jump && res.norm_log[k].norm2 > res.norm_log[k - 1].norm2) ++violations;
    CHECK(violations == 0);
}

TEST_CASE("trajectories are reproducible from the seed", "[quantum][mcwf]") {
    const ModelParams p = params(2, 0.6, 0.3);
    McwfOptions opt;
    opt.cutoff_guard = 1.0;  // truncated space shared by every run compared here
    opt.t_final = 100.0;
    opt.seed = 5;
    opt.sample_times = {10.0, 50.0, 100.0};
    const HilbertSpec h = space(2, 10);
    const auto a = mcwf_trajectory(ground_state(h), p, h, RecoilSpec{}, opt);
    const auto b = mcwf_trajectory(ground_state(h), p, h, RecoilSpec{}, opt);
    REQUIRE(a.record.events.size() == b.record.events.size());
    for (std::size_t k = 0; k < a.record.events.size(); ++k) {
        CHECK(a.record.events[k].t == b.record.events[k].t);
        CHECK(a.record.events[k].ion == b.record.events[k].ion);
    }
    CHECK(a.series.Jz == b.series.Jz);
    opt.seed = 6;
    const auto c = mcwf_trajectory(ground_state(h), p, h, RecoilSpec{}, opt);
    CHECK(c.series.Jz != a.series.Jz);
}

TEST_CASE("zero recoil strength reproduces the recoil-free trajectory", "[quantum][recoil]") {
    const ModelParams p = params(2, 0.9, 0.3);
    const HilbertSpec h = space(2, 12);
    McwfOptions opt;
    opt.cutoff_guard = 1.0;  // truncated space shared by every run compared here
    opt.t_final = 150.0;
    opt.seed = 8;
    opt.sample_times = {50.0, 100.0, 150.0};
    const auto off = mcwf_trajectory(ground_state(h), p, h, RecoilSpec{false, 0.1}, opt);
    const auto zero = mcwf_trajectory(ground_state(h), p, h, RecoilSpec{true, 0.0}, opt);
    REQUIRE(off.record.events.size() == zero.record.events.size());
    for (std::size_t k = 0; k < off.record.events.size(); ++k) {
        CHECK(off.record.events[k].t == zero.record.events[k].t);
        CHECK(off.record.events[k].ion == zero.record.events[k].ion);
        CHECK(zero.record.events[k].x.has_value());
    }
    CHECK(off.series.Jz == zero.series.Jz);
    CHECK(off.series.n[0] == zero.series.n[0]);

    const auto kicked = mcwf_trajectory(ground_state(h), p, h, RecoilSpec{true, 0.5}, opt);
    CHECK(kicked.series.n[0] != off.series.n[0]);
}

TEST_CASE("cutoff saturation is reported with a resize hint", "[quantum][errors]") {
    const ModelParams p = params(1, 2.0, 0.3);
    const HilbertSpec h = space(1, 3);
    McwfOptions opt;
    opt.t_final = 50.0;
    CHECK_THROWS_WITH(mcwf_trajectory(ground_state(h), p, h, RecoilSpec{}, opt),
                      Catch::Matchers::ContainsSubstring("n_max"));
}

TEST_CASE("resize_fock embeds and truncates states exactly", "[quantum]") {
    const HilbertSpec small = space(2, 3), big = space(2, 7);
    StateVector psi = StateVector::Zero(static_cast<Eigen::Index>(small.dimension()));
    psi += basis_state(small, 0b01, {2}) * cplx(0.6, 0.0);
    psi += basis_state(small, 0b10, {3}) * cplx(0.0, 0.8);
    const StateVector up = resize_fock(small, big, psi);
    CHECK(up.norm() == Approx(1.0));
    CHECK(std::abs(basis_state(big, 0b01, {2}).dot(up) - 0.6) < 1e-15);
    CHECK(std::abs(basis_state(big, 0b10, {3}).dot(up) - cplx(0.0, 0.8)) < 1e-15);
    CHECK((resize_fock(big, small, up) - psi).norm() == 0.0);
    CHECK_THROWS_AS(resize_fock(big, space(2, 2), up), DimensionError);
    CHECK_THROWS_AS(resize_fock(small, space(3, 7), psi), DimensionError);
}

TEST_CASE("a growing cutoff follows a run in a large fixed space", "[quantum][mcwf]") {
    const ModelParams p = params(1, 2.0, 0.3);
    McwfOptions opt;
    opt.t_final = 20.0;
    opt.seed = 21;
    opt.sample_times = {5.0, 10.0, 15.0, 20.0};
    opt.log_norms = true;
    opt.grow_cutoff = true;
    const HilbertSpec h = space(1, 3);
    const auto grown = mcwf_trajectory(ground_state(h), p, h, RecoilSpec{}, opt);
    CHECK(grown.cutoff_growths > 0);
    REQUIRE(grown.cutoffs.size() == 1);
    CHECK(grown.cutoffs[0] > 3);
    CHECK(grown.max_top_population < 1e-5);
    for (std::size_t k = 1; k < grown.norm_log.size(); ++k)
        if (!grown.norm_log[k].jump) CHECK(grown.norm_log[k].norm2 <= grown.norm_log[k - 1].norm2);

    opt.grow_cutoff = false;
    opt.cutoff_guard = 1.0;
    const HilbertSpec wide = space(1, 60);
    const auto fixed = mcwf_trajectory(ground_state(wide), p, wide, RecoilSpec{}, opt);
    CHECK(fixed.max_top_population < 1e-8);
    REQUIRE_FALSE(fixed.record.events.empty());
    REQUIRE(grown.record.events.size() == fixed.record.events.size());
    for (std::size_t k = 0; k < fixed.record.events.size(); ++k)
        CHECK(std::abs(grown.record.events[k].t - fixed.record.events[k].t) < 1e-3);
    for (std::size_t k = 0; k < opt.sample_times.size(); ++k) {
        CHECK(std::abs(grown.series.Jz[k] - fixed.series.Jz[k]) < 1e-4);
        CHECK(std::abs(grown.series.n[0][k] - fixed.series.n[0][k]) < 1e-3);
        CHECK(std::abs(grown.series.A[0][k] - fixed.series.A[0][k]) < 1e-3);
    }
}

TEST_CASE("cutoff growth stops at the dimension limit", "[quantum][errors]") {
    const ModelParams p = params(1, 2.0, 0.3);
    HilbertSpec h = space(1, 3);
    h.max_dimension = 12;
    McwfOptions opt;
    opt.t_final = 50.0;
    opt.grow_cutoff = true;
    CHECK_THROWS_AS(mcwf_trajectory(ground_state(h), p, h, RecoilSpec{}, opt), CutoffSaturation);
}

TEST_CASE("unnormalised initial state is rejected", "[quantum][errors]") {
    const ModelParams p = params(1, 0.5, 0.3);
    const HilbertSpec h = space(1, 4);
    CHECK_THROWS_AS(mcwf_trajectory(2.0 * ground_state(h), p, h, RecoilSpec{}, McwfOptions{}), std::invalid_argument);
}

TEST_CASE("Lindblad oracle relaxes to the Bloch steady state", "[quantum][oracle]") {
    const double g = 0.4;
    const ModelParams p = params(1, 0.0, g);
    const HilbertSpec h = space(1, 1);
    const StateVector psi = ground_state(h);
    const auto rho = lindblad_oracle(psi * psi.adjoint(), p, h, {1.0, 80.0});
    for (const auto& r : rho) {
        CHECK(std::abs(r.trace() - 1.0) < 1e-10);
        CHECK((r - r.adjoint()).norm() < 1e-10);
    }
    CHECK(expectation_Jz(h, rho.back()) == Approx(-(g * g / 4.0) / (1.0 + g * g / 2.0)).margin(1e-8));
}

TEST_CASE("oracle size limit", "[quantum][oracle][errors]") {
    const ModelParams p = params(3, 1.0, 0.1);
    const HilbertSpec h = space(3, 20);
    CHECK_THROWS_AS(lindblad_oracle(DensityMatrix::Identity(168, 168) / 168.0, p, h, {1.0}), DimensionError);
}

TEST_CASE("small ensemble agrees with the oracle", "[quantum][oracle][mcwf]") {
    const ModelParams p = params(2, 0.4, 0.5);
    const HilbertSpec h = space(2, 6);
    McwfOptions opt;
    opt.cutoff_guard = 1.0;  // truncated space shared by every run compared here
    opt.t_final = 8.0;
    opt.seed = 77;
    opt.sample_times = {1.0, 2.0, 4.0, 8.0};
    const StateVector psi = ground_state(h);
    const auto avg = mcwf_ensemble(psi, p, h, RecoilSpec{}, opt, 400, 1);
    const auto rho = lindblad_oracle(psi * psi.adjoint(), p, h, opt.sample_times);
    for (std::size_t k = 0; k < rho.size(); ++k)
        CHECK(std::abs(avg.mean_Jz[k] - expectation_Jz(h, rho[k])) < 4.0 * avg.stderr_Jz[k] + 1e-12);
}

TEST_CASE("ensemble averages do not depend on the worker count", "[quantum][mcwf][parallel]") {
    const ModelParams p = params(1, 0.5, 0.3);
    const HilbertSpec h = space(1, 8);
    McwfOptions opt;
    opt.cutoff_guard = 1.0;  // truncated space shared by every run compared here
    opt.t_final = 10.0;
    opt.seed = 3;
    opt.sample_times = {5.0, 10.0};
    const auto a = mcwf_ensemble(ground_state(h), p, h, RecoilSpec{}, opt, 24, 1);
    const auto b = mcwf_ensemble(ground_state(h), p, h, RecoilSpec{}, opt, 24, 4);
    CHECK(a.mean_Jz == b.mean_Jz);
    CHECK(a.emissions_per_ion == b.emissions_per_ion);
}

TEST_CASE("emission record JSON-lines round trip", "[quantum][io]") {
    const ModelParams p = params(2, 0.9, 0.3);
    EmissionRecord rec;
    rec.N = 2;
    rec.seed = 18446744073709551615ULL;
    rec.t_final = 10.0;
    rec.recoil = true;
    rec.events = {{0.125, 1, 0.5}, {3.0, 0, -0.25}};
    std::stringstream ss;
    write_emission_jsonl(ss, rec, p, RecoilSpec{true, 0.1});
    const EmissionRecord back = read_emission_jsonl(ss);
    CHECK(back.seed == rec.seed);
    CHECK(back.N == 2);
    REQUIRE(back.events.size() == 2);
    CHECK(back.events[0].t == 0.125);
    CHECK(back.events[1].ion == 0);
    CHECK(back.events[1].x == -0.25);
    CHECK(back.counts_per_ion() == std::vector<int>{1, 1});
}

TEST_CASE("observables CSV header", "[quantum][io]") {
    ObservableSeries s;
    s.n.resize(2);
    s.A.resize(2);
    std::ostringstream os;
    write_observables_csv(os, s);
    CHECK(os.str() == "t,Jz,n_1,n_2,ReA_1,ReA_2,ImA_1,ImA_2\n");
}
