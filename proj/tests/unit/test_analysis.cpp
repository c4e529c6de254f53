#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dicke/analysis.hpp"

using namespace dicke;
using Catch::Approx;
using quantum::EmissionRecord;

namespace {

// Poisson emissions at `rate` on [0, T).
EmissionRecord poisson_record(double rate, double T, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> wait(rate);
    EmissionRecord rec;
    rec.N = 1;
    rec.t_final = T;
    for (double t = wait(rng); t < T; t += wait(rng)) rec.events.push_back({t, 0, std::nullopt});
    return rec;
}

// Two-state process with exponential dwells; emissions at the current
// state's rate.
EmissionRecord telegraph_record(double bright_rate, double dark_rate, double mean_dwell, double T,
                                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> dwell(1.0 / mean_dwell);
    EmissionRecord rec;
    rec.N = 2;
    rec.t_final = T;
    bool bright = true;
    double t = 0.0;
    int ion = 0;
    while (t < T) {
        const double end = std::min(T, t + dwell(rng));
        std::exponential_distribution<double> wait(bright ? bright_rate : dark_rate);
        for (double s = t + wait(rng); s < end; s += wait(rng)) rec.events.push_back({s, (ion++) % 2, std::nullopt});
        t = end;
        bright = !bright;
    }
    return rec;
}

}  // namespace

TEST_CASE("empty record bins to zeros", "[analysis][binning]") {
    EmissionRecord rec;
    rec.N = 2;
    rec.t_final = 10.0;
    const auto sig = bin_emissions(rec, 1.0);
    CHECK(sig.bins() == 10);
    CHECK(sig.events() == 0);
    for (const auto& ion : sig.per_ion)
        for (long c : ion) CHECK(c == 0);
}

TEST_CASE("half-open bins", "[analysis][binning]") {
    EmissionRecord rec;
    rec.N = 1;
    rec.t_final = 2.0;
    rec.events = {{0.5, 0, std::nullopt}, {1.5, 0, std::nullopt}};
    const auto sig = bin_emissions(rec, 1.0);
    CHECK(sig.total == std::vector<long>{1, 1});
    rec.events = {{1.0, 0, std::nullopt}};
    CHECK(bin_emissions(rec, 1.0).total == std::vector<long>{0, 1});
    CHECK_THROWS_AS(bin_emissions(rec, 0.0), std::invalid_argument);
}

TEST_CASE("Poisson binning statistics", "[analysis][binning]") {
    const auto rec = poisson_record(1.0, 1e4, 1);
    const auto sig = bin_emissions(rec, 10.0);
    REQUIRE(sig.bins() == 1000);
    CHECK(sig.events() == static_cast<long>(rec.events.size()));
    const double mean = static_cast<double>(sig.events()) / sig.bins();
    CHECK(mean == Approx(10.0).margin(0.3));
}

TEST_CASE("binning conserves events per ion", "[analysis][binning][invariant]") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto rec = telegraph_record(1.0, 0.05, 50.0, 3000.0, seed);
        for (double w : {0.7, 3.0, 25.0}) {
            const auto sig = bin_emissions(rec, w);
            CHECK(sig.events() == static_cast<long>(rec.events.size()));
            long per_ion = 0;
            for (const auto& ion : sig.per_ion)
                for (long c : ion) per_ion += c;
            CHECK(per_ion == sig.events());
        }
    }
}

TEST_CASE("constant-rate emission is not bimodal", "[analysis][intermittency]") {
    for (double rate : {0.05, 0.1, 0.3, 1.0, 3.0}) {
        const auto d = detect_intermittency(bin_emissions(poisson_record(rate, 2e4, 7), 10.0));
        CHECK_FALSE(d.bimodal);
    }
}

TEST_CASE("telegraph process is bimodal with recovered dwells", "[analysis][intermittency]") {
    const auto rec = telegraph_record(1.0, 0.01, 200.0, 2e5, 11);
    const auto d = detect_intermittency(bin_emissions(rec, 10.0));
    CHECK(d.bimodal);
    CHECK(d.mean_bright_dwell() == Approx(200.0).epsilon(0.2));
    CHECK(d.mean_dark_dwell() == Approx(200.0).epsilon(0.2));
    CHECK(d.threshold > d.dark_mode);
    CHECK(d.threshold < d.bright_mode);
    for (double x : d.bright_dwells) CHECK(x > 0.0);
    for (double x : d.dark_dwells) CHECK(x > 0.0);
}

TEST_CASE("dwell ratios are invariant under time rescaling", "[analysis][intermittency][invariant]") {
    const auto rec = telegraph_record(1.0, 0.02, 150.0, 1e5, 4);
    const auto base = detect_intermittency(bin_emissions(rec, 10.0));
    for (double c : {2.0, 0.5, 3.0}) {
        auto scaled = rec;
        scaled.t_final *= c;
        for (auto& e : scaled.events) e.t *= c;
        const auto d = detect_intermittency(bin_emissions(scaled, 10.0 * c));
        CHECK(d.bimodal == base.bimodal);
        REQUIRE(d.bright_dwells.size() == base.bright_dwells.size());
        CHECK(d.mean_bright_dwell() / d.mean_dark_dwell() ==
              Approx(base.mean_bright_dwell() / base.mean_dark_dwell()).epsilon(1e-12));
    }
}

TEST_CASE("too few bins is a precondition error", "[analysis][intermittency][errors]") {
    CHECK_THROWS_AS(detect_intermittency(bin_emissions(poisson_record(1.0, 500.0, 1), 10.0)), std::invalid_argument);
}

TEST_CASE("dwell statistics JSON", "[analysis][io]") {
    const auto d = detect_intermittency(bin_emissions(telegraph_record(1.0, 0.01, 200.0, 4e4, 2), 10.0));
    std::ostringstream os;
    write_dwell_json(os, d);
    const auto j = nlohmann::json::parse(os.str());
    CHECK(j.contains("threshold"));
    CHECK(j.at("bright_dwells").size() == d.bright_dwells.size());
    CHECK(j.at("dark_dwells").size() == d.dark_dwells.size());
    CHECK(j.at("bimodal").get<bool>() == d.bimodal);
}

TEST_CASE("phase scan rows follow the grid", "[analysis][phase_scan]") {
    PhaseScanSpec spec;
    spec.V = linspace(0.1, 3.5, 6);
    spec.gamma = {0.1, 0.6};
    const auto serial = phase_scan(spec, 1);
    const auto threaded = phase_scan(spec, 3);
    REQUIRE(serial.rows.size() == 12);
    CHECK(serial.failures.empty());
    std::ostringstream a, b;
    write_phase_grid_csv(a, serial.rows);
    write_phase_grid_csv(b, threaded.rows);
    CHECK(a.str() == b.str());
    CHECK(a.str().rfind("V,gamma,delta,kappa,n_fixed_points,bright_stable,dark_stable,hopf,limit_cycle,label\n", 0) == 0);
    CHECK(serial.rows[0].label == "B");
    CHECK(serial.rows[0].V == Approx(0.1));
    CHECK(serial.rows[6].gamma == Approx(0.6));
}

TEST_CASE("failing cells are reported and the scan continues", "[analysis][phase_scan][errors]") {
    PhaseScanSpec spec;
    spec.V = {0.5, 1.5};
    spec.gamma = {-0.1, 0.1};
    const auto res = phase_scan(spec, 2);
    CHECK(res.rows.size() == 2);
    REQUIRE(res.failures.size() == 2);
    CHECK(res.failures[0].cell == 0);
    CHECK_THAT(res.failures[0].error, Catch::Matchers::ContainsSubstring("spin_decay"));
}

TEST_CASE("linspace", "[analysis]") {
    CHECK(linspace(0.0, 1.0, 3) == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(linspace(2.0, 5.0, 1) == std::vector<double>{2.0});
    CHECK_THROWS_AS(linspace(0.0, 1.0, 0), std::invalid_argument);
}
