#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dicke/cli.hpp"
#include "dicke/config.hpp"

using namespace dicke;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("dicke_cli_" + std::to_string(std::rand()) + "_" +
                                            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

fs::path write_file(const fs::path& p, const std::string& text) {
    std::ofstream(p) << text;
    return p;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Run {
    int code;
    std::string out, err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

const char* kScan = "[model]\nN = 1\n[scan]\nV_min = 0.1\nV_max = 3.5\nV_count = 4\ngamma_min = 0.1\ngamma_max = 0.6\ngamma_count = 2\n";

}  // namespace

TEST_CASE("config parsing", "[cli][config]") {
    std::istringstream in("# comment\nmodel.N = 2  # trailing\n[run]\nseed = 18446744073709551615\n");
    Config c = Config::parse(in);
    CHECK(c.get_int("model.N", 0) == 2);
    CHECK(c.get_u64("run.seed", 0) == 18446744073709551615ULL);
    c.set("model.N=5");
    c.set("model.N = 7");
    CHECK(c.get_int("model.N", 0) == 7);
    CHECK_THROWS_AS(c.set("model.bogus=1"), ConfigError);

    std::istringstream dup("model.N = 1\nmodel.N = 2\n");
    CHECK_THROWS_AS(Config::parse(dup), ConfigError);
    std::istringstream unknown("[model]\nVV = 1\n");
    CHECK_THROWS_WITH(Config::parse(unknown), Catch::Matchers::ContainsSubstring("model.VV"));
    std::istringstream bad("model.V = fast\n");
    CHECK_THROWS_AS(model_from_config(Config::parse(bad)), ConfigError);
    std::istringstream neg("run.seed = -3\n");
    CHECK_THROWS_AS(Config::parse(neg).get_u64("run.seed", 0), ConfigError);
}

TEST_CASE("model from config", "[cli][config]") {
    std::istringstream in("[model]\nN = 3\nV = 1.2\ngamma = 0.1\n[modes]\nkind = three_ion\n");
    const ModelParams p = model_from_config(Config::parse(in));
    CHECK(p.modes.count() == 3);
    CHECK(p.omega() == 3.0);
}

TEST_CASE("phase-scan writes the grid CSV", "[cli]") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "scan.cfg", kScan);
    const Run r = run({"phase-scan", "--config", cfg.string(), "--out", tmp.path.string(), "--workers", "1"});
    REQUIRE(r.code == 0);
    const std::string csv = read_file(tmp.path / "phase_grid.csv");
    CHECK(csv.substr(0, csv.find('\n')) ==
          "V,gamma,delta,kappa,n_fixed_points,bright_stable,dark_stable,hopf,limit_cycle,label");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 9);
}

TEST_CASE("phase-scan output is independent of the worker count", "[cli][parallel]") {
    TempDir a, b;
    const auto cfg = write_file(a.path / "scan.cfg", kScan);
    REQUIRE(run({"phase-scan", "--config", cfg.string(), "--out", a.path.string(), "--workers", "1"}).code == 0);
    REQUIRE(run({"phase-scan", "--config", cfg.string(), "--out", b.path.string(), "--workers", "8"}).code == 0);
    CHECK(read_file(a.path / "phase_grid.csv") == read_file(b.path / "phase_grid.csv"));
}

TEST_CASE("trajectory output is reproducible from the seed", "[cli]") {
    TempDir a, b;
    const auto cfg = write_file(a.path / "traj.cfg",
                                "[model]\nN = 2\nV = 0.6\ngamma = 0.3\n[run]\nt_final = 40\nseed = 42\nn_max = 24\n"
                                "n_trajectories = 3\nrecoil = true\n");
    REQUIRE(run({"trajectory", "--config", cfg.string(), "--out", a.path.string(), "--workers", "1"}).code == 0);
    REQUIRE(run({"trajectory", "--config", cfg.string(), "--out", b.path.string(), "--workers", "3"}).code == 0);
    for (const char* f : {"emissions_0.jsonl", "emissions_2.jsonl", "observables_1.csv"}) {
        const std::string x = read_file(a.path / f);
        CHECK_FALSE(x.empty());
        CHECK(x == read_file(b.path / f));
    }
    CHECK(read_file(a.path / "emissions_0.jsonl") != read_file(a.path / "emissions_1.jsonl"));
}

TEST_CASE("a saturated Fock cutoff fails the trajectory run", "[cli][errors]") {
    TempDir a;
    const auto cfg = write_file(a.path / "traj.cfg",
                                "[model]\nN = 1\nV = 0.8\ngamma = 0.3\n[run]\nt_final = 40\nn_max = 2\n");
    const Run r = run({"trajectory", "--config", cfg.string(), "--out", a.path.string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("increase n_max") != std::string::npos);
}

TEST_CASE("dressing prints the effective decay ratio", "[cli]") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "ca.cfg",
                                "[dressing]\ngamma1 = 135.13513513513513\ngamma2 = 9.900990099009901\n"
                                "drive_rabi = 10\ndrive_detuning = 300\nprobe_rabi = 0.2\nprobe_detuning = 0.079\n");
    const Run r = run({"dressing", "--config", cfg.string(), "--out", tmp.path.string()});
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("gamma/Omega = 0.19"));
    CHECK(fs::exists(tmp.path / "dressing.csv"));
}

TEST_CASE("meanfield and fixed-points subcommands", "[cli]") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "m.cfg", "[model]\nV = 1.5\ngamma = 0.1\n[run]\nt_final = 20\n");
    REQUIRE(run({"meanfield", "--config", cfg.string(), "--out", tmp.path.string()}).code == 0);
    CHECK(read_file(tmp.path / "meanfield.csv").rfind("t,ReA,ImA,Jx,Jy,Jz\n", 0) == 0);
    const Run r = run({"fixed-points", "--config", cfg.string(), "--out", tmp.path.string()});
    REQUIRE(r.code == 0);
    const std::string csv = read_file(tmp.path / "fixed_points.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("intermittency from a stored emission record", "[cli]") {
    TempDir tmp;
    std::ofstream rec(tmp.path / "em.jsonl");
    rec << "{\"type\":\"header\",\"N\":1,\"gamma\":0.1,\"seed\":1,\"t_final\":20000,\"recoil\":false}\n";
    for (int k = 0; k < 4000; ++k) rec << "{\"t\":" << 5.0 * k + 0.5 << ",\"ion\":0}\n";
    rec.close();
    const auto cfg = write_file(tmp.path / "i.cfg", "run.emission_file = " + (tmp.path / "em.jsonl").string() + "\n");
    const Run r = run({"intermittency", "--config", cfg.string(), "--out", tmp.path.string()});
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("bimodal=false"));
    CHECK(fs::exists(tmp.path / "dwell.json"));
    CHECK(fs::exists(tmp.path / "binned.csv"));
}

TEST_CASE("exit codes", "[cli][errors]") {
    TempDir tmp;
    const auto good = write_file(tmp.path / "g.cfg", kScan);
    const auto unknown = write_file(tmp.path / "u.cfg", "model.N = 1\nmodel.colour = red\n");
    CHECK(run({"phase-scan", "--config", unknown.string(), "--out", tmp.path.string()}).code == 1);
    CHECK(run({"phase-scan", "--config", good.string(), "--workers", "0", "--out", tmp.path.string()}).code == 1);
    CHECK(run({"phase-scan", "--config", (tmp.path / "missing.cfg").string()}).code == 1);
    CHECK(run({"no-such-command", "--config", good.string()}).code == 1);
    CHECK(run({"phase-scan", "--config", good.string(), "--set", "model.gamma=-1", "--out", tmp.path.string()}).code == 1);
    // Fock space far too small for the coupling: runtime failure.
    const auto sat = write_file(tmp.path / "s.cfg", "[model]\nV = 2\ngamma = 0.3\n[run]\nt_final = 50\nn_max = 3\n");
    CHECK(run({"trajectory", "--config", sat.string(), "--out", tmp.path.string()}).code == 2);
}

TEST_CASE("overrides: last --set wins", "[cli]") {
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "m.cfg", "[model]\nV = 0.1\ngamma = 0.1\n");
    const Run r = run({"fixed-points", "--config", cfg.string(), "--set", "model.V=1.5", "--set", "model.V=3.5",
                       "--out", tmp.path.string()});
    REQUIRE(r.code == 0);
    CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 2);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("Dark"));
}

TEST_CASE("installed binary", "[cli]") {
    const char* exe = std::getenv("DICKE_CLI");
    if (!exe) SKIP("DICKE_CLI not set");
    TempDir tmp;
    const auto cfg = write_file(tmp.path / "ca.cfg", "[dressing]\ngamma1 = 1\ngamma2 = 1\ndrive_rabi = 1\nprobe_rabi = 1\n");
    const std::string base = std::string(exe) + " dressing --config " + cfg.string() + " --out " + tmp.path.string();
    CHECK(std::system((base + " > /dev/null").c_str()) == 0);
    const int bad = std::system((std::string(exe) + " dressing --config /nonexistent > /dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(bad) == 1);
}
