#include "dicke/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dicke/analysis.hpp"
#include "dicke/config.hpp"
#include "dicke/dressing.hpp"
#include "dicke/fixed_points.hpp"
#include "dicke/io.hpp"
#include "dicke/meanfield.hpp"
#include "dicke/parallel.hpp"
#include "dicke/quantum.hpp"

namespace dicke {

namespace {

namespace fs = std::filesystem;

struct Context {
    Config cfg;
    fs::path out_dir;
    int workers{1};
    std::ostream& out;
    std::ostream& err;
};

IntegrationOptions integration_options(const Config& c) {
    IntegrationOptions o;
    o.rtol = c.get_double("run.rtol", o.rtol);
    o.atol = c.get_double("run.atol", o.atol);
    return o;
}

quantum::HilbertSpec hilbert_from_config(const Config& c, const ModelParams& p) {
    quantum::HilbertSpec h = quantum::default_hilbert(p);
    if (c.has("quantum.modes")) {
        h.modes.clear();
        for (double m : c.get_doubles("quantum.modes")) {
            if (m != std::floor(m) || m < 1) throw ConfigError("quantum.modes lists 1-based mode numbers");
            h.modes.push_back(static_cast<int>(m) - 1);
        }
    }
    const long n_max = c.get_int("run.n_max", 0);
    if (n_max < 0) throw ConfigError("run.n_max must be >= 0");
    h.cutoffs.assign(h.modes.size(), n_max > 0 ? static_cast<int>(n_max) : quantum::default_fock_cutoff(p));
    h.validate(p);
    return h;
}

quantum::RecoilSpec recoil_from_config(const Config& c) {
    quantum::RecoilSpec r;
    r.enabled = c.get_bool("run.recoil", false);
    r.eta = c.get_double("run.eta", r.eta);
    return r;
}

int cmd_meanfield(Context& ctx) {
    const ModelParams p = model_from_config(ctx.cfg);
    const MeanFieldState s0 = initial_state_from_config(ctx.cfg);
    const double t_final = ctx.cfg.get_double("run.t_final", 100.0);
    const auto times = sample_grid(t_final, ctx.cfg.get_double("run.dt_sample", 0.1));
    const auto opt = integration_options(ctx.cfg);
    const fs::path path = ctx.out_dir / "meanfield.csv";
    if (p.modes.single_mode()) {
        const auto traj = integrate(s0, p, times, opt);
        io::write_atomically(path, [&](std::ostream& os) { write_trajectory_csv(os, traj); });
        const auto& last = traj.states.back();
        ctx.out << "meanfield t=" << io::fmt(t_final) << " Jz=" << io::fmt(last.J.z())
                << " ReA=" << io::fmt(last.A.real()) << " ImA=" << io::fmt(last.A.imag()) << '\n';
    } else {
        const auto traj = integrate(embed_collective(s0, p.modes.count(), p.N), p, times, opt);
        io::write_atomically(path, [&](std::ostream& os) { write_trajectory_csv(os, traj); });
        const MeanFieldState last = collective_of(traj.states.back());
        ctx.out << "meanfield t=" << io::fmt(t_final) << " Jz=" << io::fmt(last.J.z())
                << " ReA_1=" << io::fmt(last.A.real()) << '\n';
    }
    ctx.out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int cmd_fixed_points(Context& ctx) {
    const ModelParams p = model_from_config(ctx.cfg);
    const fs::path path = ctx.out_dir / "fixed_points.csv";
    if (p.modes.single_mode()) {
        const auto search = find_fixed_points(p);
        if (search.points.empty()) {
            ctx.err << "no fixed point found: " << search.diagnostic << '\n';
            return kExitRuntime;
        }
        io::write_atomically(path, [&](std::ostream& os) {
            os << "index,ReA,ImA,Jx,Jy,Jz,residual,max_real,stability,branch\n";
            for (std::size_t k = 0; k < search.points.size(); ++k) {
                const auto& f = search.points[k];
                os << k << ',' << io::fmt(f.state.A.real()) << ',' << io::fmt(f.state.A.imag()) << ','
                   << io::fmt(f.state.J.x()) << ',' << io::fmt(f.state.J.y()) << ',' << io::fmt(f.state.J.z())
                   << ',' << io::fmt(f.residual) << ',' << io::fmt(f.max_real()) << ','
                   << to_string(f.stability) << ',' << to_string(f.branch) << '\n';
            }
        });
        for (const auto& f : search.points)
            ctx.out << "fixed point Jz=" << io::fmt(f.state.J.z()) << " |A|=" << io::fmt(std::abs(f.state.A))
                    << ' ' << to_string(f.stability) << ' ' << to_string(f.branch) << '\n';
    } else {
        const auto search = find_multimode_fixed_points(p);
        if (search.points.empty()) {
            ctx.err << "no fixed point found: " << search.diagnostic << '\n';
            return kExitRuntime;
        }
        io::write_atomically(path, [&](std::ostream& os) {
            os << "index,homogeneous,Jz,ReA_1,ImA_1,residual,max_real,stability,branch\n";
            for (std::size_t k = 0; k < search.points.size(); ++k) {
                const auto& f = search.points[k];
                const MeanFieldState c = collective_of(f.state);
                os << k << ',' << is_homogeneous(f.state) << ',' << io::fmt(c.J.z()) << ','
                   << io::fmt(c.A.real()) << ',' << io::fmt(c.A.imag()) << ',' << io::fmt(f.residual) << ','
                   << io::fmt(f.max_real()) << ',' << to_string(f.stability) << ',' << to_string(f.branch)
                   << '\n';
            }
        });
        for (const auto& f : search.points)
            ctx.out << "fixed point Jz=" << io::fmt(collective_of(f.state).J.z())
                    << (is_homogeneous(f.state) ? " homogeneous " : " inhomogeneous ")
                    << to_string(f.stability) << '\n';
    }
    ctx.out << "wrote " << path.string() << '\n';
    return kExitOk;
}

int cmd_phase_scan(Context& ctx) {
    const Config& c = ctx.cfg;
    PhaseScanSpec spec;
    spec.base = model_from_config(c);
    if (!spec.base.modes.single_mode()) throw ConfigError("phase-scan uses the single centre-of-mass mode");
    spec.V = linspace(c.get_double("scan.V_min", 0.0), c.get_double("scan.V_max", 3.0),
                      static_cast<int>(c.get_int("scan.V_count", 31)));
    spec.gamma = linspace(c.get_double("scan.gamma_min", 0.02), c.get_double("scan.gamma_max", 1.0),
                          static_cast<int>(c.get_int("scan.gamma_count", 20)));
    spec.limit_cycle.t_total = c.get_double("scan.lc_t_total", spec.limit_cycle.t_total);
    spec.check_intermittency = c.get_bool("scan.intermittency", false);
    spec.intermittency_t_final = c.get_double("run.t_final", spec.intermittency_t_final);
    spec.intermittency_n_max = static_cast<int>(c.get_int("run.n_max", 0));
    spec.seed = c.get_u64("run.seed", spec.seed);

    const PhaseScanResult res = phase_scan(spec, ctx.workers);
    const fs::path path = ctx.out_dir / "phase_grid.csv";
    io::write_atomically(path, [&](std::ostream& os) { write_phase_grid_csv(os, res.rows); });
    for (const auto& r : res.rows) {
        ctx.out << "cell V=" << io::fmt(r.V) << " gamma=" << io::fmt(r.gamma) << ' ' << r.label;
        if (r.intermittent) ctx.out << (*r.intermittent ? " intermittent" : " steady");
        if (!r.diagnostic.empty()) ctx.out << " (" << r.diagnostic << ')';
        ctx.out << '\n';
    }
    for (const auto& f : res.failures)
        ctx.err << "cell " << f.cell << " V=" << io::fmt(f.V) << " gamma=" << io::fmt(f.gamma)
                << " failed: " << f.error << '\n';
    ctx.out << "wrote " << path.string() << " (" << res.rows.size() << " rows, " << res.failures.size()
            << " failed cells)\n";
    return res.rows.empty() ? kExitRuntime : kExitOk;
}

int cmd_trajectory(Context& ctx) {
    const Config& c = ctx.cfg;
    const ModelParams p = model_from_config(c);
    const quantum::HilbertSpec h = hilbert_from_config(c, p);
    const quantum::RecoilSpec r = recoil_from_config(c);
    const long n_traj = c.get_int("run.n_trajectories", 1);
    if (n_traj < 1) throw ConfigError("run.n_trajectories must be >= 1");
    quantum::McwfOptions opt;
    opt.t_final = c.get_double("run.t_final", 100.0);
    opt.seed = c.get_u64("run.seed", 1);
    opt.dt_max = c.get_double("run.dt_max", opt.dt_max);
    opt.rtol = c.get_double("run.rtol", opt.rtol);
    opt.atol = c.get_double("run.atol", opt.atol);
    opt.cutoff_guard = c.get_double("run.cutoff_guard", opt.cutoff_guard);
    opt.grow_cutoff = c.get_bool("run.grow_cutoff", opt.grow_cutoff);
    opt.sample_times = sample_grid(opt.t_final, c.get_double("run.dt_sample", 1.0));
    const bool observables = c.get_bool("output.observables", true);

    std::vector<long> cells(static_cast<std::size_t>(n_traj));
    for (long k = 0; k < n_traj; ++k) cells[k] = k;
    const quantum::StateVector psi0 = quantum::ground_state(h);
    const auto runs = parallel_map(
        cells,
        [&](long k) {
            quantum::McwfOptions o = opt;
            o.seed = quantum::derive_seed(opt.seed, static_cast<std::uint64_t>(k));
            return quantum::mcwf_trajectory(psi0, p, h, r, o);
        },
        ctx.workers);

    std::size_t ok = 0;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        if (!runs[k].ok()) {
            ctx.err << "trajectory " << k << " failed: " << runs[k].error << '\n';
            continue;
        }
        ++ok;
        const auto& res = *runs[k].value;
        io::write_atomically(ctx.out_dir / ("emissions_" + std::to_string(k) + ".jsonl"),
                             [&](std::ostream& os) { quantum::write_emission_jsonl(os, res.record, p, r); });
        if (observables)
            io::write_atomically(ctx.out_dir / ("observables_" + std::to_string(k) + ".csv"),
                                 [&](std::ostream& os) { quantum::write_observables_csv(os, res.series); });
        ctx.out << "trajectory " << k << " seed=" << res.record.seed << " emissions=" << res.record.events.size()
                << " final Jz=" << io::fmt(res.series.Jz.empty() ? 0.0 : res.series.Jz.back())
                << " max top-level population=" << io::fmt(res.max_top_population) << '\n';
    }
    ctx.out << "wrote " << ok << " trajectories to " << ctx.out_dir.string() << '\n';
    return ok == runs.size() ? kExitOk : kExitRuntime;
}

int cmd_intermittency(Context& ctx) {
    const Config& c = ctx.cfg;
    quantum::EmissionRecord rec;
    double bin_width = c.get_double("run.bin_width", 0.0);
    if (c.has("run.emission_file")) {
        const std::string file = c.get_string("run.emission_file", "");
        std::ifstream in(file);
        if (!in) throw ConfigError("cannot open emission file " + file);
        rec = quantum::read_emission_jsonl(in);
        if (bin_width <= 0.0) {
            in.clear();
            in.seekg(0);
            std::string head;
            std::getline(in, head);
            const double gamma = nlohmann::json::parse(head).value("gamma", 0.0);
            if (!(gamma > 0.0)) throw ConfigError("set run.bin_width: emission header has no gamma > 0");
            bin_width = 10.0 / gamma;
        }
    } else {
        const ModelParams p = model_from_config(c);
        const quantum::HilbertSpec h = hilbert_from_config(c, p);
        const quantum::RecoilSpec r = recoil_from_config(c);
        quantum::McwfOptions opt = intermittency_mcwf_options(c.get_double("run.t_final", 2e4), c.get_u64("run.seed", 1));
        opt.dt_max = c.get_double("run.dt_max", opt.dt_max);
        opt.rtol = c.get_double("run.rtol", opt.rtol);
        opt.atol = c.get_double("run.atol", opt.atol);
        opt.cutoff_guard = c.get_double("run.cutoff_guard", opt.cutoff_guard);
        opt.grow_cutoff = c.get_bool("run.grow_cutoff", opt.grow_cutoff);
        rec = quantum::mcwf_trajectory(quantum::ground_state(h), p, h, r, opt).record;
        if (bin_width <= 0.0) bin_width = default_bin_width(p);
        io::write_atomically(ctx.out_dir / "emissions.jsonl",
                             [&](std::ostream& os) { quantum::write_emission_jsonl(os, rec, p, r); });
    }
    const BinnedSignal sig = bin_emissions(rec, bin_width);
    const DwellStatistics d = detect_intermittency(sig);
    io::write_atomically(ctx.out_dir / "binned.csv", [&](std::ostream& os) {
        os << "t_start,total";
        for (std::size_t i = 1; i <= sig.per_ion.size(); ++i) os << ",ion_" << i;
        os << '\n';
        for (std::size_t k = 0; k < sig.bins(); ++k) {
            os << io::fmt(static_cast<double>(k) * sig.bin_width) << ',' << sig.total[k];
            for (const auto& ion : sig.per_ion) os << ',' << ion[k];
            os << '\n';
        }
    });
    io::write_atomically(ctx.out_dir / "dwell.json", [&](std::ostream& os) { write_dwell_json(os, d); });
    ctx.out << "intermittency bins=" << sig.bins() << " events=" << sig.events()
            << " threshold=" << io::fmt(d.threshold) << " bright_dwells=" << d.bright_dwells.size()
            << " dark_dwells=" << d.dark_dwells.size() << " bimodal=" << (d.bimodal ? "true" : "false") << '\n';
    return kExitOk;
}

int cmd_dressing(Context& ctx) {
    const DressingParams d = dressing_from_config(ctx.cfg);
    const EffectiveTLS t = effective_tls(d);
    const double delta_comp = compensating_delta(d);
    const double delta_over_rabi = t.delta_eff / d.probe_rabi;
    io::write_atomically(ctx.out_dir / "dressing.csv", [&](std::ostream& os) {
        os << "gamma_eff,delta_eff,gamma_over_omega,delta_compensating\n"
           << io::fmt(t.gamma_eff) << ',' << io::fmt(t.delta_eff) << ',' << io::fmt(t.gamma_over_omega_rabi)
           << ',' << io::fmt(delta_comp) << '\n';
    });
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << "gamma/Omega = " << t.gamma_over_omega_rabi << '\n'
       << std::setprecision(4) << "Delta/Omega = " << delta_over_rabi << '\n';
    os << std::defaultfloat << std::setprecision(8) << "gamma_eff = " << t.gamma_eff << '\n'
       << "Delta_eff = " << t.delta_eff << '\n'
       << "delta_compensating = " << delta_comp << '\n';
    ctx.out << os.str();
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dissipative Dicke model toolkit for trapped ions", "dicke"};
    app.require_subcommand(1);
    std::string config_path;
    std::vector<std::string> overrides;
    int workers = default_workers();
    std::string out_dir;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"meanfield", "Integrate the mean-field equations"},
        {"fixed-points", "Find fixed points and their stability"},
        {"phase-scan", "Classify the dynamical phase on a (V, gamma) grid"},
        {"trajectory", "Quantum-jump trajectories with emission records"},
        {"intermittency", "Bright/dark dwell analysis of an emission record"},
        {"dressing", "Effective two-level parameters of the dressing scheme"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "Configuration file")->required();
        sub->add_option("--set", overrides, "Override a key: key=value (repeatable, last wins)");
        sub->add_option("--workers", workers, "Worker threads (default: DICKE_WORKERS or cores)");
        sub->add_option("--out", out_dir, "Output directory (overrides output.dir)");
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    const std::string command = app.get_subcommands().front()->get_name();

    std::optional<Context> ctx;
    try {
        if (workers < 1) throw ConfigError("--workers must be >= 1");
        Config cfg = Config::load(config_path);
        for (const auto& s : overrides) cfg.set(s);
        fs::path dir = out_dir.empty() ? fs::path(cfg.get_string("output.dir", ".")) : fs::path(out_dir);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
        ctx.emplace(Context{std::move(cfg), dir, workers, out, err});
    } catch (const std::exception& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    }

    try {
        if (command == "meanfield") return cmd_meanfield(*ctx);
        if (command == "fixed-points") return cmd_fixed_points(*ctx);
        if (command == "phase-scan") return cmd_phase_scan(*ctx);
        if (command == "trajectory") return cmd_trajectory(*ctx);
        if (command == "intermittency") return cmd_intermittency(*ctx);
        return cmd_dressing(*ctx);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ParamError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace dicke
