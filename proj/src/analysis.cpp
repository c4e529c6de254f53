#include "dicke/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "dicke/io.hpp"
#include "dicke/parallel.hpp"

namespace dicke {

long BinnedSignal::events() const { return std::accumulate(total.begin(), total.end(), 0L); }

BinnedSignal bin_emissions(const quantum::EmissionRecord& rec, double bin_width) {
    if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw std::invalid_argument("bin_width must be > 0");
    std::size_t n = static_cast<std::size_t>(std::ceil(rec.t_final / bin_width));
    for (const auto& e : rec.events) n = std::max(n, static_cast<std::size_t>(std::floor(e.t / bin_width)) + 1);

    BinnedSignal s;
    s.bin_width = bin_width;
    s.total.assign(n, 0);
    s.per_ion.assign(static_cast<std::size_t>(rec.N), std::vector<long>(n, 0));
    for (const auto& e : rec.events) {
        if (e.t < 0.0) throw std::invalid_argument("emission time before t = 0");
        const auto k = static_cast<std::size_t>(std::floor(e.t / bin_width));
        ++s.total[k];
        ++s.per_ion.at(static_cast<std::size_t>(e.ion))[k];
    }
    return s;
}

double DwellStatistics::mean_bright_dwell() const {
    if (bright_dwells.empty()) return 0.0;
    return std::accumulate(bright_dwells.begin(), bright_dwells.end(), 0.0) / bright_dwells.size();
}

double DwellStatistics::mean_dark_dwell() const {
    if (dark_dwells.empty()) return 0.0;
    return std::accumulate(dark_dwells.begin(), dark_dwells.end(), 0.0) / dark_dwells.size();
}

namespace {

double anscombe(double c) { return 2.0 * std::sqrt(c + 0.375); }
double inverse_anscombe(double y) { return 0.25 * y * y - 0.375; }

// Deepest valley between the two tallest peaks of a Gaussian KDE of the
// variance-stabilised counts; nullopt when the density is unimodal or the
// valley is too shallow.
std::optional<double> valley_threshold(const std::map<long, long>& hist, std::size_t n,
                                       const IntermittencyOptions& opt) {
    const double h = opt.kde_bandwidth;
    const double lo = anscombe(static_cast<double>(hist.begin()->first)) - 3.0 * h;
    const double hi = anscombe(static_cast<double>(hist.rbegin()->first)) + 3.0 * h;
    constexpr int G = 1024;
    std::vector<double> grid(G), dens(G, 0.0);
    for (int g = 0; g < G; ++g) {
        grid[g] = lo + (hi - lo) * g / (G - 1);
        for (const auto& [c, w] : hist) {
            const double z = (grid[g] - anscombe(static_cast<double>(c))) / h;
            dens[g] += static_cast<double>(w) * std::exp(-0.5 * z * z);
        }
        dens[g] /= static_cast<double>(n);
    }
    std::vector<int> peaks;
    for (int g = 1; g + 1 < G; ++g)
        if (dens[g] > dens[g - 1] && dens[g] >= dens[g + 1]) peaks.push_back(g);
    if (peaks.size() < 2) return std::nullopt;
    std::sort(peaks.begin(), peaks.end(), [&](int a, int b) { return dens[a] > dens[b]; });
    const int a = std::min(peaks[0], peaks[1]);
    const int b = std::max(peaks[0], peaks[1]);
    const auto valley = std::min_element(dens.begin() + a, dens.begin() + b + 1);
    if (*valley >= opt.valley_ratio * std::min(dens[a], dens[b])) return std::nullopt;
    return inverse_anscombe(grid[valley - dens.begin()]);
}

// Between-class-variance (Otsu) threshold on integer counts.
double otsu_threshold(const std::map<long, long>& hist, std::size_t n) {
    double sum_all = 0.0;
    for (const auto& [c, w] : hist) sum_all += static_cast<double>(c) * w;
    double best = -1.0, thr = static_cast<double>(hist.begin()->first) + 0.5;
    double w0 = 0.0, s0 = 0.0;
    for (const auto& [c, w] : hist) {
        w0 += static_cast<double>(w);
        s0 += static_cast<double>(c) * w;
        const double w1 = static_cast<double>(n) - w0;
        if (w1 <= 0.0) break;
        const double m0 = s0 / w0, m1 = (sum_all - s0) / w1;
        const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            thr = static_cast<double>(c) + 0.5;
        }
    }
    return thr;
}

}  // namespace

DwellStatistics detect_intermittency(const BinnedSignal& sig, const IntermittencyOptions& opt) {
    const std::size_t n = sig.bins();
    if (n < 100) throw std::invalid_argument("intermittency detection needs at least 100 bins");
    std::map<long, long> hist;
    for (long c : sig.total) ++hist[c];

    DwellStatistics d;
    if (hist.size() < 2) return d;
    const auto valley = valley_threshold(hist, n, opt);
    d.threshold = valley ? *valley : otsu_threshold(hist, n);

    std::size_t n_dark = 0;
    double s_dark = 0.0, s_bright = 0.0;
    for (long c : sig.total) {
        if (c < d.threshold) {
            ++n_dark;
            s_dark += static_cast<double>(c);
        } else {
            s_bright += static_cast<double>(c);
        }
    }
    const std::size_t n_bright = n - n_dark;
    d.dark_mode = n_dark ? s_dark / n_dark : 0.0;
    d.bright_mode = n_bright ? s_bright / n_bright : 0.0;
    const double min_mass = opt.min_mode_mass * static_cast<double>(n);
    d.valley_found = valley.has_value() && n_dark >= min_mass && n_bright >= min_mass;

    // Hysteresis segmentation; the first and last runs are censored.
    const double enter = opt.enter_bright * d.threshold;
    const double leave = opt.exit_bright * d.threshold;
    bool bright = sig.total[0] >= d.threshold;
    std::vector<std::pair<bool, std::size_t>> runs{{bright, 0}};
    for (long c : sig.total) {
        const double x = static_cast<double>(c);
        if (!bright && x > enter) bright = true;
        else if (bright && x < leave) bright = false;
        if (bright != runs.back().first) runs.emplace_back(bright, 0);
        ++runs.back().second;
    }
    for (std::size_t k = 1; k + 1 < runs.size(); ++k) {
        const double len = static_cast<double>(runs[k].second) * sig.bin_width;
        (runs[k].first ? d.bright_dwells : d.dark_dwells).push_back(len);
    }

    const double width = std::sqrt(std::max(d.dark_mode, 1.0));
    const bool separated = d.bright_mode - d.dark_mode > opt.min_separation * width;
    d.bimodal = d.valley_found && separated && !d.bright_dwells.empty() && !d.dark_dwells.empty();
    return d;
}

void write_dwell_json(std::ostream& os, const DwellStatistics& d) {
    nlohmann::ordered_json j;
    j["threshold"] = d.threshold;
    j["bright_dwells"] = d.bright_dwells;
    j["dark_dwells"] = d.dark_dwells;
    j["bimodal"] = d.bimodal;
    j["dark_mode"] = d.dark_mode;
    j["bright_mode"] = d.bright_mode;
    os << j.dump(2) << '\n';
}

double default_bin_width(const ModelParams& p) {
    if (!(p.spin_decay > 0.0)) throw std::invalid_argument("default bin width needs gamma > 0");
    return 10.0 / p.spin_decay;
}

quantum::McwfOptions intermittency_mcwf_options(double t_final, std::uint64_t seed) {
    quantum::McwfOptions opt;
    opt.t_final = t_final;
    opt.seed = seed;
    opt.rtol = 1e-6;
    opt.atol = 1e-8;
    opt.dt_max = 1.0;
    opt.grow_cutoff = true;
    return opt;
}

IntermittencyRun run_intermittency(const ModelParams& p, const quantum::HilbertSpec& h,
                                   const quantum::RecoilSpec& r, const quantum::McwfOptions& opt,
                                   double bin_width) {
    IntermittencyRun run;
    quantum::McwfResult res = quantum::mcwf_trajectory(quantum::ground_state(h), p, h, r, opt);
    run.record = std::move(res.record);
    run.cutoffs = std::move(res.cutoffs);
    run.signal = bin_emissions(run.record, bin_width > 0.0 ? bin_width : default_bin_width(p));
    run.stats = detect_intermittency(run.signal);
    return run;
}

std::vector<double> linspace(double lo, double hi, int count) {
    if (count < 1) throw std::invalid_argument("grid count must be >= 1");
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) v[k] = count == 1 ? lo : lo + (hi - lo) * k / (count - 1);
    return v;
}

PhaseScanResult phase_scan(const PhaseScanSpec& spec, int workers) {
    if (spec.V.empty() || spec.gamma.empty()) throw std::invalid_argument("phase scan grid is empty");
    struct Cell {
        std::size_t index;
        double V, gamma;
    };
    std::vector<Cell> cells;
    for (double g : spec.gamma)
        for (double V : spec.V) cells.push_back({cells.size(), V, g});

    const auto results = parallel_map(
        cells,
        [&spec](const Cell& c) {
            ModelParams p = spec.base;
            p.coupling = c.V;
            p.spin_decay = c.gamma;
            p.modes = {};
            p = validate_params(p);
            const PhaseResult r = classify_phase(p, spec.limit_cycle);
            PhaseGridRow row;
            row.V = c.V;
            row.gamma = c.gamma;
            row.delta = p.detuning;
            row.kappa = p.phonon_decay;
            row.n_fixed_points = static_cast<int>(r.fixed_points.size());
            row.bright_stable = r.bright_stable();
            row.dark_stable = r.dark_stable();
            row.hopf = r.hopf;
            row.limit_cycle = r.limit_cycle.has_value();
            row.label = r.label ? to_string(*r.label) : "Unclassifiable";
            row.diagnostic = r.diagnostic;
            if (spec.check_intermittency && r.label == PhaseLabel::BD) {
                quantum::HilbertSpec h = quantum::default_hilbert(p);
                if (spec.intermittency_n_max > 0) h.cutoffs.assign(h.modes.size(), spec.intermittency_n_max);
                const auto opt = intermittency_mcwf_options(spec.intermittency_t_final,
                                                            quantum::derive_seed(spec.seed, c.index));
                const auto run = run_intermittency(p, h, quantum::RecoilSpec{}, opt);
                row.intermittent = run.stats.bimodal;
            }
            return row;
        },
        workers);

    PhaseScanResult out;
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (results[k].ok()) out.rows.push_back(*results[k].value);
        else out.failures.push_back({k, cells[k].V, cells[k].gamma, results[k].error});
    }
    return out;
}

void write_phase_grid_csv(std::ostream& os, const std::vector<PhaseGridRow>& rows) {
    const bool verdicts = std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.intermittent.has_value(); });
    os << "V,gamma,delta,kappa,n_fixed_points,bright_stable,dark_stable,hopf,limit_cycle,label";
    if (verdicts) os << ",intermittent";
    os << '\n';
    for (const auto& r : rows) {
        os << io::fmt(r.V) << ',' << io::fmt(r.gamma) << ',' << io::fmt(r.delta) << ',' << io::fmt(r.kappa)
           << ',' << r.n_fixed_points << ',' << r.bright_stable << ',' << r.dark_stable << ',' << r.hopf
           << ',' << r.limit_cycle << ',' << r.label;
        if (verdicts) os << ',' << (r.intermittent ? (*r.intermittent ? "1" : "0") : "");
        os << '\n';
    }
}

}  // namespace dicke
