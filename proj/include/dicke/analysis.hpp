// analysis.hpp - Binned fluorescence, bright/dark dwell statistics and
// phase-grid scans.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dicke/fixed_points.hpp"
#include "dicke/model.hpp"
#include "dicke/quantum.hpp"

namespace dicke {

struct BinnedSignal {
    double bin_width{1.0};
    std::vector<long> total;                 // counts per bin
    std::vector<std::vector<long>> per_ion;  // [ion][bin]

    std::size_t bins() const { return total.size(); }
    long events() const;
};

/// Half-open bins [k w, (k + 1) w) covering [0, t_final].
BinnedSignal bin_emissions(const quantum::EmissionRecord& rec, double bin_width);

struct IntermittencyOptions {
    double kde_bandwidth{0.7};     // in variance-stabilised units
    double valley_ratio{0.5};      // valley density / smaller peak density
    double min_mode_mass{0.05};    // fraction of bins on each side of the threshold
    double min_separation{3.0};    // in Poisson widths of the dark mode
    double enter_bright{1.2};      // hysteresis factors on the threshold
    double exit_bright{0.8};
};

struct DwellStatistics {
    double threshold{0.0};  // counts per bin
    std::vector<double> bright_dwells;
    std::vector<double> dark_dwells;
    bool bimodal{false};
    double dark_mode{0.0};    // mean counts of bins below threshold
    double bright_mode{0.0};  // mean counts of bins above threshold
    bool valley_found{false};

    double mean_bright_dwell() const;
    double mean_dark_dwell() const;
};

/// Histogram-based bright/dark segmentation. Requires at least 100 bins.
DwellStatistics detect_intermittency(const BinnedSignal& sig, const IntermittencyOptions& opt = {});

void write_dwell_json(std::ostream& os, const DwellStatistics& d);

/// 10 / gamma.
double default_bin_width(const ModelParams& p);

struct IntermittencyRun {
    quantum::EmissionRecord record;
    BinnedSignal signal;
    DwellStatistics stats;
    std::vector<int> cutoffs;  // final Fock cutoffs of the trajectory
};

/// Integration settings for long emission records: fluorescence statistics
/// do not need the default trajectory tolerances. The Fock cutoff grows with
/// the phonon heating of undamped (kappa = 0) records.
quantum::McwfOptions intermittency_mcwf_options(double t_final, std::uint64_t seed);

/// MCWF trajectory from spins down and phonon vacuum, binned and segmented.
/// bin_width <= 0 selects default_bin_width.
IntermittencyRun run_intermittency(const ModelParams& p, const quantum::HilbertSpec& h,
                                   const quantum::RecoilSpec& r, const quantum::McwfOptions& opt,
                                   double bin_width = 0.0);

struct PhaseGridRow {
    double V{0.0};
    double gamma{0.0};
    double delta{0.0};
    double kappa{0.0};
    int n_fixed_points{0};
    bool bright_stable{false};
    bool dark_stable{false};
    bool hopf{false};
    bool limit_cycle{false};
    std::string label;  // "Unclassifiable" when no rule applies
    std::string diagnostic;
    std::optional<bool> intermittent;
};

struct PhaseScanSpec {
    ModelParams base;  // every field except coupling and spin_decay
    std::vector<double> V;
    std::vector<double> gamma;
    LimitCycleOptions limit_cycle;
    // Optional MCWF check on B+D cells.
    bool check_intermittency{false};
    double intermittency_t_final{2e4};
    int intermittency_n_max{0};  // 0: default cutoff
    std::uint64_t seed{1};
};

struct CellFailure {
    std::size_t cell{0};
    double V{0.0};
    double gamma{0.0};
    std::string error;
};

struct PhaseScanResult {
    std::vector<PhaseGridRow> rows;  // grid order, V fastest
    std::vector<CellFailure> failures;
};

std::vector<double> linspace(double lo, double hi, int count);

PhaseScanResult phase_scan(const PhaseScanSpec& spec, int workers);

/// Header: V,gamma,delta,kappa,n_fixed_points,bright_stable,dark_stable,hopf,limit_cycle,label
/// (plus an intermittent column when any row carries a verdict).
void write_phase_grid_csv(std::ostream& os, const std::vector<PhaseGridRow>& rows);

}  // namespace dicke
