// fixed_points.hpp - Steady states of the mean-field equations, their
// stability, bright-branch Hopf points, limit cycles and phase labels.

#pragma once

#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dicke/meanfield.hpp"
#include "dicke/model.hpp"

namespace dicke {

inline constexpr double kResidualTol = 1e-10;
inline constexpr double kStabilityEps = 1e-7;
inline constexpr double kDedupTol = 1e-6;

enum class Stability { Stable, Unstable, Saddle, Marginal };
enum class Branch { Bright, Dark, Other };
enum class PhaseLabel { B, D, BD, PL, PLD, Crossover };

std::string to_string(Stability s);
std::string to_string(Branch b);
std::string to_string(PhaseLabel l);

template <class State>
struct FixedPointT {
    State state;
    double residual{0.0};
    std::vector<cplx> eigenvalues;
    Stability stability{Stability::Marginal};
    Branch branch{Branch::Other};

    double max_real() const {
        double m = -std::numeric_limits<double>::infinity();
        for (const cplx& l : eigenvalues) m = std::max(m, l.real());
        return m;
    }
};

using FixedPoint = FixedPointT<MeanFieldState>;
using MultiModeFixedPoint = FixedPointT<MultiModeState>;

template <class Point>
struct FixedPointSearchT {
    std::vector<Point> points;
    std::string diagnostic;  // non-empty when no seed converged
};

using FixedPointSearch = FixedPointSearchT<FixedPoint>;
using MultiModeFixedPointSearch = FixedPointSearchT<MultiModeFixedPoint>;

/// Stability class from a Jacobian spectrum (eps = kStabilityEps).
Stability stability_of(const std::vector<cplx>& eigenvalues, double eps = kStabilityEps);

/// Bright: Jz > -0.2 and |X| < 0.1 max(1, V / 2 Omega); Dark: Jz < -0.4;
/// Other otherwise.
Branch branch_of(const MeanFieldState& s, const ModelParams& p);

/// Optical-Bloch steady state of a single driven, decaying spin with
/// detuning (the V = 0 fixed point) and its linear-relation phonon amplitude.
MeanFieldState bloch_steady_state(const ModelParams& p);

/// gamma -> 0 dark-branch solution with |J| = 1/2, if V^2 >= Omega omega / N.
std::optional<MeanFieldState> dark_seed_gamma0(const ModelParams& p);

std::vector<MeanFieldState> default_seeds(const ModelParams& p);

/// Damped Newton on the collective right-hand side.
std::optional<MeanFieldState> newton_collective(const ModelParams& p, const MeanFieldState& seed);

/// Central finite-difference Jacobian of the collective system.
Eigen::Matrix<double, 5, 5> collective_jacobian_fd(const MeanFieldState& s, const ModelParams& p,
                                                   double step = 1e-6);

FixedPoint classify_stability(const FixedPoint& fp, const ModelParams& p);
MultiModeFixedPoint classify_stability(const MultiModeFixedPoint& fp, const ModelParams& p);

FixedPointSearch find_fixed_points(const ModelParams& p,
                                   const std::vector<MeanFieldState>& seeds = {});

bool is_homogeneous(const MultiModeState& s, double tol = kDedupTol);

/// Multi-mode search. Seeds: embedded single-mode fixed points, +-0.1
/// perturbations of each mode amplitude and each spin, and per-ion mixtures of
/// the single-mode spin states. Inhomogeneous solutions carry Branch::Other.
MultiModeFixedPointSearch find_multimode_fixed_points(
    const ModelParams& p, const std::vector<MultiModeState>& seeds = {});

/// (sqrt(2) Omega omega / N)^(1/2).
double critical_coupling_gamma0(const ModelParams& p);

struct BifurcationPoint {
    double V{0.0};
    cplx eigenvalue;  // the crossing eigenvalue with Im > 0; its conjugate also crosses
    MeanFieldState state;
    std::string type{"Hopf"};
};

struct HopfSweep {
    double V_min{0.0};
    double V_max{3.0};
    int points{400};
};

/// Max real part among complex-conjugate eigenvalue pairs; nullopt if none.
std::optional<double> max_complex_real_part(const std::vector<cplx>& eigenvalues);

/// Continues the bright branch over the V grid and bisects every sign change
/// of the leading complex pair's real part to |Re| < 1e-8.
std::vector<BifurcationPoint> detect_hopf(const ModelParams& p, const HopfSweep& sweep = {});

struct LimitCycle {
    double peak_to_peak{0.0};
    double period{0.0};
};

struct LimitCycleOptions {
    double t_total{5000.0};
    double sample_dt{0.05};
    double min_peak_to_peak{1e-3};
    double period_tol{0.01};
    // Peak-to-peak over the final quarter must be at least this fraction of
    // that over the third quarter; rejects slowly ringing-down transients.
    double min_amplitude_ratio{0.98};
    double rtol{1e-9};
};

std::optional<LimitCycle> detect_limit_cycle(const ModelParams& p, const MeanFieldState& s0,
                                             const LimitCycleOptions& opt = {});

struct PhaseResult {
    std::optional<PhaseLabel> label;  // nullopt: unclassifiable
    std::vector<FixedPoint> fixed_points;
    bool hopf{false};
    std::optional<LimitCycle> limit_cycle;
    std::string diagnostic;

    bool bright_stable() const;
    bool dark_stable() const;
};

PhaseResult classify_phase(const ModelParams& p, const LimitCycleOptions& lc = {});

}  // namespace dicke
