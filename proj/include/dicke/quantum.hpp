// quantum.hpp - Truncated spin (x) Fock operators, quantum-jump Monte Carlo
// trajectories with emission records, and a dense Lindblad propagator used as
// ground truth for ensemble averages.
//
// Basis index = spin_bits + 2^N * fock_index, bit i set <=> ion i is up
// (S^z |up> = +1/2 |up>). fock_index is mixed-radix over the included modes,
// first included mode fastest.

#pragma once

#include <complex>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dicke/model.hpp"

namespace dicke::quantum {

using cplx = std::complex<double>;
using SparseMatrix = Eigen::SparseMatrix<cplx, Eigen::RowMajor>;
using StateVector = Eigen::VectorXcd;
using DensityMatrix = Eigen::MatrixXcd;

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Population of the top two Fock levels exceeded the guard.
class CutoffSaturation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NormUnderflow : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct HilbertSpec {
    int N{1};
    std::vector<int> modes{0};    // indices into ModeSpec columns
    std::vector<int> cutoffs{10};  // n_max per included mode (levels 0..n_max)
    std::size_t max_dimension{std::size_t{1} << 20};

    std::size_t spin_dim() const { return std::size_t{1} << N; }
    std::size_t fock_dim() const;
    std::size_t dimension() const { return spin_dim() * fock_dim(); }
    /// Stride of included mode slot k in the basis index.
    std::size_t stride(int slot) const;
    void validate(const ModelParams& p) const;
};

/// n_max >= |A|^2 + 6|A| + 10 with |A| ~ V / (2 Omega).
int default_fock_cutoff(const ModelParams& p);

/// Default included modes: {1, 2} for three ions with three modes, otherwise
/// the centre-of-mass mode only.
HilbertSpec default_hilbert(const ModelParams& p);

SparseMatrix build_hamiltonian(const ModelParams& p, const HilbertSpec& h);

SparseMatrix spin_lowering(const HilbertSpec& h, int ion);
SparseMatrix mode_lowering(const HilbertSpec& h, int slot);
/// Diagonal of (1/N) sum_i S^z_i.
Eigen::VectorXd collective_sz_diagonal(const HilbertSpec& h);
/// Diagonal of a_m^dagger a_m for included slot k.
Eigen::VectorXd number_diagonal(const HilbertSpec& h, int slot);

StateVector basis_state(const HilbertSpec& h, std::uint64_t up_mask, const std::vector<int>& fock);
/// All spins down, every included mode in vacuum.
StateVector ground_state(const HilbertSpec& h);

/// Recoil from spontaneous emission. The direction cosine x is drawn from the
/// normalised dipole density w(x) = (3/8)(1 + x^2) on [-1, 1], and the
/// emitting ion is kicked by D(x) = exp(i eta x (a + a^dagger)) on the
/// centre-of-mass mode.
struct RecoilSpec {
    bool enabled{false};
    double eta{0.1};
};

double recoil_density(double x);
double sample_recoil_x(std::mt19937_64& rng);

/// exp(i eta x (a + a^dagger)) on levels 0..n_max via the eigenbasis of the
/// truncated position operator.
Eigen::MatrixXcd displacement_operator(double eta, double x, int n_max);

struct JumpFamily {
    std::vector<SparseMatrix> ops;  // sqrt(gamma) S_i^-
    RecoilSpec recoil;
    int recoil_slot{-1};            // included slot of the centre-of-mass mode, or -1
    Eigen::MatrixXd position_vectors;  // eigenvectors of truncated (a + a^dagger)
    Eigen::VectorXd position_values;

    /// D(x) on the recoil mode; identity when eta * x == 0.
    Eigen::MatrixXcd displacement(double x) const;
};

JumpFamily build_jump_operators(const ModelParams& p, const HilbertSpec& h, const RecoilSpec& r);

/// Applies a single-mode operator on included slot `slot` to the full state.
void apply_mode_operator(const HilbertSpec& h, int slot, const Eigen::MatrixXcd& op, StateVector& psi);

struct EmissionEvent {
    double t{0.0};
    int ion{0};
    std::optional<double> x;
};

struct EmissionRecord {
    std::vector<EmissionEvent> events;
    double t_final{0.0};
    std::uint64_t seed{0};
    int N{1};
    bool recoil{false};

    std::vector<int> counts_per_ion() const;
};

struct ObservableSeries {
    std::vector<double> times;
    std::vector<double> Jz;
    std::vector<std::vector<double>> n;  // [slot][sample]
    std::vector<std::vector<cplx>> A;    // [slot][sample]
};

struct NormLogEntry {
    double t{0.0};
    double norm2{1.0};
    bool jump{false};  // the state was just renormalised after an emission
};

struct McwfOptions {
    double t_final{10.0};
    double dt_max{0.1};
    std::uint64_t seed{1};
    std::vector<double> sample_times;  // empty: no observable samples
    double rtol{1e-8};
    double atol{1e-10};
    double jump_time_tol{1e-10};
    double cutoff_guard{1e-6};
    // Enlarge the saturated Fock cutoffs instead of failing when the guard trips.
    bool grow_cutoff{false};
    bool log_norms{false};
};

struct McwfResult {
    ObservableSeries series;
    EmissionRecord record;
    std::vector<NormLogEntry> norm_log;
    long steps{0};
    double max_top_population{0.0};  // largest top-two-Fock-level population seen
    int cutoff_growths{0};
    std::vector<int> cutoffs;  // final cutoffs per included mode
};

/// Copies `psi` into a space with the same ions and modes but other cutoffs.
/// Throws DimensionError if `psi` populates levels above the target cutoffs.
StateVector resize_fock(const HilbertSpec& from, const HilbertSpec& to, const StateVector& psi);

McwfResult mcwf_trajectory(const StateVector& psi0, const ModelParams& p, const HilbertSpec& h,
                           const RecoilSpec& r, const McwfOptions& opt);

/// Independent stream seed for trajectory `index` of a run with `master`.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

struct EnsembleAverage {
    std::vector<double> times;
    std::vector<double> mean_Jz;
    std::vector<double> stderr_Jz;
    std::vector<std::vector<double>> mean_n;  // [slot][sample]
    std::vector<std::uint64_t> emissions_per_ion;
    int trajectories{0};
};

EnsembleAverage mcwf_ensemble(const StateVector& psi0, const ModelParams& p, const HilbertSpec& h,
                              const RecoilSpec& r, const McwfOptions& opt, int n_trajectories,
                              int workers);

struct OracleOptions {
    double rtol{1e-10};
    double atol{1e-12};
    std::size_t max_entries{10000};  // d^2 limit for dense propagation
};

/// Dense propagation of d rho / dt = -i[H, rho] + D(rho) (no recoil).
std::vector<DensityMatrix> lindblad_oracle(const DensityMatrix& rho0, const ModelParams& p,
                                           const HilbertSpec& h,
                                           const std::vector<double>& sample_times,
                                           const OracleOptions& opt = {});

double expectation_Jz(const HilbertSpec& h, const DensityMatrix& rho);
double expectation_Jz(const HilbertSpec& h, const StateVector& psi);

void write_emission_jsonl(std::ostream& os, const EmissionRecord& rec, const ModelParams& p,
                          const RecoilSpec& r);
EmissionRecord read_emission_jsonl(std::istream& is);
void write_observables_csv(std::ostream& os, const ObservableSeries& s);

}  // namespace dicke::quantum
