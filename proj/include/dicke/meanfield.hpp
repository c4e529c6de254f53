// meanfield.hpp - Semiclassical equations of motion for the collective
// (single-mode) system and the site-resolved multi-mode system.
//
// Two normalisations coexist and are kept literal:
//   * collective: J is the per-ion mean spin, the phonon equation carries
//     omega/N and the damping kappa/N (omega -> omega - i kappa);
//   * multi-mode: Sigma_i are the per-site spins, modes evolve with omega_m and
//     are damped at kappa.
// The map between them is J = (1/N) sum_i Sigma_i with an identical A_1. Fixed
// points coincide under the map; the phonon dynamics of the collective form
// runs N times slower.

#pragma once

#include <complex>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "dicke/model.hpp"
#include "dicke/ode.hpp"

namespace dicke {

using cplx = std::complex<double>;
using CollectiveVector = Eigen::Matrix<double, 5, 1>;

struct MeanFieldState {
    cplx A{0.0, 0.0};
    Eigen::Vector3d J{0.0, 0.0, -0.5};

    double X() const { return A.real(); }

    CollectiveVector to_vector() const;
    static MeanFieldState from_vector(const CollectiveVector& v);
};

struct MultiModeState {
    std::vector<cplx> A;
    std::vector<Eigen::Vector3d> sigma;

    int modes() const { return static_cast<int>(A.size()); }
    int ions() const { return static_cast<int>(sigma.size()); }

    // Layout: [Re A_1, Im A_1, ..., Re A_M, Im A_M, Sx_1, Sy_1, Sz_1, ...].
    Eigen::VectorXd to_vector() const;
    static MultiModeState from_vector(const Eigen::VectorXd& v, int modes, int ions);
};

/// Spins down, phonon vacuum.
MeanFieldState ground_state();
MultiModeState ground_state(int modes, int ions);

MeanFieldState rhs_collective(const MeanFieldState& s, const ModelParams& p);
MultiModeState rhs_multimode(const MultiModeState& s, const ModelParams& p);

// Vector forms used by the integrator and the Newton solver.
CollectiveVector rhs_collective(const CollectiveVector& v, const ModelParams& p);
Eigen::VectorXd rhs_multimode(const Eigen::VectorXd& v, const ModelParams& p);

/// Analytic Jacobian of the collective equations in the to_vector() layout.
Eigen::Matrix<double, 5, 5> collective_jacobian(const MeanFieldState& s, const ModelParams& p);

/// Places a collective state on every site (Sigma_i = J), A_1 = A, A_{m>1} = 0.
MultiModeState embed_collective(const MeanFieldState& s, int modes, int ions);

/// J = mean of Sigma_i, A = A_1.
MeanFieldState collective_of(const MultiModeState& s);

/// Linear phonon relation at a steady state of the collective system:
/// A = -i V Jz N / (i omega + kappa).
cplx steady_phonon_amplitude(double Jz, const ModelParams& p);

double norm(const MeanFieldState& d);
double norm(const MultiModeState& d);

struct IntegrationOptions {
    double rtol{1e-9};
    double atol{1e-12};
    double h_max{std::numeric_limits<double>::infinity()};
};

template <class State>
struct Trajectory {
    std::vector<double> times;
    std::vector<State> states;
    double rtol{0.0};
    double atol{0.0};
};

/// Uniform sample grid 0, dt, 2dt, ..., t_final (t_final always included).
std::vector<double> sample_grid(double t_final, double dt);

Trajectory<MeanFieldState> integrate(const MeanFieldState& s0, const ModelParams& p,
                                     const std::vector<double>& sample_times,
                                     const IntegrationOptions& opt = {});
Trajectory<MultiModeState> integrate(const MultiModeState& s0, const ModelParams& p,
                                     const std::vector<double>& sample_times,
                                     const IntegrationOptions& opt = {});

void write_trajectory_csv(std::ostream& os, const Trajectory<MeanFieldState>& traj);
void write_trajectory_csv(std::ostream& os, const Trajectory<MultiModeState>& traj);

}  // namespace dicke
