// model.hpp - Physical parameters, phonon-mode specification and units convention
//
// All simulation rates are expressed in units of the Rabi frequency (Omega = 1
// sets the time unit 1/Omega). Only DressingParams carries absolute units.

#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dicke {

/// Raised when a parameter set violates one of its invariants. The message
/// names the offending field.
class ParamError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Phonon modes coupled to the spins. frequencies[m] is the absolute mode
/// frequency (units Omega) and coupling(i, m) the spin-phonon coupling V_im of
/// ion i to mode m. Column 0 is the centre-of-mass mode.
struct ModeSpec {
    std::vector<double> frequencies;
    Eigen::MatrixXd coupling;

    int count() const { return static_cast<int>(frequencies.size()); }
    bool single_mode() const { return frequencies.size() == 1; }
};

struct ModelParams {
    int N{1};
    double rabi{1.0};
    double detuning{0.0};
    double coupling{0.0};
    // Unset means the default scaling omega = N * rabi.
    std::optional<double> trap_frequency;
    double spin_decay{0.0};
    double phonon_decay{0.0};
    // Empty means a single centre-of-mass mode at the trap frequency.
    ModeSpec modes;

    double omega() const { return trap_frequency.value_or(N * rabi); }
};

/// Ca+ dressing-scheme inputs, all in one absolute frequency unit (plain
/// inverse times, no 2*pi).
struct DressingParams {
    double gamma1{0.0};
    double gamma2{0.0};
    double drive_rabi{0.0};
    double drive_detuning{0.0};
    double probe_detuning{0.0};
    double probe_rabi{1.0};
};

/// Single centre-of-mass mode coupling homogeneously with strength V.
ModeSpec com_mode(int N, double omega, double V);

/// Three-ion axial modes: frequencies (w, sqrt(3) w, sqrt(5.8) w) with
/// coupling columns V * sqrt(3) * b_m, so column 0 equals V on every ion.
ModeSpec normal_modes_3ion(double omega, double V);

/// Unit normal-mode vectors of the three-ion chain (columns b_1, b_2, b_3).
Eigen::Matrix3d three_ion_mode_vectors();

/// Checks every invariant and returns a copy with defaults filled in
/// (trap frequency and a single centre-of-mass mode when modes is empty).
ModelParams validate_params(const ModelParams& p);

void validate_dressing(const DressingParams& d);

}  // namespace dicke
