// dressing.hpp - Effective two-level parameters of the dressed Ca+ scheme.

#pragma once

#include "dicke/model.hpp"

namespace dicke {

struct EffectiveTLS {
    double gamma_eff{0.0};  // absolute units of DressingParams
    double delta_eff{0.0};
    double gamma_over_omega_rabi{0.0};
};

/// gamma = (G1 + G2) W^2 / ((G1 + G2)^2 + 4 D^2) with W the dressing Rabi
/// frequency and D its detuning; Delta = delta - D gamma / (G1 + G2).
EffectiveTLS effective_tls(const DressingParams& d);

/// Probe detuning that cancels the light shift: D gamma / (G1 + G2).
double compensating_delta(const DressingParams& d);

/// Converts to simulation units (rates divided by the probe Rabi frequency).
ModelParams to_model_units(const EffectiveTLS& tls, const DressingParams& d, ModelParams base);

}  // namespace dicke
