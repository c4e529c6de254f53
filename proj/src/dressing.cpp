#include "dicke/dressing.hpp"

namespace dicke {

namespace {

double effective_gamma(const DressingParams& d) {
    const double G = d.gamma1 + d.gamma2;
    return G * d.drive_rabi * d.drive_rabi / (G * G + 4.0 * d.drive_detuning * d.drive_detuning);
}

}  // namespace

EffectiveTLS effective_tls(const DressingParams& d) {
    validate_dressing(d);
    EffectiveTLS t;
    t.gamma_eff = effective_gamma(d);
    t.delta_eff = d.probe_detuning - d.drive_detuning * t.gamma_eff / (d.gamma1 + d.gamma2);
    t.gamma_over_omega_rabi = t.gamma_eff / d.probe_rabi;
    return t;
}

double compensating_delta(const DressingParams& d) {
    validate_dressing(d);
    return d.drive_detuning * effective_gamma(d) / (d.gamma1 + d.gamma2);
}

ModelParams to_model_units(const EffectiveTLS& tls, const DressingParams& d, ModelParams base) {
    base.spin_decay = tls.gamma_eff / d.probe_rabi;
    base.detuning = tls.delta_eff / d.probe_rabi;
    return base;
}

}  // namespace dicke
