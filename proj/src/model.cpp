#include "dicke/model.hpp"

#include <cmath>
#include <sstream>

namespace dicke {

namespace {

constexpr double kSumTol = 1e-12;

[[noreturn]] void fail(const std::string& what) { throw ParamError(what); }

}  // namespace

ModeSpec com_mode(int N, double omega, double V) {
    ModeSpec spec;
    spec.frequencies = {omega};
    spec.coupling = Eigen::MatrixXd::Constant(N, 1, V);
    return spec;
}

Eigen::Matrix3d three_ion_mode_vectors() {
    Eigen::Matrix3d b;
    b.col(0) = Eigen::Vector3d(1.0, 1.0, 1.0) / std::sqrt(3.0);
    b.col(1) = Eigen::Vector3d(1.0, 0.0, -1.0) / std::sqrt(2.0);
    b.col(2) = Eigen::Vector3d(1.0, -2.0, 1.0) / std::sqrt(6.0);
    return b;
}

ModeSpec normal_modes_3ion(double omega, double V) {
    ModeSpec spec;
    spec.frequencies = {omega, std::sqrt(3.0) * omega, std::sqrt(5.8) * omega};
    spec.coupling = V * std::sqrt(3.0) * three_ion_mode_vectors();
    // b_1 * sqrt(3) is exactly (1,1,1) analytically; pin it so the single-mode
    // limit is bitwise exact.
    spec.coupling.col(0).setConstant(V);
    return spec;
}

ModelParams validate_params(const ModelParams& in) {
    ModelParams p = in;
    if (p.N < 1) fail("N must be >= 1");
    if (!(p.rabi > 0.0)) fail("rabi must be > 0");
    if (!(p.spin_decay >= 0.0)) fail("spin_decay must be >= 0");
    if (!(p.phonon_decay >= 0.0)) fail("phonon_decay must be >= 0");
    if (!(p.coupling >= 0.0)) fail("coupling must be >= 0");
    if (!std::isfinite(p.detuning)) fail("detuning must be finite");
    if (!p.trap_frequency) p.trap_frequency = p.N * p.rabi;
    if (!(*p.trap_frequency > 0.0)) fail("trap_frequency must be > 0");

    if (p.modes.frequencies.empty()) {
        p.modes = com_mode(p.N, *p.trap_frequency, p.coupling);
        return p;
    }

    const ModeSpec& m = p.modes;
    const int M = m.count();
    if (M > p.N) fail("mode count must be <= N");
    if (m.coupling.rows() != p.N || m.coupling.cols() != M)
        fail("coupling_matrix must be N x M");
    if (std::abs(m.frequencies[0] - *p.trap_frequency) > kSumTol * *p.trap_frequency)
        fail("mode 1 frequency must equal trap_frequency");
    for (int k = 1; k < M; ++k) {
        if (!(m.frequencies[k] >= m.frequencies[k - 1]))
            fail("mode frequencies must be ascending");
    }
    for (int i = 0; i < p.N; ++i) {
        if (std::abs(m.coupling(i, 0) - p.coupling) > kSumTol * std::max(1.0, p.coupling))
            fail("mode 1 coupling must equal V for every ion");
    }
    for (int k = 1; k < M; ++k) {
        const double scale = std::max(1.0, m.coupling.col(k).cwiseAbs().maxCoeff());
        if (std::abs(m.coupling.col(k).sum()) > kSumTol * scale) {
            std::ostringstream os;
            os << "mode m>1 must sum to zero (mode " << k + 1 << ")";
            fail(os.str());
        }
    }
    return p;
}

void validate_dressing(const DressingParams& d) {
    if (!(d.gamma1 > 0.0)) fail("gamma1 must be > 0");
    if (!(d.gamma2 > 0.0)) fail("gamma2 must be > 0");
    if (!(d.drive_rabi >= 0.0)) fail("drive_rabi must be >= 0");
    if (!(d.probe_rabi > 0.0)) fail("probe_rabi must be > 0");
}

}  // namespace dicke
