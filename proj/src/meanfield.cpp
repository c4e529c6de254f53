#include "dicke/meanfield.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

#include "dicke/io.hpp"

namespace dicke {

namespace {

void require_single_mode(const ModelParams& p) {
    if (p.modes.count() > 1)
        throw ParamError("collective equations require a single-mode ModeSpec");
}

void require_dimensions(const ModelParams& p, int modes, int ions) {
    if (ions != p.N || modes != p.modes.count() || p.modes.coupling.rows() != ions ||
        p.modes.coupling.cols() != modes) {
        std::ostringstream os;
        os << "dimension mismatch: state has " << modes << " modes and " << ions
           << " ions, parameters have " << p.modes.count() << " modes and " << p.N << " ions";
        throw ParamError(os.str());
    }
}

}  // namespace

CollectiveVector MeanFieldState::to_vector() const {
    CollectiveVector v;
    v << A.real(), A.imag(), J.x(), J.y(), J.z();
    return v;
}

MeanFieldState MeanFieldState::from_vector(const CollectiveVector& v) {
    return {cplx(v[0], v[1]), Eigen::Vector3d(v[2], v[3], v[4])};
}

Eigen::VectorXd MultiModeState::to_vector() const {
    Eigen::VectorXd v(2 * A.size() + 3 * sigma.size());
    Eigen::Index k = 0;
    for (const cplx& a : A) {
        v[k++] = a.real();
        v[k++] = a.imag();
    }
    for (const auto& s : sigma) {
        v[k++] = s.x();
        v[k++] = s.y();
        v[k++] = s.z();
    }
    return v;
}

MultiModeState MultiModeState::from_vector(const Eigen::VectorXd& v, int modes, int ions) {
    if (v.size() != 2 * modes + 3 * ions) throw ParamError("state vector has the wrong length");
    MultiModeState s;
    s.A.resize(modes);
    s.sigma.resize(ions);
    Eigen::Index k = 0;
    for (int m = 0; m < modes; ++m, k += 2) s.A[m] = cplx(v[k], v[k + 1]);
    for (int i = 0; i < ions; ++i, k += 3) s.sigma[i] = v.segment<3>(k);
    return s;
}

MeanFieldState ground_state() { return {}; }

MultiModeState ground_state(int modes, int ions) {
    MultiModeState s;
    s.A.assign(modes, cplx(0.0, 0.0));
    s.sigma.assign(ions, Eigen::Vector3d(0.0, 0.0, -0.5));
    return s;
}

CollectiveVector rhs_collective(const CollectiveVector& v, const ModelParams& p) {
    const double w = p.omega() / p.N;
    const double k = p.phonon_decay / p.N;
    const double V = p.coupling, g = p.spin_decay, D = p.detuning, O = p.rabi;
    const double x = v[0], y = v[1], jx = v[2], jy = v[3], jz = v[4];
    const double two_x = 2.0 * x;  // A + A*
    CollectiveVector d;
    // dA/dt = -(i w + k) A - i V Jz
    d[0] = -k * x + w * y;
    d[1] = -w * x - k * y - V * jz;
    d[2] = -0.5 * g * jx - V * jy * two_x - D * jy;
    d[3] = -0.5 * g * jy - O * jz + V * jx * two_x + D * jx;
    d[4] = -g * (jz + 0.5) + O * jy;
    return d;
}

MeanFieldState rhs_collective(const MeanFieldState& s, const ModelParams& p) {
    require_single_mode(p);
    return MeanFieldState::from_vector(rhs_collective(s.to_vector(), p));
}

Eigen::Matrix<double, 5, 5> collective_jacobian(const MeanFieldState& s, const ModelParams& p) {
    require_single_mode(p);
    const double w = p.omega() / p.N;
    const double k = p.phonon_decay / p.N;
    const double V = p.coupling, g = p.spin_decay, D = p.detuning, O = p.rabi;
    const double x = s.A.real(), jx = s.J.x(), jy = s.J.y();
    Eigen::Matrix<double, 5, 5> J;
    // clang-format off
    J <<          -k,   w,         0,                  0,      0,
                  -w,  -k,         0,                  0,     -V,
        -2.0 * V * jy,   0,  -0.5 * g, -2.0 * V * x - D,      0,
         2.0 * V * jx,   0, 2.0 * V * x + D,   -0.5 * g,     -O,
                   0,   0,         0,                  O,     -g;
    // clang-format on
    return J;
}

Eigen::VectorXd rhs_multimode(const Eigen::VectorXd& v, const ModelParams& p) {
    const int M = p.modes.count();
    const int N = p.N;
    if (v.size() != 2 * M + 3 * N) throw ParamError("dimension mismatch in multi-mode state vector");
    const Eigen::MatrixXd& Vim = p.modes.coupling;
    const double g = p.spin_decay, D = p.detuning, O = p.rabi, k = p.phonon_decay;
    Eigen::VectorXd d(v.size());
    const Eigen::Index spin0 = 2 * M;
    for (int m = 0; m < M; ++m) {
        const double x = v[2 * m], y = v[2 * m + 1];
        const double w = p.modes.frequencies[m];
        double drive = 0.0;
        for (int i = 0; i < N; ++i) drive += Vim(i, m) * v[spin0 + 3 * i + 2];
        d[2 * m] = -k * x + w * y;
        d[2 * m + 1] = -w * x - k * y - drive;
    }
    for (int i = 0; i < N; ++i) {
        double field = 0.0;  // sum_m V_im (A_m + A_m*)
        for (int m = 0; m < M; ++m) field += Vim(i, m) * 2.0 * v[2 * m];
        const Eigen::Index b = spin0 + 3 * i;
        const double sx = v[b], sy = v[b + 1], sz = v[b + 2];
        d[b] = -0.5 * g * sx - field * sy - D * sy;
        d[b + 1] = -0.5 * g * sy - O * sz + field * sx + D * sx;
        d[b + 2] = -g * (sz + 0.5) + O * sy;
    }
    return d;
}

MultiModeState rhs_multimode(const MultiModeState& s, const ModelParams& p) {
    require_dimensions(p, s.modes(), s.ions());
    return MultiModeState::from_vector(rhs_multimode(s.to_vector(), p), s.modes(), s.ions());
}

MultiModeState embed_collective(const MeanFieldState& s, int modes, int ions) {
    MultiModeState out;
    out.A.assign(modes, cplx(0.0, 0.0));
    out.A[0] = s.A;
    out.sigma.assign(ions, s.J);
    return out;
}

MeanFieldState collective_of(const MultiModeState& s) {
    MeanFieldState out;
    out.A = s.A.empty() ? cplx(0.0, 0.0) : s.A[0];
    out.J.setZero();
    for (const auto& sig : s.sigma) out.J += sig;
    if (!s.sigma.empty()) out.J /= static_cast<double>(s.sigma.size());
    return out;
}

cplx steady_phonon_amplitude(double Jz, const ModelParams& p) {
    const cplx i(0.0, 1.0);
    return -i * p.coupling * Jz * static_cast<double>(p.N) / (i * p.omega() + p.phonon_decay);
}

double norm(const MeanFieldState& d) { return d.to_vector().norm(); }
double norm(const MultiModeState& d) { return d.to_vector().norm(); }

std::vector<double> sample_grid(double t_final, double dt) {
    if (!(t_final > 0.0)) throw ParamError("t_final must be > 0");
    if (!(dt > 0.0)) throw ParamError("sample spacing must be > 0");
    std::vector<double> t;
    const auto n = static_cast<long>(std::floor(t_final / dt + 1e-9));
    t.reserve(n + 2);
    for (long k = 0; k <= n; ++k) t.push_back(std::min(t_final, k * dt));
    if (t.back() < t_final) t.push_back(t_final);
    return t;
}

namespace {

void check_integration_request(const std::vector<double>& times, const IntegrationOptions& opt) {
    if (times.empty()) throw ParamError("no sample times requested");
    if (!(times.back() > 0.0)) throw ParamError("t_final must be > 0");
    if (!(opt.rtol > 0.0 && opt.rtol <= 1e-3)) throw ParamError("rtol must lie in (0, 1e-3]");
    for (std::size_t k = 1; k < times.size(); ++k)
        if (!(times[k] > times[k - 1])) throw ParamError("sample times must be strictly increasing");
}

ode::Tolerances tolerances(const IntegrationOptions& opt) {
    ode::Tolerances tol;
    tol.rtol = opt.rtol;
    tol.atol = opt.atol;
    tol.h_max = opt.h_max;
    return tol;
}

}  // namespace

Trajectory<MeanFieldState> integrate(const MeanFieldState& s0, const ModelParams& p,
                                     const std::vector<double>& sample_times,
                                     const IntegrationOptions& opt) {
    require_single_mode(p);
    check_integration_request(sample_times, opt);
    auto rhs = [&p](double, const CollectiveVector& y, CollectiveVector& dy) {
        dy = rhs_collective(y, p);
    };
    const auto ys = ode::integrate_samples<CollectiveVector>(rhs, s0.to_vector(), 0.0,
                                                             sample_times, tolerances(opt));
    Trajectory<MeanFieldState> traj;
    traj.times = sample_times;
    traj.rtol = opt.rtol;
    traj.atol = opt.atol;
    traj.states.reserve(ys.size());
    for (const auto& y : ys) traj.states.push_back(MeanFieldState::from_vector(y));
    return traj;
}

Trajectory<MultiModeState> integrate(const MultiModeState& s0, const ModelParams& p,
                                     const std::vector<double>& sample_times,
                                     const IntegrationOptions& opt) {
    require_dimensions(p, s0.modes(), s0.ions());
    check_integration_request(sample_times, opt);
    auto rhs = [&p](double, const Eigen::VectorXd& y, Eigen::VectorXd& dy) {
        dy = rhs_multimode(y, p);
    };
    const auto ys = ode::integrate_samples<Eigen::VectorXd>(rhs, s0.to_vector(), 0.0,
                                                            sample_times, tolerances(opt));
    Trajectory<MultiModeState> traj;
    traj.times = sample_times;
    traj.rtol = opt.rtol;
    traj.atol = opt.atol;
    traj.states.reserve(ys.size());
    for (const auto& y : ys)
        traj.states.push_back(MultiModeState::from_vector(y, s0.modes(), s0.ions()));
    return traj;
}

void write_trajectory_csv(std::ostream& os, const Trajectory<MeanFieldState>& traj) {
    os << "t,ReA,ImA,Jx,Jy,Jz\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const auto& s = traj.states[k];
        os << io::fmt(traj.times[k]) << ',' << io::fmt(s.A.real()) << ',' << io::fmt(s.A.imag())
           << ',' << io::fmt(s.J.x()) << ',' << io::fmt(s.J.y()) << ',' << io::fmt(s.J.z())
           << '\n';
    }
}

void write_trajectory_csv(std::ostream& os, const Trajectory<MultiModeState>& traj) {
    if (traj.states.empty()) {
        os << "t\n";
        return;
    }
    const int M = traj.states.front().modes();
    const int N = traj.states.front().ions();
    os << 't';
    for (int m = 1; m <= M; ++m) os << ",ReA_" << m;
    for (int m = 1; m <= M; ++m) os << ",ImA_" << m;
    for (const char* c : {"Sx", "Sy", "Sz"})
        for (int i = 1; i <= N; ++i) os << ',' << c << '_' << i;
    os << '\n';
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const auto& s = traj.states[k];
        os << io::fmt(traj.times[k]);
        for (int m = 0; m < M; ++m) os << ',' << io::fmt(s.A[m].real());
        for (int m = 0; m < M; ++m) os << ',' << io::fmt(s.A[m].imag());
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < N; ++i) os << ',' << io::fmt(s.sigma[i][c]);
        os << '\n';
    }
}

}  // namespace dicke
