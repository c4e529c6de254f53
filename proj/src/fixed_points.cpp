#include "dicke/fixed_points.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/Eigenvalues>

namespace dicke {

namespace {

constexpr int kMaxNewtonIter = 200;
constexpr int kMaxHalvings = 20;
constexpr int kPolishIter = 3;
constexpr double kFdStep = 1e-6;
constexpr double kBlochSlack = 1e-6;
constexpr double kComplexPairTol = 1e-9;

using VecFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

Eigen::MatrixXd fd_jacobian(const VecFn& f, const Eigen::VectorXd& x, double step) {
    const Eigen::Index n = x.size();
    Eigen::MatrixXd J(n, n);
    Eigen::VectorXd xp = x, xm = x;
    for (Eigen::Index j = 0; j < n; ++j) {
        xp[j] = x[j] + step;
        xm[j] = x[j] - step;
        J.col(j) = (f(xp) - f(xm)) / (2.0 * step);
        xp[j] = x[j];
        xm[j] = x[j];
    }
    return J;
}

// Damped Newton with step halving on residual increase. After the residual
// drops below kResidualTol a few extra iterations polish the root as long as
// they keep reducing it.
std::optional<Eigen::VectorXd> damped_newton(const VecFn& f, Eigen::VectorXd x) {
    Eigen::VectorXd fx = f(x);
    double r = fx.norm();
    int polish = 0;
    for (int it = 0; it < kMaxNewtonIter; ++it) {
        if (!std::isfinite(r)) return std::nullopt;
        if (r < kResidualTol && ++polish > kPolishIter) break;
        const Eigen::MatrixXd J = fd_jacobian(f, x, kFdStep);
        const Eigen::VectorXd dx = J.fullPivLu().solve(-fx);
        if (!dx.allFinite()) return std::nullopt;
        double lambda = 1.0;
        bool improved = false;
        Eigen::VectorXd xn, fn;
        for (int h = 0; h <= kMaxHalvings; ++h, lambda *= 0.5) {
            xn = x + lambda * dx;
            fn = f(xn);
            if (fn.norm() < r) {
                improved = true;
                break;
            }
        }
        if (!improved) break;
        x = xn;
        fx = fn;
        r = fx.norm();
        if (x.cwiseAbs().maxCoeff() > 1e6) return std::nullopt;
    }
    if (r < kResidualTol) return x;
    return std::nullopt;
}

std::vector<cplx> eigenvalues_of(const Eigen::MatrixXd& J) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(J, false);
    std::vector<cplx> ev(es.eigenvalues().data(), es.eigenvalues().data() + J.rows());
    std::sort(ev.begin(), ev.end(), [](const cplx& a, const cplx& b) {
        return a.real() != b.real() ? a.real() > b.real() : a.imag() > b.imag();
    });
    return ev;
}

bool inside_bloch_ball(const Eigen::Vector3d& J) { return J.norm() <= 0.5 + kBlochSlack; }

// Twelve icosahedron directions on the Bloch sphere (radius 1/2).
std::vector<Eigen::Vector3d> icosahedron_points() {
    const double phi = 0.5 * (1.0 + std::sqrt(5.0));
    std::vector<Eigen::Vector3d> pts;
    for (double a : {-1.0, 1.0}) {
        for (double b : {-phi, phi}) {
            pts.emplace_back(0.0, a, b);
            pts.emplace_back(a, b, 0.0);
            pts.emplace_back(b, 0.0, a);
        }
    }
    for (auto& v : pts) v = 0.5 * v.normalized();
    return pts;
}

template <class Point, class Dist>
bool contains(const std::vector<Point>& pts, const Dist& dist) {
    return std::any_of(pts.begin(), pts.end(), dist);
}

// A stable non-bright attractor coexisting with a stable bright one sits on
// the dark branch even while its Jz is still above the Dark threshold (just
// past the fold where the branch is born).
void refine_coexisting_dark(std::vector<FixedPoint>& pts) {
    const bool bright = std::any_of(pts.begin(), pts.end(), [](const FixedPoint& f) {
        return f.stability == Stability::Stable && f.branch == Branch::Bright;
    });
    if (!bright) return;
    FixedPoint* lowest = nullptr;
    for (auto& f : pts) {
        if (f.stability != Stability::Stable || f.branch == Branch::Bright) continue;
        if (!lowest || f.state.J.z() < lowest->state.J.z()) lowest = &f;
    }
    if (lowest && lowest->branch == Branch::Other) lowest->branch = Branch::Dark;
}

ModelParams collective_params(const ModelParams& p) {
    ModelParams q = p;
    q.modes = com_mode(p.N, p.omega(), p.coupling);
    return q;
}

}  // namespace

std::string to_string(Stability s) {
    switch (s) {
        case Stability::Stable: return "Stable";
        case Stability::Unstable: return "Unstable";
        case Stability::Saddle: return "Saddle";
        case Stability::Marginal: return "Marginal";
    }
    return "?";
}

std::string to_string(Branch b) {
    switch (b) {
        case Branch::Bright: return "Bright";
        case Branch::Dark: return "Dark";
        case Branch::Other: return "Other";
    }
    return "?";
}

std::string to_string(PhaseLabel l) {
    switch (l) {
        case PhaseLabel::B: return "B";
        case PhaseLabel::D: return "D";
        case PhaseLabel::BD: return "B+D";
        case PhaseLabel::PL: return "PL";
        case PhaseLabel::PLD: return "PL+D";
        case PhaseLabel::Crossover: return "Crossover";
    }
    return "?";
}

Stability stability_of(const std::vector<cplx>& eigenvalues, double eps) {
    // Saddle: a real expanding direction next to contracting ones. Growth
    // through complex pairs only (a focus past a Hopf point) is Unstable.
    bool pos = false, pos_real = false, neg = false, flat = false;
    for (const cplx& l : eigenvalues) {
        if (l.real() > eps) {
            pos = true;
            if (std::abs(l.imag()) <= 1e-9) pos_real = true;
        } else if (l.real() < -eps) {
            neg = true;
        } else {
            flat = true;
        }
    }
    if (pos) return pos_real && neg ? Stability::Saddle : Stability::Unstable;
    if (flat) return Stability::Marginal;
    return Stability::Stable;
}

Branch branch_of(const MeanFieldState& s, const ModelParams& p) {
    const double jz = s.J.z();
    if (jz < -0.4) return Branch::Dark;
    const double x_limit = 0.1 * std::max(1.0, p.coupling / (2.0 * p.rabi));
    if (jz > -0.2 && std::abs(s.X()) < x_limit) return Branch::Bright;
    return Branch::Other;
}

MeanFieldState bloch_steady_state(const ModelParams& p) {
    MeanFieldState s;
    const double g = p.spin_decay, D = p.detuning, O = p.rabi;
    if (g > 0.0) {
        Eigen::Matrix3d M;
        M << -0.5 * g, -D, 0.0, D, -0.5 * g, -O, 0.0, O, -g;
        s.J = M.fullPivLu().solve(Eigen::Vector3d(0.0, 0.0, 0.5 * g));
    }
    s.A = steady_phonon_amplitude(s.J.z(), p);
    return s;
}

std::optional<MeanFieldState> dark_seed_gamma0(const ModelParams& p) {
    const double V = p.coupling;
    if (!(V > 0.0)) return std::nullopt;
    const double jx = -p.rabi * p.omega() / (2.0 * p.N * V * V);
    if (std::abs(jx) > 0.5) return std::nullopt;
    MeanFieldState s;
    s.J = Eigen::Vector3d(jx, 0.0, -std::sqrt(0.25 - jx * jx));
    s.A = steady_phonon_amplitude(s.J.z(), p);
    return s;
}

std::vector<MeanFieldState> default_seeds(const ModelParams& p) {
    std::vector<MeanFieldState> seeds;
    for (const auto& J : icosahedron_points()) {
        MeanFieldState s;
        s.J = J;
        s.A = steady_phonon_amplitude(J.z(), p);
        seeds.push_back(s);
    }
    seeds.push_back(bloch_steady_state(p));
    if (auto d = dark_seed_gamma0(p)) {
        seeds.push_back(*d);
        // Partner root of the gamma -> 0+ balance Jx^2 + 2 Jz^2 + Jz = 0 (the
        // middle, saddle branch).
        const double jx = d->J.x();
        const double disc = 1.0 - 8.0 * jx * jx;
        if (disc >= 0.0) {
            MeanFieldState m;
            m.J = Eigen::Vector3d(jx, 0.0, 0.25 * (-1.0 + std::sqrt(disc)));
            m.A = steady_phonon_amplitude(m.J.z(), p);
            seeds.push_back(m);
            m.J.z() = 0.25 * (-1.0 - std::sqrt(disc));
            m.A = steady_phonon_amplitude(m.J.z(), p);
            seeds.push_back(m);
        }
    }
    return seeds;
}

std::optional<MeanFieldState> newton_collective(const ModelParams& p, const MeanFieldState& seed) {
    const VecFn f = [&p](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return rhs_collective(CollectiveVector(x), p);
    };
    auto root = damped_newton(f, Eigen::VectorXd(seed.to_vector()));
    if (!root) return std::nullopt;
    return MeanFieldState::from_vector(CollectiveVector(*root));
}

Eigen::Matrix<double, 5, 5> collective_jacobian_fd(const MeanFieldState& s, const ModelParams& p,
                                                   double step) {
    const VecFn f = [&p](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return rhs_collective(CollectiveVector(x), p);
    };
    return fd_jacobian(f, Eigen::VectorXd(s.to_vector()), step);
}

FixedPoint classify_stability(const FixedPoint& fp, const ModelParams& p) {
    FixedPoint out = fp;
    out.residual = rhs_collective(fp.state.to_vector(), p).norm();
    out.eigenvalues = eigenvalues_of(collective_jacobian_fd(fp.state, p, kFdStep));
    out.stability = stability_of(out.eigenvalues);
    return out;
}

MultiModeFixedPoint classify_stability(const MultiModeFixedPoint& fp, const ModelParams& p) {
    MultiModeFixedPoint out = fp;
    const VecFn f = [&p](const Eigen::VectorXd& x) { return rhs_multimode(x, p); };
    const Eigen::VectorXd x = fp.state.to_vector();
    out.residual = f(x).norm();
    out.eigenvalues = eigenvalues_of(fd_jacobian(f, x, kFdStep));
    out.stability = stability_of(out.eigenvalues);
    return out;
}

FixedPointSearch find_fixed_points(const ModelParams& p_in, const std::vector<MeanFieldState>& seeds) {
    const ModelParams p = validate_params(p_in);
    if (!p.modes.single_mode())
        throw ParamError("find_fixed_points works on the single-mode system; use "
                         "find_multimode_fixed_points");
    std::vector<MeanFieldState> all = default_seeds(p);
    all.insert(all.end(), seeds.begin(), seeds.end());

    FixedPointSearch out;
    for (const auto& seed : all) {
        auto root = newton_collective(p, seed);
        if (!root || !inside_bloch_ball(root->J)) continue;
        const CollectiveVector v = root->to_vector();
        if (contains(out.points, [&](const FixedPoint& f) {
                return (f.state.to_vector() - v).cwiseAbs().maxCoeff() < kDedupTol;
            }))
            continue;
        FixedPoint fp;
        fp.state = *root;
        fp = classify_stability(fp, p);
        fp.branch = branch_of(fp.state, p);
        out.points.push_back(fp);
    }
    refine_coexisting_dark(out.points);
    std::sort(out.points.begin(), out.points.end(), [](const FixedPoint& a, const FixedPoint& b) {
        return a.state.J.z() > b.state.J.z();
    });
    if (out.points.empty()) out.diagnostic = "Newton iteration did not converge from any seed";
    return out;
}

bool is_homogeneous(const MultiModeState& s, double tol) {
    for (std::size_t i = 1; i < s.sigma.size(); ++i)
        if ((s.sigma[i] - s.sigma[0]).cwiseAbs().maxCoeff() > tol) return false;
    for (std::size_t m = 1; m < s.A.size(); ++m)
        if (std::abs(s.A[m]) > tol) return false;
    return true;
}

MultiModeFixedPointSearch find_multimode_fixed_points(const ModelParams& p_in,
                                                      const std::vector<MultiModeState>& seeds) {
    const ModelParams p = validate_params(p_in);
    const int M = p.modes.count();
    const int N = p.N;

    const auto single = find_fixed_points(collective_params(p));
    std::vector<MultiModeState> all;
    for (const auto& fp : single.points) {
        const MultiModeState base = embed_collective(fp.state, M, N);
        all.push_back(base);
        const Eigen::VectorXd v = base.to_vector();
        for (Eigen::Index k = 0; k < v.size(); ++k) {
            // Perturb real parts of the amplitudes and every spin component.
            if (k < 2 * M && k % 2 == 1) continue;
            for (double d : {-0.1, 0.1}) {
                Eigen::VectorXd w = v;
                w[k] += d;
                all.push_back(MultiModeState::from_vector(w, M, N));
            }
        }
    }
    // Per-ion mixtures of the single-mode spin states.
    const int K = static_cast<int>(single.points.size());
    const double combos = std::pow(static_cast<double>(K), N);
    if (K > 1 && combos <= 729.0) {
        std::vector<int> pick(N, 0);
        for (long c = 0; c < static_cast<long>(combos); ++c) {
            long r = c;
            for (int i = 0; i < N; ++i, r /= K) pick[i] = static_cast<int>(r % K);
            MultiModeState s;
            s.sigma.resize(N);
            for (int i = 0; i < N; ++i) s.sigma[i] = single.points[pick[i]].state.J;
            s.A.resize(M);
            const cplx I(0.0, 1.0);
            for (int m = 0; m < M; ++m) {
                double drive = 0.0;
                for (int i = 0; i < N; ++i) drive += p.modes.coupling(i, m) * s.sigma[i].z();
                s.A[m] = -I * drive / (I * p.modes.frequencies[m] + p.phonon_decay);
            }
            all.push_back(s);
        }
    }
    all.insert(all.end(), seeds.begin(), seeds.end());

    const VecFn f = [&p](const Eigen::VectorXd& x) { return rhs_multimode(x, p); };
    MultiModeFixedPointSearch out;
    std::vector<Eigen::VectorXd> found;
    for (const auto& seed : all) {
        if (seed.modes() != M || seed.ions() != N) throw ParamError("seed has the wrong dimensions");
        auto root = damped_newton(f, seed.to_vector());
        if (!root) continue;
        const MultiModeState s = MultiModeState::from_vector(*root, M, N);
        if (!std::all_of(s.sigma.begin(), s.sigma.end(), inside_bloch_ball)) continue;
        if (contains(found, [&](const Eigen::VectorXd& w) {
                return (w - *root).cwiseAbs().maxCoeff() < kDedupTol;
            }))
            continue;
        found.push_back(*root);
        MultiModeFixedPoint fp;
        fp.state = s;
        fp = classify_stability(fp, p);
        fp.branch = is_homogeneous(s) ? branch_of(collective_of(s), p) : Branch::Other;
        out.points.push_back(fp);
    }
    if (out.points.empty()) out.diagnostic = "Newton iteration did not converge from any seed";
    return out;
}

double critical_coupling_gamma0(const ModelParams& p) {
    return std::sqrt(std::sqrt(2.0) * p.rabi * p.omega() / p.N);
}

std::optional<double> max_complex_real_part(const std::vector<cplx>& eigenvalues) {
    std::optional<double> best;
    for (const cplx& l : eigenvalues) {
        if (std::abs(l.imag()) <= kComplexPairTol) continue;
        if (!best || l.real() > *best) best = l.real();
    }
    return best;
}

namespace {

struct BranchSample {
    double V;
    MeanFieldState state;
    std::vector<cplx> eigenvalues;
    double g;  // leading complex-pair real part
};

std::optional<BranchSample> bright_sample(const ModelParams& base, double V,
                                          const MeanFieldState& guess) {
    ModelParams p = base;
    p.coupling = V;
    p.modes = com_mode(p.N, p.omega(), V);
    auto root = newton_collective(p, guess);
    if (!root || !inside_bloch_ball(root->J)) return std::nullopt;
    FixedPoint fp;
    fp.state = *root;
    fp = classify_stability(fp, p);
    const auto g = max_complex_real_part(fp.eigenvalues);
    if (!g) return std::nullopt;
    return BranchSample{V, *root, fp.eigenvalues, *g};
}

}  // namespace

std::vector<BifurcationPoint> detect_hopf(const ModelParams& p_in, const HopfSweep& sweep) {
    if (!(sweep.V_max > sweep.V_min) || sweep.points < 2)
        throw ParamError("Hopf sweep needs V_max > V_min and at least two points");
    ModelParams p = validate_params(p_in);
    if (!p.modes.single_mode()) throw ParamError("detect_hopf works on the single-mode system");

    const double dV = (sweep.V_max - sweep.V_min) / (sweep.points - 1);
    // V = 0 is degenerate without phonon damping; start one grid step in.
    const double V0 = sweep.V_min > 0.0 ? sweep.V_min : dV;
    ModelParams p0 = p;
    p0.coupling = V0;
    auto prev = bright_sample(p, V0, bloch_steady_state(p0));
    std::vector<BifurcationPoint> out;
    if (!prev) return out;

    for (int k = 1; k < sweep.points; ++k) {
        const double V = sweep.V_min + k * dV;
        if (V <= prev->V) continue;
        auto cur = bright_sample(p, V, prev->state);
        if (!cur || (cur->state.to_vector() - prev->state.to_vector()).cwiseAbs().maxCoeff() > 0.1)
            break;  // bright branch lost (fold) or jumped to another branch
        if ((prev->g > 0.0) != (cur->g > 0.0)) {
            BranchSample lo = *prev, hi = *cur;
            for (int it = 0; it < 200 && std::abs(lo.g) >= 1e-8 && std::abs(hi.g) >= 1e-8; ++it) {
                if (hi.V - lo.V < 1e-15) break;
                const double mid = 0.5 * (lo.V + hi.V);
                auto m = bright_sample(p, mid, lo.state);
                if (!m) break;
                if ((m->g > 0.0) == (lo.g > 0.0)) lo = *m;
                else hi = *m;
            }
            const BranchSample& best = std::abs(lo.g) <= std::abs(hi.g) ? lo : hi;
            BifurcationPoint bp;
            bp.V = best.V;
            bp.state = best.state;
            for (const cplx& l : best.eigenvalues) {
                if (l.imag() > kComplexPairTol && l.real() == best.g) bp.eigenvalue = l;
            }
            out.push_back(bp);
        }
        prev = cur;
    }
    return out;
}

std::optional<LimitCycle> detect_limit_cycle(const ModelParams& p_in, const MeanFieldState& s0,
                                             const LimitCycleOptions& opt) {
    const ModelParams p = validate_params(p_in);
    const double t0 = 0.5 * opt.t_total;
    std::vector<double> times;
    for (double t = t0; t < opt.t_total; t += opt.sample_dt) times.push_back(t);
    times.push_back(opt.t_total);
    IntegrationOptions io;
    io.rtol = opt.rtol;
    const auto traj = integrate(s0, p, times, io);

    const std::size_t n = times.size();
    std::vector<double> X(n);
    for (std::size_t k = 0; k < n; ++k) X[k] = traj.states[k].X();

    const auto p2p = [&](std::size_t a, std::size_t b) {
        const auto [lo, hi] = std::minmax_element(X.begin() + a, X.begin() + b);
        return *hi - *lo;
    };
    const double amplitude = p2p(0, n);
    if (!(amplitude > opt.min_peak_to_peak)) return std::nullopt;
    if (p2p(3 * n / 4, n) < opt.min_amplitude_ratio * p2p(n / 2, 3 * n / 4)) return std::nullopt;

    const double mean = std::accumulate(X.begin(), X.end(), 0.0) / static_cast<double>(n);
    std::vector<double> up;
    for (std::size_t k = 1; k < n; ++k) {
        const double a = X[k - 1] - mean, b = X[k] - mean;
        if (a < 0.0 && b >= 0.0) up.push_back(times[k - 1] + (times[k] - times[k - 1]) * a / (a - b));
    }
    if (up.size() < 3) return std::nullopt;
    std::vector<double> intervals(up.size() - 1);
    for (std::size_t k = 1; k < up.size(); ++k) intervals[k - 1] = up[k] - up[k - 1];
    const double period =
        std::accumulate(intervals.begin(), intervals.end(), 0.0) / static_cast<double>(intervals.size());
    for (double d : intervals)
        if (std::abs(d - period) > opt.period_tol * period) return std::nullopt;
    return LimitCycle{amplitude, period};
}

bool PhaseResult::bright_stable() const {
    return std::any_of(fixed_points.begin(), fixed_points.end(), [](const FixedPoint& f) {
        return f.stability == Stability::Stable && f.branch == Branch::Bright;
    });
}

bool PhaseResult::dark_stable() const {
    return std::any_of(fixed_points.begin(), fixed_points.end(), [](const FixedPoint& f) {
        return f.stability == Stability::Stable && f.branch == Branch::Dark;
    });
}

PhaseResult classify_phase(const ModelParams& p_in, const LimitCycleOptions& lc) {
    const ModelParams p = validate_params(p_in);
    PhaseResult res;
    auto search = find_fixed_points(p);
    res.fixed_points = std::move(search.points);

    // Fixed points that lost stability through a complex pair: the phonon
    // lasing candidates. Each is probed from a small displacement.
    std::vector<const FixedPoint*> oscillatory;
    for (const auto& f : res.fixed_points) {
        if (f.stability == Stability::Stable) continue;
        const auto g = max_complex_real_part(f.eigenvalues);
        if (g && *g > kStabilityEps) oscillatory.push_back(&f);
    }
    res.hopf = !oscillatory.empty();
    for (const FixedPoint* f : oscillatory) {
        MeanFieldState s0 = f->state;
        s0.A += cplx(1e-2, 0.0);
        res.limit_cycle = detect_limit_cycle(p, s0, lc);
        if (res.limit_cycle) break;
    }
    const int n_stable = static_cast<int>(
        std::count_if(res.fixed_points.begin(), res.fixed_points.end(),
                      [](const FixedPoint& f) { return f.stability == Stability::Stable; }));
    const bool marginal = std::any_of(res.fixed_points.begin(), res.fixed_points.end(),
                                      [](const FixedPoint& f) { return f.stability == Stability::Marginal; });
    // Near a marginal point, slow relaxation cannot be told from a cycle.
    if (!res.limit_cycle && n_stable == 0 && !marginal)
        res.limit_cycle = detect_limit_cycle(p, ground_state(), lc);

    const bool bright = res.bright_stable();
    const bool dark = res.dark_stable();
    if (res.limit_cycle) res.label = dark ? PhaseLabel::PLD : PhaseLabel::PL;
    else if (bright && dark) res.label = PhaseLabel::BD;
    else if (bright) res.label = PhaseLabel::B;
    else if (dark) res.label = PhaseLabel::D;
    else if (n_stable == 1) res.label = PhaseLabel::Crossover;
    else if (marginal)
        res.diagnostic = "Unclassifiable: non-hyperbolic fixed point (marginal spectrum)";
    else res.diagnostic = "Unclassifiable: no stable attractor identified";
    if (!search.diagnostic.empty())
        res.diagnostic += (res.diagnostic.empty() ? "" : "; ") + search.diagnostic;
    return res;
}

}  // namespace dicke
