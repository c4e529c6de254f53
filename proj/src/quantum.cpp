#include "dicke/quantum.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "dicke/io.hpp"
#include "dicke/ode.hpp"
#include "dicke/parallel.hpp"

namespace dicke::quantum {

namespace {

using Triplet = Eigen::Triplet<cplx>;

constexpr std::uint64_t kRecoilStream = 0x7265636f696cULL;

double spin_z(std::size_t spin_bits, int ion) {
    return ((spin_bits >> ion) & 1U) ? 0.5 : -0.5;
}

// Occupation of included slot `slot` in basis state k.
int occupation(const HilbertSpec& h, std::size_t k, int slot) {
    return static_cast<int>((k / h.stride(slot)) % static_cast<std::size_t>(h.cutoffs[slot] + 1));
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

std::size_t HilbertSpec::fock_dim() const {
    std::size_t d = 1;
    for (int c : cutoffs) d *= static_cast<std::size_t>(c + 1);
    return d;
}

std::size_t HilbertSpec::stride(int slot) const {
    std::size_t s = spin_dim();
    for (int k = 0; k < slot; ++k) s *= static_cast<std::size_t>(cutoffs[k] + 1);
    return s;
}

void HilbertSpec::validate(const ModelParams& p) const {
    if (N != p.N) throw DimensionError("HilbertSpec ion count differs from the model");
    if (N < 1 || N > 30) throw DimensionError("ion count out of range for the spin register");
    if (modes.empty() || modes.size() != cutoffs.size())
        throw DimensionError("need one Fock cutoff per included mode");
    for (std::size_t k = 0; k < modes.size(); ++k) {
        if (modes[k] < 0 || modes[k] >= p.modes.count())
            throw DimensionError("included mode index out of range");
        if (cutoffs[k] < 1) throw DimensionError("Fock cutoff must be >= 1");
        for (std::size_t j = 0; j < k; ++j)
            if (modes[j] == modes[k]) throw DimensionError("mode included twice");
    }
    double dim = static_cast<double>(spin_dim());
    for (int c : cutoffs) dim *= c + 1;
    if (dim > static_cast<double>(max_dimension)) {
        std::ostringstream os;
        os << "Hilbert dimension " << dim << " exceeds the limit " << max_dimension;
        throw DimensionError(os.str());
    }
}

int default_fock_cutoff(const ModelParams& p) {
    const double a = p.coupling / (2.0 * p.rabi);
    return static_cast<int>(std::ceil(a * a + 6.0 * a + 10.0));
}

HilbertSpec default_hilbert(const ModelParams& p_in) {
    const ModelParams p = validate_params(p_in);
    HilbertSpec h;
    h.N = p.N;
    if (p.N == 3 && p.modes.count() == 3) h.modes = {0, 1};
    else h.modes = {0};
    h.cutoffs.assign(h.modes.size(), default_fock_cutoff(p));
    return h;
}

SparseMatrix build_hamiltonian(const ModelParams& p_in, const HilbertSpec& h) {
    const ModelParams p = validate_params(p_in);
    h.validate(p);
    const std::size_t dim = h.dimension();
    const std::size_t sd = h.spin_dim();
    const int slots = static_cast<int>(h.modes.size());
    std::vector<Triplet> trip;
    trip.reserve(dim * (1 + p.N + 2 * slots));
    for (std::size_t k = 0; k < dim; ++k) {
        const std::size_t bits = k % sd;
        double diag = 0.0;
        for (int i = 0; i < p.N; ++i) {
            diag += p.detuning * spin_z(bits, i);
            trip.emplace_back(k ^ (std::size_t{1} << i), k, 0.5 * p.rabi);
        }
        for (int s = 0; s < slots; ++s) {
            const int m = h.modes[s];
            const int n = occupation(h, k, s);
            diag += p.modes.frequencies[m] * n;
            if (n < h.cutoffs[s]) {
                double c = 0.0;
                for (int i = 0; i < p.N; ++i) c += p.modes.coupling(i, m) * spin_z(bits, i);
                const double amp = c * std::sqrt(static_cast<double>(n + 1));
                const std::size_t up = k + h.stride(s);
                trip.emplace_back(up, k, amp);
                trip.emplace_back(k, up, amp);
            }
        }
        trip.emplace_back(k, k, diag);
    }
    SparseMatrix H(dim, dim);
    H.setFromTriplets(trip.begin(), trip.end());
    H.prune(cplx(0.0, 0.0));
    return H;
}

SparseMatrix spin_lowering(const HilbertSpec& h, int ion) {
    const std::size_t dim = h.dimension();
    const std::size_t bit = std::size_t{1} << ion;
    std::vector<Triplet> trip;
    for (std::size_t k = 0; k < dim; ++k)
        if (k & bit) trip.emplace_back(k ^ bit, k, 1.0);
    SparseMatrix S(dim, dim);
    S.setFromTriplets(trip.begin(), trip.end());
    return S;
}

SparseMatrix mode_lowering(const HilbertSpec& h, int slot) {
    const std::size_t dim = h.dimension();
    std::vector<Triplet> trip;
    for (std::size_t k = 0; k < dim; ++k) {
        const int n = occupation(h, k, slot);
        if (n > 0) trip.emplace_back(k - h.stride(slot), k, std::sqrt(static_cast<double>(n)));
    }
    SparseMatrix a(dim, dim);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
}

Eigen::VectorXd collective_sz_diagonal(const HilbertSpec& h) {
    const std::size_t dim = h.dimension();
    Eigen::VectorXd d(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        const int ups = std::popcount(k % h.spin_dim());
        d[k] = (ups - 0.5 * h.N) / h.N;
    }
    return d;
}

Eigen::VectorXd number_diagonal(const HilbertSpec& h, int slot) {
    const std::size_t dim = h.dimension();
    Eigen::VectorXd d(dim);
    for (std::size_t k = 0; k < dim; ++k) d[k] = occupation(h, k, slot);
    return d;
}

StateVector basis_state(const HilbertSpec& h, std::uint64_t up_mask, const std::vector<int>& fock) {
    if (fock.size() != h.modes.size()) throw DimensionError("one occupation per included mode");
    std::size_t k = up_mask % h.spin_dim();
    for (std::size_t s = 0; s < fock.size(); ++s) {
        if (fock[s] < 0 || fock[s] > h.cutoffs[s]) throw DimensionError("occupation above cutoff");
        k += h.stride(static_cast<int>(s)) * static_cast<std::size_t>(fock[s]);
    }
    StateVector psi = StateVector::Zero(h.dimension());
    psi[k] = 1.0;
    return psi;
}

StateVector ground_state(const HilbertSpec& h) {
    return basis_state(h, 0, std::vector<int>(h.modes.size(), 0));
}

double recoil_density(double x) { return (std::abs(x) <= 1.0) ? 0.375 * (1.0 + x * x) : 0.0; }

double sample_recoil_x(std::mt19937_64& rng) {
    // CDF(x) = 1/2 + (3/8)(x + x^3/3); solve x^3 + 3x - 3c = 0 with Cardano
    // (one real root since the discriminant is positive).
    const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const double c = (8.0 / 3.0) * (u - 0.5);
    const double q = -3.0 * c;
    const double root = std::sqrt(0.25 * q * q + 1.0);
    const double x = std::cbrt(-0.5 * q + root) + std::cbrt(-0.5 * q - root);
    return std::clamp(x, -1.0, 1.0);
}

Eigen::MatrixXcd displacement_operator(double eta, double x, int n_max) {
    const int L = n_max + 1;
    Eigen::MatrixXd X = Eigen::MatrixXd::Zero(L, L);
    for (int n = 1; n < L; ++n) X(n - 1, n) = X(n, n - 1) = std::sqrt(static_cast<double>(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X);
    const Eigen::VectorXcd phase =
        (cplx(0.0, eta * x) * es.eigenvalues().cast<cplx>()).array().exp().matrix();
    const Eigen::MatrixXcd Q = es.eigenvectors().cast<cplx>();
    return Q * phase.asDiagonal() * Q.transpose();
}

Eigen::MatrixXcd JumpFamily::displacement(double x) const {
    const Eigen::Index L = position_values.size();
    if (recoil.eta * x == 0.0) return Eigen::MatrixXcd::Identity(L, L);
    const Eigen::VectorXcd phase =
        (cplx(0.0, recoil.eta * x) * position_values.cast<cplx>()).array().exp().matrix();
    const Eigen::MatrixXcd Q = position_vectors.cast<cplx>();
    return Q * phase.asDiagonal() * Q.transpose();
}

JumpFamily build_jump_operators(const ModelParams& p_in, const HilbertSpec& h, const RecoilSpec& r) {
    const ModelParams p = validate_params(p_in);
    h.validate(p);
    JumpFamily fam;
    fam.recoil = r;
    const double amp = std::sqrt(p.spin_decay);
    for (int i = 0; i < p.N; ++i) fam.ops.push_back(amp * spin_lowering(h, i));
    const auto com = std::find(h.modes.begin(), h.modes.end(), 0);
    if (com != h.modes.end()) {
        fam.recoil_slot = static_cast<int>(com - h.modes.begin());
        const int L = h.cutoffs[fam.recoil_slot] + 1;
        Eigen::MatrixXd X = Eigen::MatrixXd::Zero(L, L);
        for (int n = 1; n < L; ++n) X(n - 1, n) = X(n, n - 1) = std::sqrt(static_cast<double>(n));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X);
        fam.position_vectors = es.eigenvectors();
        fam.position_values = es.eigenvalues();
    }
    return fam;
}

void apply_mode_operator(const HilbertSpec& h, int slot, const Eigen::MatrixXcd& op, StateVector& psi) {
    const std::size_t inner = h.stride(slot);
    const std::size_t L = static_cast<std::size_t>(h.cutoffs[slot] + 1);
    const std::size_t outer = h.dimension() / (inner * L);
    Eigen::VectorXcd v(L), w(L);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t base = i + inner * L * o;
            for (std::size_t n = 0; n < L; ++n) v[n] = psi[base + inner * n];
            w.noalias() = op * v;
            for (std::size_t n = 0; n < L; ++n) psi[base + inner * n] = w[n];
        }
    }
}

std::vector<int> EmissionRecord::counts_per_ion() const {
    std::vector<int> c(N, 0);
    for (const auto& e : events) ++c.at(e.ion);
    return c;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ (index * 0xd1342543de82ef95ULL + 1));
}

namespace {

struct Observables {
    Eigen::VectorXd jz;
    std::vector<Eigen::VectorXd> number;
    std::vector<SparseMatrix> lowering;
    Eigen::VectorXd top;  // 1 on states with a mode in its top two levels
    std::vector<Eigen::VectorXd> top_slot;

    explicit Observables(const HilbertSpec& h) : jz(collective_sz_diagonal(h)) {
        const std::size_t dim = h.dimension();
        top = Eigen::VectorXd::Zero(dim);
        for (int s = 0; s < static_cast<int>(h.modes.size()); ++s) {
            number.push_back(number_diagonal(h, s));
            lowering.push_back(mode_lowering(h, s));
            top_slot.push_back(Eigen::VectorXd::Zero(dim));
            for (std::size_t k = 0; k < dim; ++k)
                if (number.back()[k] >= h.cutoffs[s] - 1) top[k] = top_slot.back()[k] = 1.0;
        }
    }

    void sample(const StateVector& psi_unnorm, double t, ObservableSeries& out) const {
        const double n2 = psi_unnorm.squaredNorm();
        const Eigen::VectorXd prob = psi_unnorm.cwiseAbs2() / n2;
        out.times.push_back(t);
        out.Jz.push_back(prob.dot(jz));
        for (std::size_t s = 0; s < number.size(); ++s) {
            out.n[s].push_back(prob.dot(number[s]));
            out.A[s].push_back(psi_unnorm.dot(lowering[s] * psi_unnorm) / n2);
        }
    }

    double top_population(const StateVector& psi) const {
        return psi.cwiseAbs2().dot(top) / psi.squaredNorm();
    }

    double top_population(const StateVector& psi, int slot) const {
        return psi.cwiseAbs2().dot(top_slot[slot]) / psi.squaredNorm();
    }
};

// exp(-i E s) for the diagonal E = Delta sum_i S^z_i + sum_m omega_m n_m,
// factorised into a spin part and one factor per included mode.
class FreeFrame {
public:
    FreeFrame(const HilbertSpec& h, const SparseMatrix& H) {
        const std::size_t dim = h.dimension();
        const std::size_t sd = h.spin_dim();
        spin_index_.resize(dim);
        spin_energy_.assign(sd, 0.0);
        for (std::size_t k = 0; k < dim; ++k) spin_index_[k] = static_cast<std::uint32_t>(k % sd);
        const Eigen::VectorXcd diag = H.diagonal();
        for (std::size_t b = 0; b < sd; ++b) spin_energy_[b] = diag[b].real();
        for (int s = 0; s < static_cast<int>(h.modes.size()); ++s) {
            std::vector<std::uint16_t> level(dim);
            for (std::size_t k = 0; k < dim; ++k) level[k] = static_cast<std::uint16_t>(occupation(h, k, s));
            levels_.push_back(std::move(level));
            // Energy per quantum from the first excited level of this slot.
            omega_.push_back(diag[h.stride(s)].real() - diag[0].real());
            cutoff_.push_back(h.cutoffs[s]);
        }
    }

    void phases(double s, StateVector& out) const {
        std::vector<cplx> spin(spin_energy_.size());
        for (std::size_t b = 0; b < spin.size(); ++b) spin[b] = std::polar(1.0, -spin_energy_[b] * s);
        std::vector<std::vector<cplx>> mode(levels_.size());
        for (std::size_t m = 0; m < levels_.size(); ++m) {
            mode[m].resize(static_cast<std::size_t>(cutoff_[m] + 1));
            for (int n = 0; n <= cutoff_[m]; ++n) mode[m][n] = std::polar(1.0, -omega_[m] * n * s);
        }
        const std::size_t dim = spin_index_.size();
        out.resize(static_cast<Eigen::Index>(dim));
        for (std::size_t k = 0; k < dim; ++k) {
            cplx z = spin[spin_index_[k]];
            for (std::size_t m = 0; m < levels_.size(); ++m) z *= mode[m][levels_[m][k]];
            out[k] = z;
        }
    }

private:
    std::vector<std::uint32_t> spin_index_;
    std::vector<double> spin_energy_;
    std::vector<std::vector<std::uint16_t>> levels_;
    std::vector<double> omega_;
    std::vector<int> cutoff_;
};

}  // namespace

namespace {

// Operators of one truncated space, rebuilt when the Fock cutoff grows.
struct Engine {
    JumpFamily jumps;
    SparseMatrix gen;  // non-Hermitian generator without the diagonal energies
    FreeFrame frame;
    Observables obs;

    Engine(const ModelParams& p, const HilbertSpec& h, const RecoilSpec& r)
        : jumps(build_jump_operators(p, h, r)), gen(build_hamiltonian(p, h)), frame(h, gen), obs(h) {
        // G = -i (H - E) - (gamma / 2) sum_i S_i^+ S_i^-, with E the diagonal of H.
        for (std::size_t k = 0; k < h.dimension(); ++k)
            gen.coeffRef(k, k) = cplx(0.0, -0.5 * p.spin_decay * std::popcount(k % h.spin_dim()));
        gen *= cplx(0.0, -1.0);
        gen.prune(cplx(0.0, 0.0));
        gen.makeCompressed();
    }
};

}  // namespace

StateVector resize_fock(const HilbertSpec& from, const HilbertSpec& to, const StateVector& psi) {
    if (from.N != to.N || from.modes != to.modes) throw DimensionError("spaces differ in ions or modes");
    if (static_cast<std::size_t>(psi.size()) != from.dimension()) throw DimensionError("state has the wrong size");
    const std::size_t sd = from.spin_dim();
    StateVector out = StateVector::Zero(static_cast<Eigen::Index>(to.dimension()));
    for (std::size_t k = 0; k < from.dimension(); ++k) {
        if (psi[k] == cplx(0.0, 0.0)) continue;
        std::size_t target = k % sd;
        bool fits = true;
        for (int s = 0; s < static_cast<int>(from.modes.size()); ++s) {
            const int n = occupation(from, k, s);
            if (n > to.cutoffs[s]) fits = false;
            target += static_cast<std::size_t>(n) * to.stride(s);
        }
        if (!fits) throw DimensionError("state populates levels above the target cutoff");
        out[target] = psi[k];
    }
    return out;
}

McwfResult mcwf_trajectory(const StateVector& psi0, const ModelParams& p_in, const HilbertSpec& h_in,
                           const RecoilSpec& r, const McwfOptions& opt) {
    const ModelParams p = validate_params(p_in);
    h_in.validate(p);
    if (static_cast<std::size_t>(psi0.size()) != h_in.dimension()) throw DimensionError("initial state has the wrong size");
    if (std::abs(psi0.squaredNorm() - 1.0) > 1e-8) throw std::invalid_argument("initial state must be normalised");
    if (!(opt.t_final > 0.0)) throw std::invalid_argument("t_final must be > 0");
    if (!(opt.dt_max > 0.0)) throw std::invalid_argument("dt_max must be > 0");
    if (r.enabled && !(r.eta >= 0.0)) throw std::invalid_argument("eta must be >= 0");

    // Integrate in the interaction picture of the diagonal part E of H:
    // psi(t) = exp(-i E (t - t_ref)) phi(t), d phi/dt = e^{iEs} G e^{-iEs} phi.
    // This removes the fast omega * n phase rotation from the integrated
    // variable; t_ref is reset at every emission and every cutoff change.
    HilbertSpec h = h_in;
    auto eng = std::make_unique<Engine>(p, h, r);

    McwfResult res;
    res.record.t_final = opt.t_final;
    res.record.seed = opt.seed;
    res.record.N = p.N;
    res.record.recoil = r.enabled;
    res.series.n.resize(h.modes.size());
    res.series.A.resize(h.modes.size());

    std::mt19937_64 rng(opt.seed);
    std::mt19937_64 recoil_rng(derive_seed(opt.seed, kRecoilStream));
    std::uniform_real_distribution<double> uniform(0.0, 1.0);

    ode::Tolerances tol;
    tol.rtol = opt.rtol;
    tol.atol = opt.atol;
    tol.h_max = opt.dt_max;
    double t_ref = 0.0;
    StateVector phase, lab;
    ode::DormandPrince<StateVector> solver(
        [&](double t, const StateVector& y, StateVector& dy) {
            eng->frame.phases(t - t_ref, phase);
            lab = phase.cwiseProduct(y);
            dy = eng->gen * lab;
            dy = phase.conjugate().cwiseProduct(dy);
        },
        tol);
    solver.reset(0.0, psi0);
    const auto to_lab = [&](double t, const StateVector& phi) {
        StateVector ph;
        eng->frame.phases(t - t_ref, ph);
        return StateVector(ph.cwiseProduct(phi));
    };

    const auto& samples = opt.sample_times;
    std::size_t next_sample = 0;
    while (next_sample < samples.size() && samples[next_sample] <= 0.0) {
        eng->obs.sample(psi0, samples[next_sample], res.series);
        ++next_sample;
    }
    // Space with the saturated slots enlarged.
    const auto grown_spec = [&](const StateVector& psi) {
        HilbertSpec bigger = h;
        for (int s = 0; s < static_cast<int>(h.modes.size()); ++s)
            if (eng->obs.top_population(psi, s) > opt.cutoff_guard) bigger.cutoffs[s] += std::max(8, h.cutoffs[s] / 2);
        return bigger;
    };
    // True when the top Fock levels exceed the guard and the cutoff may grow;
    // throws when growth is disabled or would pass max_dimension.
    const auto saturated = [&](const StateVector& psi, double t) {
        const double pop = eng->obs.top_population(psi);
        res.max_top_population = std::max(res.max_top_population, pop);
        if (pop <= opt.cutoff_guard) return false;
        std::ostringstream os;
        os << "Fock cutoff saturated at t = " << t << ": top-two-level population " << pop << " > "
           << opt.cutoff_guard << "; increase n_max (currently";
        for (int c : h.cutoffs) os << ' ' << c;
        os << ")";
        if (!opt.grow_cutoff) throw CutoffSaturation(os.str());
        if (grown_spec(psi).dimension() > h.max_dimension) throw CutoffSaturation(os.str() + " and growth would pass max_dimension");
        return true;
    };
    // Re-embeds a lab-frame state into the enlarged space.
    const auto grow = [&](StateVector& psi) {
        const HilbertSpec bigger = grown_spec(psi);
        psi = resize_fock(h, bigger, psi);
        h = bigger;
        eng = std::make_unique<Engine>(p, h, r);
        ++res.cutoff_growths;
    };
    if (saturated(psi0, 0.0)) {
        StateVector psi = psi0;
        while (saturated(psi, 0.0)) grow(psi);
        solver.reset(0.0, psi);
    }

    double threshold = uniform(rng);
    while (solver.t() < opt.t_final) {
        const double t_a = solver.t();
        const double t_b = solver.step(opt.t_final);
        const double n2 = solver.y().squaredNorm();
        if (!std::isfinite(n2) || n2 < 1e-300) {
            std::ostringstream os;
            os << "state norm underflow at t = " << t_b << " (norm^2 " << n2 << ", step from " << t_a << ")";
            throw NormUnderflow(os.str());
        }
        if (opt.log_norms) res.norm_log.push_back({t_b, n2, false});

        if (n2 > threshold) {
            while (next_sample < samples.size() && samples[next_sample] <= t_b) {
                const double ts = samples[next_sample++];
                eng->obs.sample(to_lab(ts, ts == t_b ? solver.y() : solver.dense(ts)), ts, res.series);
            }
            if (saturated(solver.y(), t_b)) {
                StateVector psi = to_lab(t_b, solver.y());
                while (saturated(psi, t_b)) grow(psi);
                t_ref = t_b;
                solver.reset(t_b, psi);
            }
            continue;
        }

        // An emission occurred in (t_a, t_b]: locate it on the dense output.
        double lo = t_a, hi = t_b;
        while (hi - lo > opt.jump_time_tol) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (solver.dense(mid).squaredNorm() > threshold) lo = mid;
            else hi = mid;
        }
        const double tau = hi;
        while (next_sample < samples.size() && samples[next_sample] < tau) {
            const double ts = samples[next_sample++];
            eng->obs.sample(to_lab(ts, solver.dense(ts)), ts, res.series);
        }
        StateVector psi = to_lab(tau, tau == t_b ? solver.y() : solver.dense(tau));

        std::vector<double> weight(p.N, 0.0);
        double total = 0.0;
        for (Eigen::Index k = 0; k < psi.size(); ++k) {
            const double a2 = std::norm(psi[k]);
            if (a2 == 0.0) continue;
            const std::size_t bits = static_cast<std::size_t>(k) % h.spin_dim();
            for (int i = 0; i < p.N; ++i)
                if ((bits >> i) & 1U) weight[i] += a2;
        }
        for (double w : weight) total += w;
        if (!(total > 0.0)) throw NormUnderflow("emission triggered with no excited population");
        const double pick = uniform(rng) * total;
        int ion = 0;
        for (double acc = weight[0]; ion + 1 < p.N && acc < pick; acc += weight[++ion]) {
        }

        psi = (eng->jumps.ops[ion] * psi).eval();
        EmissionEvent ev{tau, ion, std::nullopt};
        if (r.enabled) {
            const double x = sample_recoil_x(recoil_rng);
            ev.x = x;
            if (eng->jumps.recoil_slot >= 0 && r.eta * x != 0.0)
                apply_mode_operator(h, eng->jumps.recoil_slot, eng->jumps.displacement(x), psi);
        }
        psi /= psi.norm();
        res.record.events.push_back(ev);
        if (opt.log_norms) res.norm_log.push_back({tau, 1.0, true});
        while (saturated(psi, tau)) grow(psi);
        t_ref = tau;
        solver.reset(tau, psi);
        threshold = uniform(rng);
    }
    res.steps = solver.steps();
    res.cutoffs = h.cutoffs;
    return res;
}

EnsembleAverage mcwf_ensemble(const StateVector& psi0, const ModelParams& p, const HilbertSpec& h,
                              const RecoilSpec& r, const McwfOptions& opt, int n_trajectories,
                              int workers) {
    if (n_trajectories < 1) throw std::invalid_argument("need at least one trajectory");
    std::vector<int> cells(n_trajectories);
    for (int k = 0; k < n_trajectories; ++k) cells[k] = k;
    const auto runs = parallel_map(
        cells,
        [&](int k) {
            McwfOptions o = opt;
            o.seed = derive_seed(opt.seed, static_cast<std::uint64_t>(k));
            o.log_norms = false;
            return mcwf_trajectory(psi0, p, h, r, o);
        },
        workers);

    EnsembleAverage avg;
    avg.times = opt.sample_times;
    const std::size_t T = opt.sample_times.size();
    const std::size_t S = h.modes.size();
    avg.mean_Jz.assign(T, 0.0);
    avg.stderr_Jz.assign(T, 0.0);
    avg.mean_n.assign(S, std::vector<double>(T, 0.0));
    avg.emissions_per_ion.assign(p.N, 0);
    std::vector<double> sq(T, 0.0);
    for (const auto& run : runs) {
        if (!run.ok()) throw std::runtime_error("trajectory failed: " + run.error);
        const auto& s = run.value->series;
        for (std::size_t t = 0; t < T; ++t) {
            avg.mean_Jz[t] += s.Jz[t];
            sq[t] += s.Jz[t] * s.Jz[t];
            for (std::size_t m = 0; m < S; ++m) avg.mean_n[m][t] += s.n[m][t];
        }
        for (const auto& e : run.value->record.events) ++avg.emissions_per_ion[e.ion];
    }
    const double n = n_trajectories;
    for (std::size_t t = 0; t < T; ++t) {
        avg.mean_Jz[t] /= n;
        for (std::size_t m = 0; m < S; ++m) avg.mean_n[m][t] /= n;
        const double var = n > 1 ? std::max(0.0, (sq[t] - n * avg.mean_Jz[t] * avg.mean_Jz[t]) / (n - 1)) : 0.0;
        avg.stderr_Jz[t] = std::sqrt(var / n);
    }
    avg.trajectories = n_trajectories;
    return avg;
}

std::vector<DensityMatrix> lindblad_oracle(const DensityMatrix& rho0, const ModelParams& p_in,
                                           const HilbertSpec& h,
                                           const std::vector<double>& sample_times,
                                           const OracleOptions& opt) {
    const ModelParams p = validate_params(p_in);
    h.validate(p);
    const auto d = static_cast<Eigen::Index>(h.dimension());
    if (static_cast<std::size_t>(d * d) > opt.max_entries) {
        std::ostringstream os;
        os << "density matrix with " << d * d << " entries exceeds the oracle limit " << opt.max_entries;
        throw DimensionError(os.str());
    }
    if (rho0.rows() != d || rho0.cols() != d) throw DimensionError("rho0 has the wrong size");

    const Eigen::MatrixXcd H = Eigen::MatrixXcd(build_hamiltonian(p, h));
    const JumpFamily jumps = build_jump_operators(p, h, RecoilSpec{});
    std::vector<Eigen::MatrixXcd> L;
    Eigen::MatrixXcd Heff = H;
    for (const auto& op : jumps.ops) {
        L.emplace_back(op);
        Heff -= cplx(0.0, 0.5) * (L.back().adjoint() * L.back());
    }
    const Eigen::MatrixXcd HeffAdj = Heff.adjoint();

    auto rhs = [&](double, const Eigen::VectorXcd& y, Eigen::VectorXcd& dy) {
        Eigen::Map<const Eigen::MatrixXcd> rho(y.data(), d, d);
        dy.resize(d * d);
        Eigen::Map<Eigen::MatrixXcd> out(dy.data(), d, d);
        out.noalias() = cplx(0.0, -1.0) * (Heff * rho);
        out.noalias() += cplx(0.0, 1.0) * (rho * HeffAdj);
        for (const auto& Li : L) out.noalias() += Li * rho * Li.adjoint();
    };
    ode::Tolerances tol;
    tol.rtol = opt.rtol;
    tol.atol = opt.atol;
    const Eigen::VectorXcd y0 = Eigen::Map<const Eigen::VectorXcd>(rho0.data(), d * d);
    const auto ys = ode::integrate_samples<Eigen::VectorXcd>(rhs, y0, 0.0, sample_times, tol);
    std::vector<DensityMatrix> out;
    out.reserve(ys.size());
    for (const auto& y : ys) out.push_back(Eigen::Map<const Eigen::MatrixXcd>(y.data(), d, d));
    return out;
}

double expectation_Jz(const HilbertSpec& h, const DensityMatrix& rho) {
    return rho.diagonal().real().dot(collective_sz_diagonal(h));
}

double expectation_Jz(const HilbertSpec& h, const StateVector& psi) {
    return psi.cwiseAbs2().dot(collective_sz_diagonal(h)) / psi.squaredNorm();
}

void write_emission_jsonl(std::ostream& os, const EmissionRecord& rec, const ModelParams& p,
                          const RecoilSpec& r) {
    nlohmann::ordered_json head;
    head["type"] = "header";
    head["N"] = p.N;
    head["rabi"] = p.rabi;
    head["V"] = p.coupling;
    head["gamma"] = p.spin_decay;
    head["delta"] = p.detuning;
    head["kappa"] = p.phonon_decay;
    head["omega"] = p.omega();
    head["seed"] = rec.seed;
    head["t_final"] = rec.t_final;
    head["recoil"] = r.enabled;
    if (r.enabled) head["eta"] = r.eta;
    os << head.dump() << '\n';
    for (const auto& e : rec.events) {
        nlohmann::ordered_json j;
        j["t"] = e.t;
        j["ion"] = e.ion;
        if (e.x) j["x"] = *e.x;
        os << j.dump() << '\n';
    }
}

EmissionRecord read_emission_jsonl(std::istream& is) {
    EmissionRecord rec;
    std::string line;
    bool header = false;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        if (!header) {
            if (j.value("type", "") != "header")
                throw std::runtime_error("emission file must start with a header object");
            rec.N = j.at("N").get<int>();
            rec.seed = j.at("seed").get<std::uint64_t>();
            rec.t_final = j.at("t_final").get<double>();
            rec.recoil = j.value("recoil", false);
            header = true;
            continue;
        }
        EmissionEvent e;
        e.t = j.at("t").get<double>();
        e.ion = j.at("ion").get<int>();
        if (j.contains("x")) e.x = j.at("x").get<double>();
        if (e.ion < 0 || e.ion >= rec.N) throw std::runtime_error("emission event ion index out of range");
        rec.events.push_back(e);
    }
    if (!header) throw std::runtime_error("emission file is empty");
    return rec;
}

void write_observables_csv(std::ostream& os, const ObservableSeries& s) {
    const std::size_t M = s.n.size();
    os << "t,Jz";
    for (std::size_t m = 1; m <= M; ++m) os << ",n_" << m;
    for (std::size_t m = 1; m <= M; ++m) os << ",ReA_" << m;
    for (std::size_t m = 1; m <= M; ++m) os << ",ImA_" << m;
    os << '\n';
    for (std::size_t k = 0; k < s.times.size(); ++k) {
        os << io::fmt(s.times[k]) << ',' << io::fmt(s.Jz[k]);
        for (std::size_t m = 0; m < M; ++m) os << ',' << io::fmt(s.n[m][k]);
        for (std::size_t m = 0; m < M; ++m) os << ',' << io::fmt(s.A[m][k].real());
        for (std::size_t m = 0; m < M; ++m) os << ',' << io::fmt(s.A[m][k].imag());
        os << '\n';
    }
}

}  // namespace dicke::quantum
