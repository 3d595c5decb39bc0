#pragma once

// Master equation obtained by averaging the trajectory equation analytically,
// truncated after its first two term classes.
//
// A pair contraction between a later time t_a and an earlier time t_b carries
//   kappa(t_a - t_b) L_left(t_a) ... L_right(t_b)
// with (kernel, left, right) running over the family terms
//   j=0: (k00_0s + k00_s0, L_M, L_M)
//   j=1: (2 k11_0s, L_M, L^c)  and  (2 k11_s0, L^c, L_M)
// (the factor 2 is L_1^0 = 2 L_M). Class 1 is one contraction (t, s) acting on
// rho(s). Class 2 has four times t > s > s' > s'' and two contractions:
//   crossed (t, s')(s, s''):  L(t) L(s) L(s') L(s'') rho(s)
//   nested  (t, s'')(s, s'):  L(t) L(s) L(s') L(s'') rho(s)
// Every integral is a trapezoid sum with half weights at both ends.

#include "oqs/bath.hpp"
#include "oqs/liouville.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace oqs {

enum class Truncation { class1, class1_class2 };

struct HierarchyConfig {
    Truncation truncation{Truncation::class1_class2};
    std::size_t stride{1};  // sub-sampling of the class-2 time nodes
    TimeGrid grid;

    void validate() const {
        grid.validate();
        if (stride < 1) throw ConfigError("hierarchy: stride must be >= 1");
        if (grid.n % stride != 0) throw ConfigError("hierarchy: stride must divide the step count");
    }
};

struct TermWeights {
    TimeGrid grid;
    std::vector<real> W1, W2, ratio;  // ratio is NaN where W1 == 0
};

namespace detail {

enum class OpKind { commutator, anticommutator };

struct PairTerm {
    std::vector<cplx> kernel;  // indexed by lag
    OpKind left, right;
};

inline bool all_zero(const std::vector<cplx>& v) {
    return std::all_of(v.begin(), v.end(), [](cplx c) { return c == cplx(0.0); });
}

inline std::vector<PairTerm> pair_terms(const CorrelationKernel& kernel) {
    std::vector<PairTerm> terms;
    const std::size_t n = kernel.size();
    PairTerm t0{std::vector<cplx>(n), OpKind::commutator, OpKind::commutator};
    PairTerm t1{std::vector<cplx>(n), OpKind::commutator, OpKind::anticommutator};
    PairTerm t2{std::vector<cplx>(n), OpKind::anticommutator, OpKind::commutator};
    for (std::size_t k = 0; k < n; ++k) {
        t0.kernel[k] = kernel.k00_0s[k] + kernel.k00_s0[k];
        t1.kernel[k] = 2.0 * kernel.k11_0s[k];
        t2.kernel[k] = 2.0 * kernel.k11_s0[k];
    }
    for (auto* t : {&t0, &t1, &t2})
        if (!all_zero(t->kernel)) terms.push_back(std::move(*t));
    return terms;
}

// Multiples of `stride` up to m, plus m itself.
inline std::vector<std::size_t> quadrature_nodes(std::size_t m, std::size_t stride) {
    std::vector<std::size_t> nodes;
    for (std::size_t x = 0; x <= m; x += stride) nodes.push_back(x);
    if (nodes.back() != m) nodes.push_back(m);
    return nodes;
}

inline std::vector<real> trapezoid_weights(const std::vector<std::size_t>& nodes, real dt) {
    std::vector<real> w(nodes.size(), 0.0);
    for (std::size_t i = 1; i < nodes.size(); ++i) {
        const real h = dt * static_cast<real>(nodes[i] - nodes[i - 1]);
        w[i - 1] += 0.5 * h;
        w[i] += 0.5 * h;
    }
    return w;
}

}  // namespace detail

/// Evaluates the class-1 and class-2 right-hand sides on a history of
/// interaction-picture states rho(t_0..t_k). Intermediate sums that depend only
/// on states strictly before the current step are cached, so entries of the
/// history before index k must not change between calls.
class HierarchyEngine {
public:
    HierarchyEngine(const SystemModel& model, const CorrelationKernel& kernel, std::size_t n, std::size_t stride = 1)
        : dt_(kernel.dt), n_(n), stride_(std::max<std::size_t>(1, stride)), N_(model.dim()),
          pairs_(detail::pair_terms(kernel)) {
        if (kernel.size() < n + 1) throw std::invalid_argument("hierarchy: kernel shorter than grid");
        const InteractionFrame frame(model.H);
        LM_.reserve(n + 1);
        LC_.reserve(n + 1);
        for (std::size_t k = 0; k <= n; ++k) {
            const Matrix Xk = frame.rotate(model.X, static_cast<real>(k) * dt_);
            LM_.push_back(commutator_superop(Xk));
            LC_.push_back(anticommutator_superop(Xk));
        }
        class1_cache_.resize(n + 1);
        crossed_cache_.resize(n + 1);
    }

    std::size_t steps() const noexcept { return n_; }
    std::size_t stride() const noexcept { return stride_; }

    const Superoperator& op(detail::OpKind kind, std::size_t k) const {
        return kind == detail::OpKind::commutator ? LM_[k] : LC_[k];
    }

    /// sum_p L_left(t_k) int_0^{t_k} ds kappa_p(t_k - s) L_right(s) rho(s)
    Vector class1(std::size_t k, const std::vector<Matrix>& history) {
        require_history(k, history);
        const Eigen::Index d = N_ * N_;
        Vector out = Vector::Zero(d);
        if (k == 0 || pairs_.empty()) return out;
        for (std::size_t p = 0; p < pairs_.size(); ++p) {
            const auto& pt = pairs_[p];
            Vector acc = Vector::Zero(d);
            for (std::size_t b = 0; b <= k; ++b) {
                const real w = (b == 0 || b == k) ? 0.5 * dt_ : dt_;
                acc += (w * pt.kernel[k - b]) * right_applied(p, b, k, history);
            }
            out += op(pt.left, k) * acc;
        }
        return out;
    }

    /// Crossed plus nested triple-integral families on the stride sub-grid.
    Vector class2(std::size_t k, const std::vector<Matrix>& history) {
        require_history(k, history);
        const Eigen::Index d = N_ * N_;
        Vector out = Vector::Zero(d);
        if (k == 0 || pairs_.empty()) return out;
        const auto outer_nodes = detail::quadrature_nodes(k, stride_);
        const auto outer_w = detail::trapezoid_weights(outer_nodes, dt_);
        const std::size_t P = pairs_.size();

        // Crossed: pair1 = (t, s'), pair2 = (s, s'').
        for (std::size_t p1 = 0; p1 < P; ++p1) {
            Vector outer = Vector::Zero(d);
            for (std::size_t p2 = 0; p2 < P; ++p2) {
                Vector acc = Vector::Zero(d);
                for (std::size_t ia = 0; ia < outer_nodes.size(); ++ia) {
                    const std::size_t a = outer_nodes[ia];
                    if (a == 0) continue;
                    const auto& Z = crossed_inner(a, p1, p2, k, history);
                    const auto b_nodes = detail::quadrature_nodes(a, stride_);
                    const auto b_w = detail::trapezoid_weights(b_nodes, dt_);
                    Vector inner = Vector::Zero(d);
                    for (std::size_t ib = 0; ib < b_nodes.size(); ++ib)
                        inner += (b_w[ib] * pairs_[p1].kernel[k - b_nodes[ib]]) * Z[ib];
                    acc += outer_w[ia] * (op(pairs_[p2].left, a) * inner);
                }
                outer += acc;
            }
            out += op(pairs_[p1].left, k) * outer;
        }

        // Nested: pair1 = (t, s''), pair2 = (s, s').
        for (std::size_t p1 = 0; p1 < P; ++p1) {
            // Q[b] = int_0^{t_b} ds'' kappa1(t_k - s'') L_right1(s''), cumulative trapezoid over the nodes.
            std::vector<Superoperator> Q(outer_nodes.size(), Superoperator::Zero(d, d));
            for (std::size_t i = 1; i < outer_nodes.size(); ++i) {
                const std::size_t c0 = outer_nodes[i - 1], c1 = outer_nodes[i];
                const real h = dt_ * static_cast<real>(c1 - c0);
                Q[i] = Q[i - 1] + (0.5 * h) * (pairs_[p1].kernel[k - c0] * op(pairs_[p1].right, c0) +
                                               pairs_[p1].kernel[k - c1] * op(pairs_[p1].right, c1));
            }
            Vector outer = Vector::Zero(d);
            for (std::size_t p2 = 0; p2 < P; ++p2) {
                std::vector<Superoperator> T(outer_nodes.size());
                for (std::size_t i = 0; i < outer_nodes.size(); ++i) T[i] = op(pairs_[p2].right, outer_nodes[i]) * Q[i];
                for (std::size_t ia = 0; ia < outer_nodes.size(); ++ia) {
                    const std::size_t a = outer_nodes[ia];
                    if (a == 0) continue;
                    // Node lists of sub-intervals are prefixes of the outer list,
                    // except for a non-multiple final endpoint.
                    const auto b_nodes = detail::quadrature_nodes(a, stride_);
                    const auto b_w = detail::trapezoid_weights(b_nodes, dt_);
                    Superoperator Msum = Superoperator::Zero(d, d);
                    for (std::size_t ib = 0; ib < b_nodes.size(); ++ib)
                        Msum += (b_w[ib] * pairs_[p2].kernel[a - b_nodes[ib]]) * T[ib];
                    outer += outer_w[ia] * (op(pairs_[p2].left, a) * (Msum * flatten(history[a])));
                }
            }
            out += op(pairs_[p1].left, k) * outer;
        }
        return out;
    }

private:
    void require_history(std::size_t k, const std::vector<Matrix>& history) const {
        if (k > n_) throw std::invalid_argument("hierarchy: step beyond grid");
        if (history.size() < k + 1) throw std::invalid_argument("hierarchy: history does not cover [0, t_k]");
    }

    // L_right_p(t_b) rho(t_b); cached for b < k.
    Vector right_applied(std::size_t p, std::size_t b, std::size_t k, const std::vector<Matrix>& history) {
        auto& slot = class1_cache_[b];
        const bool fresh = b == k || slot.empty();
        if (!fresh) return slot[p];
        std::vector<Vector> v(pairs_.size());
        const Vector rb = flatten(history[b]);
        for (std::size_t q = 0; q < pairs_.size(); ++q) v[q] = op(pairs_[q].right, b) * rb;
        if (b < k) slot = v;
        return v[p];
    }

    // Z[ib] = L_right1(s'_b) int_0^{s'_b} ds'' kappa2(s_a - s'') L_right2(s'') rho(s_a)
    // for b over the nodes of [0, s_a]. Independent of t, cached for a < k.
    const std::vector<Vector>& crossed_inner(std::size_t a, std::size_t p1, std::size_t p2, std::size_t k,
                                             const std::vector<Matrix>& history) {
        const std::size_t P = pairs_.size();
        auto& slot = crossed_cache_[a];
        if (a == k || slot.empty()) {
            const auto nodes = detail::quadrature_nodes(a, stride_);
            const Vector ra = flatten(history[a]);
            std::vector<std::vector<Vector>> all(P * P);
            for (std::size_t q2 = 0; q2 < P; ++q2) {
                std::vector<Vector> g(nodes.size());
                for (std::size_t i = 0; i < nodes.size(); ++i)
                    g[i] = pairs_[q2].kernel[a - nodes[i]] * (op(pairs_[q2].right, nodes[i]) * ra);
                std::vector<Vector> Y(nodes.size(), Vector::Zero(N_ * N_));
                for (std::size_t i = 1; i < nodes.size(); ++i)
                    Y[i] = Y[i - 1] + (0.5 * dt_ * static_cast<real>(nodes[i] - nodes[i - 1])) * (g[i - 1] + g[i]);
                for (std::size_t q1 = 0; q1 < P; ++q1) {
                    auto& Z = all[q1 * P + q2];
                    Z.resize(nodes.size());
                    for (std::size_t i = 0; i < nodes.size(); ++i) Z[i] = op(pairs_[q1].right, nodes[i]) * Y[i];
                }
            }
            if (a == k) {
                scratch_ = std::move(all);
                return scratch_[p1 * P + p2];
            }
            slot = std::move(all);
        }
        return slot[p1 * P + p2];
    }

    real dt_;
    std::size_t n_, stride_;
    Eigen::Index N_;
    std::vector<detail::PairTerm> pairs_;
    std::vector<Superoperator> LM_, LC_;
    std::vector<std::vector<Vector>> class1_cache_;
    std::vector<std::vector<std::vector<Vector>>> crossed_cache_;
    std::vector<std::vector<Vector>> scratch_;
};

/// Class-1 right-hand side at t_k for an interaction-picture history.
inline Vector class1_rhs(std::size_t k, const std::vector<Matrix>& history, const CorrelationKernel& kernel,
                         const SystemModel& model) {
    HierarchyEngine eng(model, kernel, k);
    return eng.class1(k, history);
}

/// Class-2 right-hand side at t_k for an interaction-picture history.
inline Vector class2_rhs(std::size_t k, const std::vector<Matrix>& history, const CorrelationKernel& kernel,
                         const SystemModel& model, std::size_t stride = 1) {
    HierarchyEngine eng(model, kernel, k, stride);
    return eng.class2(k, history);
}

struct HierarchyResult {
    DensityMatrixSeries series;             // Schroedinger picture
    std::vector<Matrix> interaction;        // interaction-picture states
    TermWeights weights;
    std::vector<real> trace_dev, min_eigenvalue, hermiticity_dev;
    bool trace_flag{false};                 // |tr rho - 1| > 1e-6 somewhere
    bool negative_eigenvalue{false};
    std::vector<std::string> warnings;
};

/// Trapezoidal predictor-corrector (PECE) stepping of d rho/dt = class1 (+ class2).
inline HierarchyResult solve(const SystemModel& model, const CorrelationKernel& kernel, const HierarchyConfig& cfg) {
    cfg.validate();
    const auto& grid = cfg.grid;
    const std::size_t n = grid.n;
    const real dt = grid.dt;
    if (std::abs(kernel.dt - dt) > 1e-12 * dt) throw ConfigError("hierarchy: kernel and grid steps differ");
    HierarchyEngine eng(model, kernel, n, cfg.stride);
    const bool with2 = cfg.truncation == Truncation::class1_class2;
    const auto N = model.dim();

    HierarchyResult res;
    res.warnings = kernel.warnings;
    auto& hist = res.interaction;
    hist.reserve(n + 1);
    hist.push_back(model.rho0);
    res.weights.grid = grid;
    res.weights.W1.assign(n + 1, 0.0);
    res.weights.W2.assign(n + 1, 0.0);

    auto rhs = [&](std::size_t k, bool record) {
        const Vector r1 = eng.class1(k, hist);
        Vector total = r1;
        real w2 = 0.0;
        if (with2) {
            const Vector r2 = eng.class2(k, hist);
            total += r2;
            w2 = spectral_norm(unflatten(r2, N));
        }
        if (record) {
            res.weights.W1[k] = spectral_norm(unflatten(r1, N));
            res.weights.W2[k] = w2;
        }
        return total;
    };

    Vector F = rhs(0, true);
    for (std::size_t k = 0; k < n; ++k) {
        const Vector rho_k = flatten(hist[k]);
        hist.push_back(unflatten(rho_k + dt * F, N));
        const Vector Fp = rhs(k + 1, false);
        hist[k + 1] = unflatten(rho_k + (0.5 * dt) * (F + Fp), N);
        if (!all_finite(hist[k + 1])) throw SolverError("hierarchy: non-finite state", k + 1);
        F = rhs(k + 1, true);
    }

    res.weights.ratio.resize(n + 1);
    for (std::size_t k = 0; k <= n; ++k)
        res.weights.ratio[k] = res.weights.W1[k] > 0.0 ? res.weights.W2[k] / res.weights.W1[k]
                                                       : std::numeric_limits<real>::quiet_NaN();

    const InteractionFrame frame(model.H);
    res.series.grid = grid;
    res.series.rho.reserve(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        Matrix rho = frame.to_schroedinger(hist[k], grid.t(k));
        res.trace_dev.push_back(std::abs(rho.trace() - cplx(1.0)));
        res.hermiticity_dev.push_back(max_abs(rho - rho.adjoint()));
        const Matrix herm = 0.5 * (rho + rho.adjoint());
        Eigen::SelfAdjointEigenSolver<Matrix> es(herm, Eigen::EigenvaluesOnly);
        res.min_eigenvalue.push_back(es.eigenvalues().minCoeff());
        res.series.rho.push_back(std::move(rho));
    }
    res.trace_flag = *std::max_element(res.trace_dev.begin(), res.trace_dev.end()) > 1e-6;
    res.negative_eigenvalue = *std::min_element(res.min_eigenvalue.begin(), res.min_eigenvalue.end()) < -1e-10;
    if (res.trace_flag) res.warnings.push_back("hierarchy: trace deviates from 1 by more than 1e-6");
    if (res.negative_eigenvalue) res.warnings.push_back("hierarchy: rho has negative eigenvalues");
    return res;
}

// ---------------------------------------------------------------------------

enum class Verdict { truncation_valid, truncation_invalid, indeterminate };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::truncation_valid: return "truncation-valid";
        case Verdict::truncation_invalid: return "truncation-invalid";
        case Verdict::indeterminate: return "indeterminate";
    }
    return "indeterminate";
}

struct TractabilityThresholds {
    real valid{0.1};
    real invalid{0.5};
};

struct TractabilityReport {
    Verdict verdict{Verdict::indeterminate};
    real max_ratio{0.0};
    real t_at_max{0.0};
    std::size_t undefined_ratios{0};
    real truncation_error{0.0};  // int ||class-2 contribution|| dt
    TractabilityThresholds thresholds;
};

inline TractabilityReport tractability_report(const TermWeights& w, TractabilityThresholds th = {}) {
    TractabilityReport r;
    r.thresholds = th;
    for (std::size_t k = 0; k < w.ratio.size(); ++k) {
        if (std::isnan(w.ratio[k])) {
            if (w.W2[k] > 0.0) {
                r.max_ratio = kInf;
                r.t_at_max = w.grid.t(k);
            }
            ++r.undefined_ratios;
            continue;
        }
        if (w.ratio[k] > r.max_ratio) {
            r.max_ratio = w.ratio[k];
            r.t_at_max = w.grid.t(k);
        }
    }
    for (std::size_t k = 1; k < w.W2.size(); ++k) r.truncation_error += 0.5 * w.grid.dt * (w.W2[k - 1] + w.W2[k]);
    if (r.max_ratio < th.valid)
        r.verdict = Verdict::truncation_valid;
    else if (r.max_ratio > th.invalid)
        r.verdict = Verdict::truncation_invalid;
    else
        r.verdict = Verdict::indeterminate;
    return r;
}

// ---------------------------------------------------------------------------
// Interchangeability of d/dt and d/dz on the scalar test equation
//   dP/dt = sum_l g_l(t) L(t) z_l P,  g_l(t) = c_l cos(w_l t),  L(t) = e^{it}.

struct ConsistencyInstance {
    std::vector<real> c, omega;
    std::vector<cplx> z;

    static ConsistencyInstance with_modes(std::size_t n) {
        ConsistencyInstance in;
        for (std::size_t l = 0; l < n; ++l) {
            in.c.push_back(0.5 / static_cast<real>(l + 1));
            in.omega.push_back(0.7 + 0.9 * static_cast<real>(l));
            in.z.push_back(cplx(0.3 + 0.2 * static_cast<real>(l), -0.4 + 0.1 * static_cast<real>(l)));
        }
        return in;
    }
};

/// Max over the grid and over l' of |dP/dz_l' (sensitivity equation) - central
/// finite difference of P in z_l'|.
inline real derivative_consistency_check(const ConsistencyInstance& in, real dt, std::size_t n, real h) {
    const std::size_t M = in.c.size();
    auto drive = [&](real t, const std::vector<cplx>& z) {
        cplx s = 0.0;
        for (std::size_t l = 0; l < M; ++l) s += in.c[l] * std::cos(in.omega[l] * t) * z[l];
        return s * std::exp(kI * t);
    };
    auto single = [&](std::size_t l, real t) { return in.c[l] * std::cos(in.omega[l] * t) * std::exp(kI * t); };

    auto integrate = [&](const std::vector<cplx>& z) {
        std::vector<cplx> P(n + 1);
        P[0] = 1.0;
        for (std::size_t k = 0; k < n; ++k) {
            const real t = static_cast<real>(k) * dt;
            auto f = [&](real tt, cplx p) { return drive(tt, z) * p; };
            const cplx k1 = f(t, P[k]);
            const cplx k2 = f(t + 0.5 * dt, P[k] + 0.5 * dt * k1);
            const cplx k3 = f(t + 0.5 * dt, P[k] + 0.5 * dt * k2);
            const cplx k4 = f(t + dt, P[k] + dt * k3);
            P[k + 1] = P[k] + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        return P;
    };

    real residual = 0.0;
    for (std::size_t lp = 0; lp < M; ++lp) {
        // (i) differentiate the equation, then integrate the pair (P, dP/dz).
        std::vector<cplx> D(n + 1);
        cplx p = 1.0, q = 0.0;
        D[0] = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const real t = static_cast<real>(k) * dt;
            auto f = [&](real tt, cplx pp, cplx qq) {
                return std::array<cplx, 2>{drive(tt, in.z) * pp, single(lp, tt) * pp + drive(tt, in.z) * qq};
            };
            const auto a1 = f(t, p, q);
            const auto a2 = f(t + 0.5 * dt, p + 0.5 * dt * a1[0], q + 0.5 * dt * a1[1]);
            const auto a3 = f(t + 0.5 * dt, p + 0.5 * dt * a2[0], q + 0.5 * dt * a2[1]);
            const auto a4 = f(t + dt, p + dt * a3[0], q + dt * a3[1]);
            p += dt / 6.0 * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0]);
            q += dt / 6.0 * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1]);
            D[k + 1] = q;
        }
        // (ii) integrate, then differentiate in z_l'.
        auto zp = in.z, zm = in.z;
        zp[lp] += h;
        zm[lp] -= h;
        const auto Pp = integrate(zp), Pm = integrate(zm);
        for (std::size_t k = 0; k <= n; ++k) residual = std::max(residual, std::abs(D[k] - (Pp[k] - Pm[k]) / (2.0 * h)));
    }
    return residual;
}

inline real derivative_consistency_check(std::size_t n_modes, real dt, std::size_t n, real h = 1e-5) {
    return derivative_consistency_check(ConsistencyInstance::with_modes(n_modes), dt, n, h);
}

}  // namespace oqs
