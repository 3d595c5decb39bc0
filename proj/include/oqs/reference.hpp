#pragma once

// Reference and limit solvers: time-convolved second order, time-local second
// order (TCL2), Lindblad, and brute-force propagation of system + truncated bath.

#include "oqs/bath.hpp"
#include "oqs/liouville.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <string>
#include <vector>

namespace oqs {

namespace detail {

inline DensityMatrixSeries to_schroedinger(const InteractionFrame& frame, const TimeGrid& grid,
                                           const std::vector<Matrix>& interaction) {
    DensityMatrixSeries out;
    out.grid = grid;
    out.rho.reserve(interaction.size());
    for (std::size_t k = 0; k < interaction.size(); ++k) out.rho.push_back(frame.to_schroedinger(interaction[k], grid.t(k)));
    return out;
}

template <class Rhs>
std::vector<Matrix> rk4_series(const Matrix& rho0, const TimeGrid& grid, Rhs&& rhs) {
    std::vector<Matrix> out;
    out.reserve(grid.size());
    out.push_back(rho0);
    Matrix rho = rho0;
    const real dt = grid.dt;
    for (std::size_t k = 0; k < grid.n; ++k) {
        const real t = grid.t(k);
        const Matrix k1 = rhs(t, rho);
        const Matrix k2 = rhs(t + 0.5 * dt, rho + (0.5 * dt) * k1);
        const Matrix k3 = rhs(t + 0.5 * dt, rho + (0.5 * dt) * k2);
        const Matrix k4 = rhs(t + dt, rho + dt * k3);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!all_finite(rho)) throw SolverError("reference: non-finite state", k + 1);
        out.push_back(rho);
    }
    return out;
}

// int_0^t e^{i x tau} d tau
inline cplx phase_integral(real x, real t) {
    const real y = 0.5 * x * t;
    const real sinc = std::abs(y) < 1e-8 ? 1.0 - y * y / 6.0 : std::sin(y) / y;
    return t * sinc * std::exp(kI * y);
}

}  // namespace detail

/// d rho/dt = -int_0^t [alpha(t-s)(X_t X_s rho_s - X_s rho_s X_t) + alpha*(t-s)(rho_s X_s X_t - X_t rho_s X_s)] ds
/// in the interaction picture; trapezoid memory quadrature, trapezoidal
/// predictor-corrector in time.
inline DensityMatrixSeries solve_convolved(const SystemModel& model, const BathSpectrum& spec, const TimeGrid& grid) {
    grid.validate();
    spec.check_recurrence(grid.t_max());
    const InteractionFrame frame(model.H);
    const std::size_t n = grid.n;
    const real dt = grid.dt;
    std::vector<Matrix> X(n + 1);
    std::vector<cplx> alpha(n + 1);
    for (std::size_t k = 0; k <= n; ++k) {
        X[k] = frame.rotate(model.X, grid.t(k));
        alpha[k] = correlation_function(spec, grid.t(k));
    }
    std::vector<Matrix> hist;
    hist.reserve(n + 1);
    hist.push_back(model.rho0);

    auto rhs = [&](std::size_t k) {
        Matrix out = Matrix::Zero(model.dim(), model.dim());
        if (k == 0) return out;
        const Matrix& Xt = X[k];
        for (std::size_t b = 0; b <= k; ++b) {
            const real w = (b == 0 || b == k) ? 0.5 * dt : dt;
            const Matrix& r = hist[b];
            const Matrix& Xs = X[b];
            const cplx a = alpha[k - b];
            out -= w * (a * (Xt * Xs * r - Xs * r * Xt) + std::conj(a) * (r * Xs * Xt - Xt * r * Xs));
        }
        return out;
    };

    Matrix F = rhs(0);
    for (std::size_t k = 0; k < n; ++k) {
        hist.push_back(hist[k] + dt * F);
        const Matrix Fp = rhs(k + 1);
        hist[k + 1] = hist[k] + (0.5 * dt) * (F + Fp);
        if (!all_finite(hist[k + 1])) throw SolverError("convolved: non-finite state", k + 1);
        F = rhs(k + 1);
    }
    return detail::to_schroedinger(frame, grid, hist);
}

/// Time-local second order: d rho/dt = -[X_t, D rho - rho D^dag] with
/// D(t) = int_0^t alpha(t - tau) X(tau) d tau evaluated exactly in the H_S
/// eigenbasis (alpha is a finite sum of exponentials). Fourth-order RK in time.
inline DensityMatrixSeries solve_tcl2(const SystemModel& model, const BathSpectrum& spec, const TimeGrid& grid) {
    grid.validate();
    spec.check_recurrence(grid.t_max());
    const InteractionFrame frame(model.H);
    const Matrix& V = frame.basis();
    const Eigen::VectorXd& E = frame.energies();
    const Matrix Xe = V.adjoint() * model.X * V;
    const auto N = model.dim();

    struct Weights {
        real omega, upper, lower;  // alpha = sum g_hat^2 [(n+1) e^{-i w tau} + n e^{i w tau}]
    };
    std::vector<Weights> modes;
    for (const auto& m : spec.modes()) {
        if (m.g_hat == 0.0) continue;
        const real occ = thermal_occupation(m.omega, spec.beta());
        modes.push_back({m.omega, m.g_hat * m.g_hat * (occ + 1.0), m.g_hat * m.g_hat * occ});
    }

    auto memory = [&](real t) {
        Matrix De(N, N);
        for (Eigen::Index i = 0; i < N; ++i)
            for (Eigen::Index j = 0; j < N; ++j) {
                const real delta = E(i) - E(j);
                cplx s = 0.0;
                for (const auto& md : modes) {
                    s += md.upper * std::exp(-kI * md.omega * t) * detail::phase_integral(delta + md.omega, t);
                    if (md.lower != 0.0)
                        s += md.lower * std::exp(kI * md.omega * t) * detail::phase_integral(delta - md.omega, t);
                }
                De(i, j) = Xe(i, j) * s;
            }
        return Matrix(V * De * V.adjoint());
    };

    auto rhs = [&](real t, const Matrix& rho) -> Matrix {
        if (modes.empty()) return Matrix::Zero(N, N);
        const Matrix Xt = frame.rotate(model.X, t);
        const Matrix D = memory(t);
        const Matrix A = D * rho - rho * D.adjoint();
        return -(Xt * A - A * Xt);
    };
    return detail::to_schroedinger(frame, grid, detail::rk4_series(model.rho0, grid, rhs));
}

/// d rho/dt = -Gamma (X X rho + rho X X - 2 X rho X), interaction picture, RK4.
inline DensityMatrixSeries solve_lindblad(const SystemModel& model, real Gamma, const TimeGrid& grid) {
    grid.validate();
    if (!(Gamma >= 0.0)) throw ConfigError("lindblad: Gamma must be >= 0");
    const InteractionFrame frame(model.H);
    auto rhs = [&](real t, const Matrix& rho) -> Matrix {
        const Matrix Xt = frame.rotate(model.X, t);
        const Matrix XX = Xt * Xt;
        return -Gamma * (XX * rho + rho * XX - 2.0 * Xt * rho * Xt);
    };
    return detail::to_schroedinger(frame, grid, detail::rk4_series(model.rho0, grid, rhs));
}

// ---------------------------------------------------------------------------

struct OracleConfig {
    std::size_t fock_cutoff{6};   // number states per mode
    bool thermal{false};          // thermal bath state instead of vacuum
    bool check_cutoff{true};      // rerun with cutoff + 1
    real cutoff_tolerance{1e-6};
    std::size_t max_dimension{4096};
};

struct OracleResult {
    DensityMatrixSeries series;
    real norm_dev{0.0};        // max |tr rho_total - 1|
    real cutoff_change{0.0};   // max entrywise change on cutoff + 1
    bool cutoff_converged{true};
};

namespace detail {

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

inline Matrix annihilation(std::size_t cutoff) {
    const auto c = static_cast<Eigen::Index>(cutoff);
    Matrix a = Matrix::Zero(c, c);
    for (Eigen::Index k = 1; k < c; ++k) a(k - 1, k) = std::sqrt(static_cast<real>(k));
    return a;
}

// Total space ordered as bath_1 (x) ... (x) bath_m (x) system.
inline OracleResult propagate_full(const SystemModel& model, const BathSpectrum& spec, const TimeGrid& grid,
                                   std::size_t cutoff, bool thermal) {
    const auto N = model.dim();
    const std::size_t m = spec.size();
    Eigen::Index bath_dim = 1;
    for (std::size_t l = 0; l < m; ++l) bath_dim *= static_cast<Eigen::Index>(cutoff);
    const Eigen::Index D = bath_dim * N;

    const Matrix a = annihilation(cutoff);
    const Matrix num = a.adjoint() * a;
    const Matrix q = a + a.adjoint();
    auto embed = [&](std::size_t which, const Matrix& op_mode, const Matrix& op_sys) {
        Matrix out = Matrix::Identity(1, 1);
        for (std::size_t l = 0; l < m; ++l)
            out = kron(out, l == which ? op_mode : Matrix(Matrix::Identity(static_cast<Eigen::Index>(cutoff), static_cast<Eigen::Index>(cutoff))));
        return kron(out, op_sys);
    };
    Matrix H = kron(Matrix::Identity(bath_dim, bath_dim), model.H);
    const Matrix IS = Matrix::Identity(N, N);
    for (std::size_t l = 0; l < m; ++l) {
        const auto& md = spec.modes()[l];
        H += md.omega * embed(l, num, IS);
        if (md.g_hat != 0.0) H += md.g_hat * embed(l, q, model.X);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(H);
    const Matrix& V = es.eigenvectors();
    const Eigen::VectorXd& E = es.eigenvalues();

    // Initial state as a weighted set of pure states.
    Matrix bath_state = Matrix::Identity(1, 1);
    for (std::size_t l = 0; l < m; ++l) {
        Matrix rb = Matrix::Zero(static_cast<Eigen::Index>(cutoff), static_cast<Eigen::Index>(cutoff));
        if (thermal && !spec.zero_temperature()) {
            const real x = std::exp(-spec.beta() * spec.modes()[l].omega);
            real z = 0.0;
            for (std::size_t k = 0; k < cutoff; ++k) z += std::pow(x, static_cast<real>(k));
            for (std::size_t k = 0; k < cutoff; ++k) rb(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)) = std::pow(x, static_cast<real>(k)) / z;
        } else {
            rb(0, 0) = 1.0;
        }
        bath_state = kron(bath_state, rb);
    }
    const Matrix rho_tot = kron(bath_state, model.rho0);
    Eigen::SelfAdjointEigenSolver<Matrix> init(rho_tot);
    std::vector<real> weights;
    std::vector<Vector> coeffs;  // initial states in the eigenbasis of H
    for (Eigen::Index i = 0; i < D; ++i) {
        const real p = init.eigenvalues()(i);
        if (p <= 1e-15) continue;
        weights.push_back(p);
        coeffs.push_back(V.adjoint() * init.eigenvectors().col(i));
    }

    OracleResult res;
    res.series.grid = grid;
    for (std::size_t k = 0; k <= grid.n; ++k) {
        const real t = grid.t(k);
        Matrix rs = Matrix::Zero(N, N);
        real norm = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            Vector c = coeffs[i];
            for (Eigen::Index j = 0; j < D; ++j) c(j) *= std::exp(-kI * E(j) * t);
            const Vector psi = V * c;
            norm += weights[i] * psi.squaredNorm();
            // system index is fastest: psi(b * N + s)
            const Eigen::Map<const Matrix> amp(psi.data(), N, bath_dim);
            rs += weights[i] * (amp * amp.adjoint());
        }
        res.norm_dev = std::max(res.norm_dev, std::abs(norm - 1.0));
        res.series.rho.push_back(std::move(rs));
    }
    return res;
}

}  // namespace detail

/// Brute-force propagation of the system coupled to a few truncated oscillators.
inline OracleResult exact_oracle(const SystemModel& model, const BathSpectrum& spec, const TimeGrid& grid,
                                 const OracleConfig& cfg = {}) {
    grid.validate();
    if (spec.size() > 4) throw ConfigError("oracle: at most 4 bath modes");
    if (cfg.fock_cutoff < 2) throw ConfigError("oracle: fock_cutoff must be >= 2");
    auto dimension = [&](std::size_t cutoff) {
        real d = static_cast<real>(model.dim());
        for (std::size_t l = 0; l < spec.size(); ++l) d *= static_cast<real>(cutoff);
        return d;
    };
    if (dimension(cfg.fock_cutoff) > static_cast<real>(cfg.max_dimension))
        throw ConfigError("oracle: total dimension " + std::to_string(static_cast<long long>(dimension(cfg.fock_cutoff))) +
                          " exceeds guard " + std::to_string(cfg.max_dimension));
    OracleResult res = detail::propagate_full(model, spec, grid, cfg.fock_cutoff, cfg.thermal);
    if (cfg.check_cutoff && dimension(cfg.fock_cutoff + 1) <= static_cast<real>(cfg.max_dimension)) {
        const OracleResult finer = detail::propagate_full(model, spec, grid, cfg.fock_cutoff + 1, cfg.thermal);
        for (std::size_t k = 0; k < res.series.rho.size(); ++k)
            res.cutoff_change = std::max(res.cutoff_change, max_abs(res.series.rho[k] - finer.series.rho[k]));
        res.cutoff_converged = res.cutoff_change <= cfg.cutoff_tolerance;
    }
    return res;
}

namespace analytic {

/// Exact coherence rho_01(t) for H_S = omega0/2 sigma_z, X = sigma_z and a
/// thermal bath of displaced oscillators:
///   rho_01(t) = rho_01(0) e^{-i omega0 t} exp(-4 sum g_hat^2 coth(beta w/2) (1 - cos w t) / w^2).
/// Written independently of the solver code paths.
inline cplx pure_dephasing_coherence(const BathSpectrum& spec, real omega0, cplx rho01_0, real t) {
    real decay = 0.0;
    for (const auto& m : spec.modes()) {
        const real c = std::isinf(spec.beta()) ? 1.0 : 1.0 / std::tanh(0.5 * spec.beta() * m.omega);
        decay += m.g_hat * m.g_hat * c * (1.0 - std::cos(m.omega * t)) / (m.omega * m.omega);
    }
    return rho01_0 * std::exp(-kI * omega0 * t) * std::exp(-4.0 * decay);
}

}  // namespace analytic

}  // namespace oqs
