#pragma once

// Stochastic Liouville-von Neumann trajectories and their ensemble average.
//
// Per trajectory the stochastic projector obeys
//   dP/dt = -i[H, P] + i xi(t) [x, P] - i nu(t) {x, P}
// with (xi, nu) normalized so that M[xi(t) nu(t')] = -i alpha_I(t-t') theta(t-t').
// The anticommutator weight -i is the one for which the noise average
// reproduces the exact reduced dynamics under that normalization.

#include "oqs/liouville.hpp"
#include "oqs/noise.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

namespace oqs {

inline constexpr cplx kAnticommutatorDrive{0.0, -1.0};

struct Trajectory {
    TimeGrid grid;
    std::vector<Matrix> P;
    std::uint64_t seed{0};
    bool divergent{false};
};

enum class TrajectoryForm { density, pair };

namespace detail {

inline Matrix sln_rhs(const Matrix& H, const Matrix& x, cplx xi, cplx nu, const Matrix& P) {
    const Matrix xP = x * P;
    const Matrix Px = P * x;
    return -kI * (H * P - P * H) + (kI * xi) * (xP - Px) + (kAnticommutatorDrive * nu) * (xP + Px);
}

// Noise values at half steps: xi[2k] = xi(t_k), xi[2k+1] = xi(t_k + dt/2).
struct HalfStepNoise {
    std::vector<cplx> xi, nu;
    cplx xi_at(std::size_t half) const { return xi.empty() ? cplx(0.0) : xi[half]; }
    cplx nu_at(std::size_t half) const { return nu.empty() ? cplx(0.0) : nu[half]; }
};

inline HalfStepNoise tabulate_half_steps(const NoisePath* path, const TimeGrid& grid) {
    HalfStepNoise h;
    if (path == nullptr) return h;
    if (std::abs(path->factors().delta() - 0.5 * grid.dt) > 1e-12 * grid.dt)
        throw std::invalid_argument("sln: noise factors must be built with delta = dt/2");
    path->tabulate(2 * grid.n + 1, h.xi, h.nu);
    return h;
}

inline Vector pure_state(const Matrix& rho0, real tol = 1e-9) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(rho0);
    const auto n = rho0.rows();
    const real top = es.eigenvalues()(n - 1);
    if (std::abs(top - 1.0) > tol || es.eigenvalues().head(n - 1).cwiseAbs().maxCoeff() > tol)
        throw DomainError("sln: integrate_pair requires a pure initial state; use integrate_density");
    return es.eigenvectors().col(n - 1);
}

}  // namespace detail

/// Fourth-order Runge-Kutta integration of the density form. A null path means
/// xi = nu = 0.
inline Trajectory integrate_density(const SystemModel& model, const NoisePath* path, const TimeGrid& grid) {
    grid.validate();
    const auto noise = detail::tabulate_half_steps(path, grid);
    Trajectory tr;
    tr.grid = grid;
    tr.seed = path ? path->amplitudes().seed : 0;
    tr.P.reserve(grid.size());
    tr.P.push_back(model.rho0);
    const real dt = grid.dt;
    const Matrix& H = model.H;
    const Matrix& x = model.X;
    Matrix P = model.rho0;
    for (std::size_t k = 0; k < grid.n; ++k) {
        const cplx xi0 = noise.xi_at(2 * k), xi1 = noise.xi_at(2 * k + 1), xi2 = noise.xi_at(2 * k + 2);
        const cplx nu0 = noise.nu_at(2 * k), nu1 = noise.nu_at(2 * k + 1), nu2 = noise.nu_at(2 * k + 2);
        const Matrix k1 = detail::sln_rhs(H, x, xi0, nu0, P);
        const Matrix k2 = detail::sln_rhs(H, x, xi1, nu1, P + (0.5 * dt) * k1);
        const Matrix k3 = detail::sln_rhs(H, x, xi1, nu1, P + (0.5 * dt) * k2);
        const Matrix k4 = detail::sln_rhs(H, x, xi2, nu2, P + dt * k3);
        P += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!all_finite(P)) {
            tr.divergent = true;
            tr.P.resize(grid.size(), Matrix::Constant(P.rows(), P.cols(), cplx(std::nan(""), 0.0)));
            return tr;
        }
        tr.P.push_back(P);
    }
    return tr;
}

inline Trajectory integrate_density(const SystemModel& model, const NoisePath& path, const TimeGrid& grid) {
    return integrate_density(model, &path, grid);
}

/// Paired wavevectors with P = |psi1><psi2|:
///   dpsi1 = (-iH + i xi x - i nu x) psi1,  dpsi2 = (-iH + i conj(xi) x + i conj(nu) x) psi2.
inline Trajectory integrate_pair(const SystemModel& model, const NoisePath* path, const TimeGrid& grid) {
    grid.validate();
    const Vector psi0 = detail::pure_state(model.rho0);
    const auto noise = detail::tabulate_half_steps(path, grid);
    Trajectory tr;
    tr.grid = grid;
    tr.seed = path ? path->amplitudes().seed : 0;
    tr.P.reserve(grid.size());
    tr.P.push_back(psi0 * psi0.adjoint());
    const real dt = grid.dt;
    const Matrix& H = model.H;
    const Matrix& x = model.X;
    auto f1 = [&](cplx xi, cplx nu, const Vector& v) -> Vector {
        return -kI * (H * v) + (kI * xi + kAnticommutatorDrive * nu) * (x * v);
    };
    auto f2 = [&](cplx xi, cplx nu, const Vector& v) -> Vector {
        return -kI * (H * v) + (kI * std::conj(xi) + std::conj(kAnticommutatorDrive * nu)) * (x * v);
    };
    auto rk4 = [&](auto&& f, cplx a0, cplx a1, cplx a2, cplx b0, cplx b1, cplx b2, Vector& v) {
        const Vector k1 = f(a0, b0, v);
        const Vector k2 = f(a1, b1, v + (0.5 * dt) * k1);
        const Vector k3 = f(a1, b1, v + (0.5 * dt) * k2);
        const Vector k4 = f(a2, b2, v + dt * k3);
        v += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    };
    Vector psi1 = psi0, psi2 = psi0;
    for (std::size_t k = 0; k < grid.n; ++k) {
        const cplx xi0 = noise.xi_at(2 * k), xi1 = noise.xi_at(2 * k + 1), xi2 = noise.xi_at(2 * k + 2);
        const cplx nu0 = noise.nu_at(2 * k), nu1 = noise.nu_at(2 * k + 1), nu2 = noise.nu_at(2 * k + 2);
        rk4(f1, xi0, xi1, xi2, nu0, nu1, nu2, psi1);
        rk4(f2, xi0, xi1, xi2, nu0, nu1, nu2, psi2);
        Matrix P = psi1 * psi2.adjoint();
        if (!all_finite(P)) {
            tr.divergent = true;
            tr.P.resize(grid.size(), Matrix::Constant(P.rows(), P.cols(), cplx(std::nan(""), 0.0)));
            return tr;
        }
        tr.P.push_back(std::move(P));
    }
    return tr;
}

inline Trajectory integrate_pair(const SystemModel& model, const NoisePath& path, const TimeGrid& grid) {
    return integrate_pair(model, &path, grid);
}

struct EnsembleOptions {
    unsigned threads{1};
    std::size_t chunk{64};       // trajectories per deterministic reduction block
    std::size_t keep{0};         // first `keep` trajectories returned for dumping
    real unhealthy_fraction{0.01};
};

struct EnsembleStats {
    DensityMatrixSeries mean;  // mean.stderr_ holds per-entry standard errors
    std::vector<real> trace_dev, hermiticity_dev;
    std::size_t trajectories{0}, divergent{0};
    std::uint64_t master_seed{0};
    bool healthy{true};
    std::vector<Trajectory> kept;
    std::vector<std::string> warnings;

    real median_stderr() const {
        std::vector<real> v;
        for (const auto& se : mean.stderr_)
            for (Eigen::Index i = 0; i < se.size(); ++i) {
                v.push_back(se.data()[i].real());
                v.push_back(se.data()[i].imag());
            }
        if (v.empty()) return 0.0;
        std::nth_element(v.begin(), v.begin() + static_cast<long>(v.size() / 2), v.end());
        return v[v.size() / 2];
    }
};

namespace detail {
// Running mean and centred second moments (Welford), mergeable in a fixed order.
struct MomentBlock {
    std::size_t count{0};
    std::vector<Matrix> mean;
    std::vector<Eigen::MatrixXd> m2_re, m2_im;

    void init(std::size_t T, Eigen::Index N) {
        mean.assign(T, Matrix::Zero(N, N));
        m2_re.assign(T, Eigen::MatrixXd::Zero(N, N));
        m2_im.assign(T, Eigen::MatrixXd::Zero(N, N));
    }
    void add(const std::vector<Matrix>& P) {
        ++count;
        const real n = static_cast<real>(count);
        for (std::size_t k = 0; k < P.size(); ++k) {
            const Matrix d = P[k] - mean[k];
            mean[k] += d / n;
            const Matrix d2 = P[k] - mean[k];
            m2_re[k] += d.real().cwiseProduct(d2.real());
            m2_im[k] += d.imag().cwiseProduct(d2.imag());
        }
    }
    void merge(const MomentBlock& o) {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        const real na = static_cast<real>(count), nb = static_cast<real>(o.count), n = na + nb;
        for (std::size_t k = 0; k < mean.size(); ++k) {
            const Matrix d = o.mean[k] - mean[k];
            mean[k] += d * (nb / n);
            m2_re[k] += o.m2_re[k] + d.real().cwiseAbs2() * (na * nb / n);
            m2_im[k] += o.m2_im[k] + d.imag().cwiseAbs2() * (na * nb / n);
        }
        count += o.count;
    }
};

struct ChunkResult {
    MomentBlock moments;
    std::size_t divergent{0};
    std::vector<Trajectory> kept;
};
}  // namespace detail

/// Mean of M independent trajectories; trajectory i uses noise stream i of
/// `master_seed`. Blocks of `chunk` trajectories are reduced sequentially and
/// combined in block order, so the result is independent of the thread count.
inline EnsembleStats ensemble_average(const SystemModel& model, const BathSpectrum& spec, std::size_t M,
                                      std::uint64_t master_seed, const TimeGrid& grid,
                                      TrajectoryForm form = TrajectoryForm::density, EnsembleOptions opt = {}) {
    grid.validate();
    if (M < 1) throw ConfigError("sln: trajectory count must be >= 1");
    if (opt.chunk == 0) opt.chunk = 64;
    auto factors = std::make_shared<const NoiseFactors>(spec, grid.t_max(), 0.5 * grid.dt);
    const auto N = model.dim();
    const std::size_t T = grid.size();
    const std::size_t n_chunks = (M + opt.chunk - 1) / opt.chunk;
    std::vector<detail::ChunkResult> chunks(n_chunks);

    auto run_chunk = [&](std::size_t c) {
        auto& cs = chunks[c];
        cs.moments.init(T, N);
        const std::size_t begin = c * opt.chunk, end = std::min(M, begin + opt.chunk);
        for (std::size_t i = begin; i < end; ++i) {
            const NoisePath path(factors, sample_amplitudes(*factors, master_seed, i));
            Trajectory tr = form == TrajectoryForm::density ? integrate_density(model, &path, grid)
                                                            : integrate_pair(model, &path, grid);
            if (tr.divergent) {
                ++cs.divergent;
                continue;
            }
            cs.moments.add(tr.P);
            if (i < opt.keep) cs.kept.push_back(std::move(tr));
        }
    };

    const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(n_chunks)));
    if (threads == 1) {
        for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t c; (c = next.fetch_add(1)) < n_chunks;) run_chunk(c);
            });
        for (auto& th : pool) th.join();
    }

    EnsembleStats st;
    st.master_seed = master_seed;
    st.trajectories = M;
    st.mean.grid = grid;
    detail::MomentBlock total;
    total.init(T, N);
    for (auto& cs : chunks) {
        total.merge(cs.moments);
        st.divergent += cs.divergent;
        for (auto& tr : cs.kept) st.kept.push_back(std::move(tr));
    }
    const std::size_t used = total.count;
    st.healthy = static_cast<real>(st.divergent) <= opt.unhealthy_fraction * static_cast<real>(M) && used > 0;
    if (st.divergent > 0) st.warnings.push_back(std::to_string(st.divergent) + " divergent trajectories excluded");
    if (grid.dt * spectral_norm(model.H) > 0.5) st.warnings.push_back("sln: dt*||H|| > 0.5, step may be too coarse");

    const real m = static_cast<real>(used);
    st.mean.rho.resize(T);
    st.mean.stderr_.resize(T);
    st.trace_dev.resize(T);
    st.hermiticity_dev.resize(T);
    for (std::size_t k = 0; k < T; ++k) {
        Matrix se(N, N);
        for (Eigen::Index i = 0; i < se.size(); ++i) {
            if (used < 2) {
                se.data()[i] = cplx(kInf, kInf);
                continue;
            }
            se.data()[i] = cplx(std::sqrt(total.m2_re[k].data()[i] / (m - 1.0) / m),
                                std::sqrt(total.m2_im[k].data()[i] / (m - 1.0) / m));
        }
        const Matrix& mean = total.mean[k];
        st.trace_dev[k] = std::abs(mean.trace() - cplx(1.0));
        st.hermiticity_dev[k] = spectral_norm(mean - mean.adjoint());
        st.mean.rho[k] = mean;
        st.mean.stderr_[k] = std::move(se);
    }
    return st;
}

}  // namespace oqs
