#pragma once

// Correlated complex noise pair (xi, nu) built from mode-resolved white noises.
//
//   xi(t) = z0(t) + z0*(t) + 2 z1(t),   nu(t) = i z1*(t)
//   z0(t)  = sum_l g_l z0_l e^{-i w_l t},   z1(t) = sum_k f_k z1_k e^{-i W_k t}
//   z1*(t) = sum_k conj(h_k) conj(z1_k) e^{i W_k t}
//
// With M[z z] = 0 and M[z z*] = 1 this gives
//   M[xi(t) xi(t')] = 2 sum g^2 cos(w (t - t')) = alpha_R(t - t'),  M[nu nu] = 0,
//   M[xi(t) nu(t')] = 2i sum_k f_k conj(h_k) e^{-i W_k (t - t')}.
// The z1 family lives on its own symmetric frequency grid W_k = 2 pi k / (G delta)
// whose coefficients are the discrete Fourier transform of the causal target
// -i alpha_I(tau) theta(tau); the cross moment is then exact at every lag that
// is a multiple of delta.

#include "oqs/bath.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace oqs {

namespace detail {
// The FFTW planner is not reentrant.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

/// Target of M[xi(t) nu(t')] at lag tau = t - t'.
inline cplx cross_correlation_target(const BathSpectrum& spec, real tau) {
    return -kI * correlation_function(spec, tau).imag() * heaviside(tau);
}

/// Spectral factors shared (read-only) by every path of an ensemble.
class NoiseFactors {
public:
    /// `delta` is the finest time spacing at which the cross moment must be
    /// exact; noise is defined on [0, t_max].
    NoiseFactors(const BathSpectrum& spec, real t_max, real delta) : t_max_(t_max), delta_(delta) {
        if (!(t_max > 0.0) || !(delta > 0.0)) throw ConfigError("noise: t_max and delta must be > 0");
        spec.check_recurrence(t_max);
        for (std::size_t m = 0; m < spec.size(); ++m) {
            omega_.push_back(spec.modes()[m].omega);
            g_.push_back(spec.g(m));
        }

        const auto lags = static_cast<std::size_t>(std::ceil(t_max / delta - 1e-9));
        std::size_t G = 2;
        while (G < 2 * lags + 2) G *= 2;
        G_ = G;
        const real period = static_cast<real>(G) * delta;

        std::vector<cplx> target(G, 0.0);
        for (std::size_t m = 0; m <= G / 2; ++m) target[m] = cross_correlation_target(spec, static_cast<real>(m) * delta);

        std::vector<cplx> a(G);
        {
            std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
            std::vector<cplx> buf_in(G), buf_out(G);
            plan_ = fftw_plan_dft_1d(static_cast<int>(G), reinterpret_cast<fftw_complex*>(buf_in.data()),
                                     reinterpret_cast<fftw_complex*>(buf_out.data()), FFTW_FORWARD,
                                     FFTW_ESTIMATE | FFTW_UNALIGNED);
            // a_k = (1/G) sum_m C(tau_m) e^{+i W_k tau_m}; index k maps to k mod G.
            fftw_plan back = fftw_plan_dft_1d(static_cast<int>(G), reinterpret_cast<fftw_complex*>(target.data()),
                                              reinterpret_cast<fftw_complex*>(a.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
            fftw_execute(back);
            fftw_destroy_plan(back);
        }

        cross_omega_.resize(G);
        f_.resize(G);
        h_.resize(G);
        for (std::size_t idx = 0; idx < G; ++idx) {
            const long k = idx < G / 2 ? static_cast<long>(idx) : static_cast<long>(idx) - static_cast<long>(G);
            const cplx ak = a[idx] / static_cast<real>(G);
            cross_omega_[idx] = 2.0 * std::numbers::pi * static_cast<real>(k) / period;
            // 2 i f conj(h) = a with |f| = |h|.
            const real mag = std::sqrt(std::abs(ak) / 2.0);
            f_[idx] = mag;
            h_[idx] = mag > 0.0 ? std::conj(ak / (2.0 * kI * mag)) : cplx(0.0);
        }
    }

    ~NoiseFactors() {
        std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
        if (plan_) fftw_destroy_plan(plan_);
    }
    NoiseFactors(const NoiseFactors&) = delete;
    NoiseFactors& operator=(const NoiseFactors&) = delete;

    real t_max() const noexcept { return t_max_; }
    real delta() const noexcept { return delta_; }
    std::size_t n_modes() const noexcept { return omega_.size(); }
    std::size_t n_cross() const noexcept { return G_; }
    const std::vector<real>& omega() const noexcept { return omega_; }
    const std::vector<real>& g() const noexcept { return g_; }
    const std::vector<real>& cross_omega() const noexcept { return cross_omega_; }
    const std::vector<real>& f() const noexcept { return f_; }
    const std::vector<cplx>& h() const noexcept { return h_; }

    /// out[j] = sum_k in[k] e^{-2 pi i jk/G}; `in` and `out` have length G.
    void forward_dft(const cplx* in, cplx* out) const {
        fftw_execute_dft(plan_, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in)),
                         reinterpret_cast<fftw_complex*>(out));
    }

private:
    real t_max_, delta_;
    std::size_t G_{0};
    std::vector<real> omega_, g_;
    std::vector<real> cross_omega_, f_;
    std::vector<cplx> h_;
    fftw_plan plan_{nullptr};
};

struct NoiseAmplitudes {
    std::vector<cplx> z0;  // one per bath mode
    std::vector<cplx> z1;  // one per cross-grid mode
    std::uint64_t seed{0};
};

/// Deterministic generator for a (seed, stream) pair. Ensemble members use the
/// trajectory index as stream so results do not depend on scheduling.
inline std::mt19937_64 make_generator(std::uint64_t seed, std::uint64_t stream = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x51u};
    return std::mt19937_64(seq);
}

/// Circular complex Gaussian with M[z] = 0, M[z z] = 0, M[|z|^2] = 1.
inline cplx circular_gaussian(std::mt19937_64& gen) {
    std::normal_distribution<real> nd(0.0, std::sqrt(0.5));
    const real re = nd(gen);
    const real im = nd(gen);
    return {re, im};
}

inline NoiseAmplitudes sample_amplitudes(const NoiseFactors& factors, std::uint64_t seed, std::uint64_t stream = 0) {
    auto gen = make_generator(seed, stream);
    NoiseAmplitudes a;
    a.seed = seed;
    a.z0.resize(factors.n_modes());
    a.z1.resize(factors.n_cross());
    for (auto& z : a.z0) z = circular_gaussian(gen);
    for (auto& z : a.z1) z = circular_gaussian(gen);
    return a;
}

struct NoiseSample {
    cplx xi;
    cplx nu;
};

class NoisePath {
public:
    NoisePath(std::shared_ptr<const NoiseFactors> factors, NoiseAmplitudes amps)
        : factors_(std::move(factors)), amps_(std::move(amps)) {
        if (amps_.z0.size() != factors_->n_modes() || amps_.z1.size() != factors_->n_cross())
            throw std::invalid_argument("noise: amplitude count does not match factors");
    }

    const NoiseFactors& factors() const noexcept { return *factors_; }
    const NoiseAmplitudes& amplitudes() const noexcept { return amps_; }

    /// Exact mode-sum evaluation at any t in [0, t_max].
    NoiseSample evaluate(real t) const {
        const auto& F = *factors_;
        if (t < -1e-12 || t > F.t_max() * (1.0 + 1e-12) + 1e-12) throw DomainError("noise: t outside [0, t_max]");
        cplx z0 = 0.0;
        for (std::size_t m = 0; m < F.n_modes(); ++m) z0 += F.g()[m] * amps_.z0[m] * std::exp(-kI * F.omega()[m] * t);
        cplx z1 = 0.0, z1s = 0.0;
        for (std::size_t k = 0; k < F.n_cross(); ++k) {
            const cplx e = std::exp(-kI * F.cross_omega()[k] * t);
            z1 += F.f()[k] * amps_.z1[k] * e;
            z1s += std::conj(F.h()[k] * amps_.z1[k] * e);
        }
        return {z0 + std::conj(z0) + 2.0 * z1, kI * z1s};
    }

    /// Values at t_j = j * delta for j = 0..count-1 (count*delta <= t_max + delta).
    void tabulate(std::size_t count, std::vector<cplx>& xi, std::vector<cplx>& nu) const {
        const auto& F = *factors_;
        const real d = F.delta();
        if (count == 0 || static_cast<real>(count - 1) * d > F.t_max() * (1.0 + 1e-12) + 1e-12)
            throw DomainError("noise: tabulation exceeds t_max");
        xi.assign(count, 0.0);
        nu.assign(count, 0.0);

        // Bath part by phasor recurrence, re-anchored periodically.
        for (std::size_t m = 0; m < F.n_modes(); ++m) {
            const cplx c = F.g()[m] * amps_.z0[m];
            if (c == cplx(0.0)) continue;
            const cplx step = std::exp(-kI * F.omega()[m] * d);
            cplx ph = 1.0;
            for (std::size_t j = 0; j < count; ++j) {
                if (j % 64 == 0) ph = std::exp(-kI * F.omega()[m] * (static_cast<real>(j) * d));
                const cplx v = c * ph;
                xi[j] += v + std::conj(v);
                ph *= step;
            }
        }

        // Cross part: W_k t_j = 2 pi k j / G, a length-G forward DFT.
        const std::size_t G = F.n_cross();
        std::vector<cplx> in(G), out(G);
        for (std::size_t k = 0; k < G; ++k) in[k] = F.f()[k] * amps_.z1[k];
        F.forward_dft(in.data(), out.data());
        for (std::size_t j = 0; j < count; ++j) xi[j] += 2.0 * out[j % G];
        for (std::size_t k = 0; k < G; ++k) in[k] = F.h()[k] * amps_.z1[k];
        F.forward_dft(in.data(), out.data());
        for (std::size_t j = 0; j < count; ++j) nu[j] = kI * std::conj(out[j % G]);
    }

private:
    std::shared_ptr<const NoiseFactors> factors_;
    NoiseAmplitudes amps_;
};

// ---------------------------------------------------------------------------
// Statistics of an ensemble of paths against the target correlations.

struct MomentStats {
    Matrix empirical, target;
    Matrix se;  // real part: SE of Re, imaginary part: SE of Im
    real max_abs_dev{0.0};
    real max_sigma{0.0};  // largest deviation in standard errors
    std::size_t flagged{0};
};

struct StatisticsReport {
    std::vector<real> times;
    std::size_t paths{0};
    real sigma_threshold{5.0};
    MomentStats xi_xi, xi_nu, nu_nu;

    bool passed() const noexcept { return xi_xi.flagged + xi_nu.flagged + nu_nu.flagged == 0; }
};

namespace detail {
struct MomentAccumulator {
    Matrix sum, sum_re2, sum_im2;
    explicit MomentAccumulator(Eigen::Index n)
        : sum(Matrix::Zero(n, n)), sum_re2(Matrix::Zero(n, n)), sum_im2(Matrix::Zero(n, n)) {}
    void add(Eigen::Index a, Eigen::Index b, cplx v) {
        sum(a, b) += v;
        sum_re2(a, b) += v.real() * v.real();
        sum_im2(a, b) += v.imag() * v.imag();
    }
    MomentStats finish(std::size_t M, const Matrix& target, real threshold) const {
        MomentStats s;
        const real m = static_cast<real>(M);
        s.empirical = sum / m;
        s.target = target;
        s.se = Matrix::Zero(sum.rows(), sum.cols());
        for (Eigen::Index a = 0; a < sum.rows(); ++a)
            for (Eigen::Index b = 0; b < sum.cols(); ++b) {
                const cplx mean = s.empirical(a, b);
                const real var_re = std::max(0.0, (sum_re2(a, b).real() - m * mean.real() * mean.real()) / (m - 1.0));
                const real var_im = std::max(0.0, (sum_im2(a, b).real() - m * mean.imag() * mean.imag()) / (m - 1.0));
                const cplx se(std::sqrt(var_re / m), std::sqrt(var_im / m));
                s.se(a, b) = se;
                const cplx dev = mean - target(a, b);
                s.max_abs_dev = std::max(s.max_abs_dev, std::abs(dev));
                const real z_re = se.real() > 0.0 ? std::abs(dev.real()) / se.real() : (dev.real() == 0.0 ? 0.0 : kInf);
                const real z_im = se.imag() > 0.0 ? std::abs(dev.imag()) / se.imag() : (dev.imag() == 0.0 ? 0.0 : kInf);
                // Exact zero-variance entries may carry rounding residue.
                const real z = std::max(std::abs(dev) < 1e-12 ? 0.0 : z_re, std::abs(dev) < 1e-12 ? 0.0 : z_im);
                s.max_sigma = std::max(s.max_sigma, z);
                if (z > threshold) ++s.flagged;
            }
        return s;
    }
};
}  // namespace detail

namespace detail {
template <class PathSource>
StatisticsReport accumulate_statistics(std::size_t count, PathSource&& next_path, const BathSpectrum& spec,
                                       const std::vector<real>& times, real sigma_threshold) {
    if (count < 100) throw std::invalid_argument("validate_statistics: need at least 100 paths");
    const auto n = static_cast<Eigen::Index>(times.size());
    MomentAccumulator xx(n), xn(n), nn(n);
    std::vector<NoiseSample> v(times.size());
    for (std::size_t i = 0; i < count; ++i) {
        const NoisePath& p = next_path(i);
        for (std::size_t a = 0; a < times.size(); ++a) v[a] = p.evaluate(times[a]);
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index b = 0; b < n; ++b) {
                xx.add(a, b, v[a].xi * v[b].xi);
                xn.add(a, b, v[a].xi * v[b].nu);
                nn.add(a, b, v[a].nu * v[b].nu);
            }
    }
    Matrix t_xx(n, n), t_xn(n, n), t_nn = Matrix::Zero(n, n);
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) {
            const real tau = times[a] - times[b];
            t_xx(a, b) = correlation_function(spec, tau).real();
            t_xn(a, b) = cross_correlation_target(spec, tau);
        }
    StatisticsReport r;
    r.times = times;
    r.paths = count;
    r.sigma_threshold = sigma_threshold;
    r.xi_xi = xx.finish(count, t_xx, sigma_threshold);
    r.xi_nu = xn.finish(count, t_xn, sigma_threshold);
    r.nu_nu = nn.finish(count, t_nn, sigma_threshold);
    return r;
}
}  // namespace detail

/// Empirical second moments over `paths` at `times` against
/// M[xi xi'] = alpha_R, M[xi nu'] = -i alpha_I theta, M[nu nu'] = 0.
inline StatisticsReport validate_statistics(const std::vector<NoisePath>& paths, const BathSpectrum& spec,
                                            const std::vector<real>& times, real sigma_threshold = 5.0) {
    return detail::accumulate_statistics(
        paths.size(), [&](std::size_t i) -> const NoisePath& { return paths[i]; }, spec, times, sigma_threshold);
}

/// Streaming variant: path i uses stream i of `master_seed`, generated on the fly.
inline StatisticsReport validate_statistics(std::shared_ptr<const NoiseFactors> factors, const BathSpectrum& spec,
                                            std::uint64_t master_seed, std::size_t count,
                                            const std::vector<real>& times, real sigma_threshold = 5.0) {
    std::optional<NoisePath> current;
    return detail::accumulate_statistics(
        count,
        [&](std::size_t i) -> const NoisePath& {
            current.emplace(factors, sample_amplitudes(*factors, master_seed, i));
            return *current;
        },
        spec, times, sigma_threshold);
}

}  // namespace oqs
