#pragma once

// Harmonic environment: discrete modes {omega, g_hat}, thermal weights and the
// sampled correlation kernels shared by every solver.

#include "oqs/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace oqs {

struct BathMode {
    real omega{0.0};
    real g_hat{0.0};
};

/// Mean thermal number of quanta 1/(exp(omega*beta) - 1); zero at beta = +inf.
inline real thermal_occupation(real omega, real beta) {
    if (!(omega > 0.0)) throw DomainError("thermal_occupation: omega must be > 0");
    if (!(beta > 0.0)) throw DomainError("thermal_occupation: beta must be > 0 or +inf");
    if (std::isinf(beta)) return 0.0;
    return 1.0 / std::expm1(omega * beta);
}

/// coth(beta*omega/2) = 1 + 2N(omega); exactly 1 at zero temperature.
inline real thermal_coth(real omega, real beta) { return 1.0 + 2.0 * thermal_occupation(omega, beta); }

class BathSpectrum {
public:
    BathSpectrum() = default;
    BathSpectrum(std::vector<BathMode> modes, real beta) : modes_(std::move(modes)), beta_(beta) { validate(); }

    const std::vector<BathMode>& modes() const noexcept { return modes_; }
    std::size_t size() const noexcept { return modes_.size(); }
    real beta() const noexcept { return beta_; }
    bool zero_temperature() const noexcept { return std::isinf(beta_); }

    /// Effective coupling g^2 = g_hat^2 coth(beta omega / 2) / 2.
    real g2(std::size_t m) const {
        const auto& md = modes_[m];
        return 0.5 * md.g_hat * md.g_hat * thermal_coth(md.omega, beta_);
    }
    real g(std::size_t m) const { return std::sqrt(g2(m)); }

    real max_omega() const noexcept { return modes_.empty() ? 0.0 : modes_.back().omega; }

    /// Smallest spacing between neighbouring modes (+inf for fewer than two modes).
    real min_spacing() const noexcept {
        real d = kInf;
        for (std::size_t m = 1; m < modes_.size(); ++m) d = std::min(d, modes_[m].omega - modes_[m - 1].omega);
        return d;
    }

    /// Poincare recurrence time 2*pi/d_omega of the discrete mode set.
    real recurrence_time() const noexcept {
        const real d = min_spacing();
        return std::isinf(d) ? kInf : 2.0 * std::numbers::pi / d;
    }

    void check_recurrence(real t_max) const {
        if (!(recurrence_time() > t_max))
            throw ConfigError("bath: recurrence time 2*pi/d_omega = " + std::to_string(recurrence_time()) +
                              " does not exceed t_max = " + std::to_string(t_max));
    }

    bool decoupled() const noexcept {
        return std::all_of(modes_.begin(), modes_.end(), [](const BathMode& m) { return m.g_hat == 0.0; });
    }

    /// Same modes with every bare coupling multiplied by c.
    BathSpectrum scaled(real c) const {
        auto modes = modes_;
        for (auto& m : modes) m.g_hat *= std::abs(c);
        return BathSpectrum(std::move(modes), beta_);
    }

private:
    void validate() const {
        if (!(beta_ > 0.0)) throw ConfigError("bath: beta must be > 0 or +inf");
        for (std::size_t m = 0; m < modes_.size(); ++m) {
            const auto& md = modes_[m];
            if (!(md.omega > 0.0) || !std::isfinite(md.omega)) throw ConfigError("bath: mode frequencies must be positive");
            if (!(md.g_hat >= 0.0) || !std::isfinite(md.g_hat)) throw ConfigError("bath: couplings must be >= 0");
            if (m > 0 && !(md.omega > modes_[m - 1].omega))
                throw ConfigError("bath: mode frequencies must be strictly increasing");
        }
    }

    std::vector<BathMode> modes_;
    real beta_{kInf};
};

enum class SpectralFamily { ohmic, super_ohmic, custom };

struct SpectralDensityParams {
    SpectralFamily family{SpectralFamily::ohmic};
    real eta{0.0};
    real s{1.0};
    real omega_c{1.0};
    std::size_t n_modes{1};
    real omega_max{1.0};
    real beta{kInf};
    std::vector<BathMode> table;  // custom family only
};

/// J(omega) = eta * omega^s * exp(-omega/omega_c).
inline real spectral_density(real eta, real s, real omega_c, real omega) {
    return eta * std::pow(omega, s) * std::exp(-omega / omega_c);
}

/// Mid-point discretization omega_l = (l - 1/2) d_omega, g_hat_l^2 = J(omega_l) d_omega.
/// A positive t_max enables the recurrence check.
inline BathSpectrum discretize_spectral_density(const SpectralDensityParams& p, real t_max = 0.0) {
    std::vector<BathMode> modes;
    if (p.family == SpectralFamily::custom) {
        modes = p.table;
    } else {
        if (p.n_modes < 1) throw ConfigError("bath: n_modes must be >= 1");
        if (!(p.omega_max > 0.0)) throw ConfigError("bath: omega_max must be > 0");
        if (!(p.omega_c > 0.0)) throw ConfigError("bath: omega_c must be > 0");
        if (!(p.eta >= 0.0)) throw ConfigError("bath: eta must be >= 0");
        const real s = p.family == SpectralFamily::ohmic ? 1.0 : p.s;
        if (p.family == SpectralFamily::super_ohmic && !(s > 1.0)) throw ConfigError("bath: super_ohmic requires s > 1");
        const real dw = p.omega_max / static_cast<real>(p.n_modes);
        modes.reserve(p.n_modes);
        for (std::size_t l = 1; l <= p.n_modes; ++l) {
            const real w = (static_cast<real>(l) - 0.5) * dw;
            modes.push_back({w, std::sqrt(spectral_density(p.eta, s, p.omega_c, w) * dw)});
        }
    }
    BathSpectrum spec(std::move(modes), p.beta);
    if (t_max > 0.0) spec.check_recurrence(t_max);
    return spec;
}

/// alpha_T(tau) = sum g_hat^2 [coth(beta omega/2) cos(omega tau) - i sin(omega tau)].
inline cplx correlation_function(const BathSpectrum& spec, real tau) {
    real re = 0.0, im = 0.0;
    for (const auto& m : spec.modes()) {
        const real w2 = m.g_hat * m.g_hat;
        re += w2 * thermal_coth(m.omega, spec.beta()) * std::cos(m.omega * tau);
        im -= w2 * std::sin(m.omega * tau);
    }
    return {re, im};
}

/// Symmetric Heaviside step, theta(0) = 1/2.
inline real heaviside(real x) noexcept { return x > 0.0 ? 1.0 : (x < 0.0 ? 0.0 : 0.5); }

/// Correlation data sampled at lags tau_k = k*dt, k = 0..n.
///
/// The hierarchy kernels pair the family-j superoperators:
///   k00_0s = sum g^2 e^{-i omega tau},      k00_s0 = conj(k00_0s),
///   k11_0s = alpha_I(tau) theta(tau),       k11_s0 = alpha_I(-tau) theta(-tau).
/// With L_0 = L_M and L_1 = (2 L_M, L^c), the class-1 sum reproduces the
/// second-order convolved generator exactly (2 Re k00_0s = alpha_R).
struct CorrelationKernel {
    real dt{0.0};
    std::vector<real> alpha_R, alpha_I;
    std::vector<cplx> k00_0s, k11_0s, k00_s0, k11_s0;
    std::vector<std::string> warnings;

    std::size_t size() const noexcept { return alpha_R.size(); }
    cplx alpha(std::size_t k) const { return {alpha_R[k], alpha_I[k]}; }
};

inline CorrelationKernel build_kernels(const BathSpectrum& spec, real dt, std::size_t n) {
    if (!(dt > 0.0)) throw ConfigError("kernel: dt must be > 0");
    spec.check_recurrence(static_cast<real>(n) * dt);
    CorrelationKernel k;
    k.dt = dt;
    const std::size_t count = n + 1;
    k.alpha_R.assign(count, 0.0);
    k.alpha_I.assign(count, 0.0);
    k.k00_0s.assign(count, 0.0);
    k.k11_0s.assign(count, 0.0);
    k.k00_s0.assign(count, 0.0);
    k.k11_s0.assign(count, 0.0);
    if (dt * spec.max_omega() > 0.5)
        k.warnings.push_back("kernel: dt*max(omega) = " + std::to_string(dt * spec.max_omega()) +
                             " > 0.5, fastest modes are under-resolved");

    for (std::size_t m = 0; m < spec.size(); ++m) {
        const auto& md = spec.modes()[m];
        if (md.g_hat == 0.0) continue;
        const real w2 = md.g_hat * md.g_hat;
        const real g2 = spec.g2(m);
        const real coth = thermal_coth(md.omega, spec.beta());
        for (std::size_t j = 0; j < count; ++j) {
            const real tau = static_cast<real>(j) * dt;
            const real c = std::cos(md.omega * tau), s = std::sin(md.omega * tau);
            k.alpha_R[j] += w2 * coth * c;
            k.alpha_I[j] -= w2 * s;
            k.k00_0s[j] += g2 * cplx(c, -s);
        }
    }
    for (std::size_t j = 0; j < count; ++j) {
        const real tau = static_cast<real>(j) * dt;
        k.k00_s0[j] = std::conj(k.k00_0s[j]);
        k.k11_0s[j] = k.alpha_I[j] * heaviside(tau);
        // alpha_I is odd: alpha_I(-tau) = -alpha_I(tau).
        k.k11_s0[j] = -k.alpha_I[j] * heaviside(-tau);
    }
    return k;
}

inline CorrelationKernel build_kernels(const BathSpectrum& spec, const TimeGrid& grid) {
    return build_kernels(spec, grid.dt, grid.n);
}

}  // namespace oqs
