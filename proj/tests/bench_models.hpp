#pragma once

// Small benchmark models shared by the unit tests and the acceptance run.

#include "oqs/oqs.hpp"

namespace bench {

using namespace oqs;

inline Matrix rho_plus() {
    Matrix r(2, 2);
    r << 0.5, 0.5, 0.5, 0.5;
    return r;
}

inline Matrix rho_up() {
    Matrix r = Matrix::Zero(2, 2);
    r(0, 0) = 1.0;
    return r;
}

/// H = omega0/2 sigma_z, X = sigma_z, |+><+|.
inline SystemModel dephasing_model(real omega0 = 1.0) { return {0.5 * omega0 * pauli::z(), pauli::z(), rho_plus()}; }

/// H = Delta/2 sigma_x, X = sigma_z, spin up.
inline SystemModel tunneling_model(real delta = 1.0) { return {0.5 * delta * pauli::x(), pauli::z(), rho_up()}; }

inline BathSpectrum ohmic(real eta, real beta, std::size_t n_modes = 40, real omega_max = 10.0, real omega_c = 2.0,
                          real t_max = 0.0) {
    SpectralDensityParams p;
    p.eta = eta;
    p.omega_c = omega_c;
    p.n_modes = n_modes;
    p.omega_max = omega_max;
    p.beta = beta;
    return discretize_spectral_density(p, t_max);
}

/// Three modes, zero temperature; `scale` multiplies every coupling.
inline BathSpectrum three_mode(real scale = 1.0) {
    return BathSpectrum({{0.7, 0.05 * scale}, {1.0, 0.06 * scale}, {1.6, 0.04 * scale}}, kInf);
}

/// Modes whose correlation function approximates
///   alpha_R(tau) = Gamma/tau_c exp(-|tau|/tau_c)
/// (so int_0^inf alpha_R = Gamma), i.e. J coth = (2 Gamma/pi) / (1 + (omega tau_c)^2).
inline BathSpectrum exponential_kernel(real Gamma, real tau_c, real beta, real omega_max, std::size_t n_modes) {
    std::vector<BathMode> modes;
    const real dw = omega_max / static_cast<real>(n_modes);
    for (std::size_t l = 1; l <= n_modes; ++l) {
        const real w = (static_cast<real>(l) - 0.5) * dw;
        const real s = (2.0 * Gamma / std::numbers::pi) / (1.0 + w * w * tau_c * tau_c);
        modes.push_back({w, std::sqrt(s * dw * std::tanh(0.5 * beta * w))});
    }
    return BathSpectrum(std::move(modes), beta);
}

}  // namespace bench
