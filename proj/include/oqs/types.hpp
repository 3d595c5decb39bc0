#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace oqs {

using real = double;
using cplx = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;

inline constexpr real kInf = std::numeric_limits<real>::infinity();
inline constexpr cplx kI{0.0, 1.0};

// Invalid run configuration (bad keys, recurrence violations, dimension guards).
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Numerical failure during a solve (non-finite state).
class SolverError : public std::runtime_error {
public:
    SolverError(const std::string& what, std::size_t step)
        : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

// Uniform time grid t_k = k*dt, k = 0..n.
struct TimeGrid {
    real dt{0.0};
    std::size_t n{0};

    real t(std::size_t k) const noexcept { return static_cast<real>(k) * dt; }
    real t_max() const noexcept { return static_cast<real>(n) * dt; }
    std::size_t size() const noexcept { return n + 1; }

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("grid: dt must be positive and finite");
        if (n == 0) throw ConfigError("grid: need at least one step");
    }
};

// Time-indexed sequence of N x N density matrices. `stderr_` is empty for
// deterministic solvers; for ensembles it holds the standard error of the
// real part in .real() and of the imaginary part in .imag() of every entry.
struct DensityMatrixSeries {
    TimeGrid grid;
    std::vector<Matrix> rho;
    std::vector<Matrix> stderr_;

    std::size_t dim() const { return rho.empty() ? 0 : static_cast<std::size_t>(rho.front().rows()); }
};

// Column-major flattening (Eigen's native storage order).
inline Vector flatten(const Matrix& a) {
    return Eigen::Map<const Vector>(a.data(), a.size());
}

inline Matrix unflatten(const Vector& v, Eigen::Index n) {
    if (v.size() != n * n) throw std::invalid_argument("unflatten: size mismatch");
    return Eigen::Map<const Matrix>(v.data(), n, n);
}

inline Eigen::Index dim_from_flat(Eigen::Index len) {
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(len))));
    if (n * n != len) throw std::invalid_argument("flattened length is not a perfect square");
    return n;
}

inline bool is_hermitian(const Matrix& a, real tol = 1e-12) {
    return a.rows() == a.cols() && (a - a.adjoint()).cwiseAbs().maxCoeff() <= tol * std::max<real>(1.0, a.cwiseAbs().maxCoeff());
}

inline real spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

inline real max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

inline bool all_finite(const Matrix& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i)
        if (!std::isfinite(a.data()[i].real()) || !std::isfinite(a.data()[i].imag())) return false;
    return true;
}

// Pauli matrices, used by tests, configs and benchmarks.
namespace pauli {
inline Matrix x() { Matrix m(2, 2); m << 0, 1, 1, 0; return m; }
inline Matrix y() { Matrix m(2, 2); m << 0, -kI, kI, 0; return m; }
inline Matrix z() { Matrix m(2, 2); m << 1, 0, 0, -1; return m; }
}  // namespace pauli

}  // namespace oqs
