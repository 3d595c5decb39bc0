#pragma once

// Superoperators on column-major flattened N x N matrices and the interaction
// picture with respect to the system Hamiltonian.

#include "oqs/types.hpp"

#include <Eigen/Eigenvalues>

namespace oqs {

struct SystemModel {
    Matrix H;     // system Hamiltonian
    Matrix X;     // Hermitian coupling operator
    Matrix rho0;  // initial reduced state

    Eigen::Index dim() const noexcept { return H.rows(); }

    void validate(real tol = 1e-10) const {
        const auto n = H.rows();
        if (n == 0 || H.cols() != n || X.rows() != n || X.cols() != n || rho0.rows() != n || rho0.cols() != n)
            throw ConfigError("model: H, X and rho0 must be square with equal dimension");
        if (!is_hermitian(H, tol)) throw ConfigError("model: H must be Hermitian");
        if (!is_hermitian(X, tol)) throw ConfigError("model: X must be Hermitian");
        if (!is_hermitian(rho0, tol)) throw ConfigError("model: rho0 must be Hermitian");
        if (std::abs(rho0.trace() - cplx(1.0)) > tol) throw ConfigError("model: rho0 must have unit trace");
        Eigen::SelfAdjointEigenSolver<Matrix> es(rho0);
        if (es.eigenvalues().minCoeff() < -tol) throw ConfigError("model: rho0 must be positive semidefinite");
    }
};

/// Propagation e^{-iHt} via the eigenbasis of H_S. Used for X(t) and for
/// moving states between the interaction and Schroedinger pictures.
class InteractionFrame {
public:
    explicit InteractionFrame(const Matrix& H) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(H);
        energies_ = es.eigenvalues();
        basis_ = es.eigenvectors();
    }

    /// e^{-iHt}
    Matrix propagator(real t) const {
        Vector phase(energies_.size());
        for (Eigen::Index i = 0; i < energies_.size(); ++i) phase(i) = std::exp(-kI * energies_(i) * t);
        return basis_ * phase.asDiagonal() * basis_.adjoint();
    }

    /// X(t) = e^{iHt} X e^{-iHt}
    Matrix rotate(const Matrix& X, real t) const {
        const Matrix u = propagator(t);
        return u.adjoint() * X * u;
    }

    Matrix to_schroedinger(const Matrix& rho_int, real t) const {
        const Matrix u = propagator(t);
        return u * rho_int * u.adjoint();
    }
    Matrix to_interaction(const Matrix& rho, real t) const {
        const Matrix u = propagator(t);
        return u.adjoint() * rho * u;
    }

    const Eigen::VectorXd& energies() const noexcept { return energies_; }
    const Matrix& basis() const noexcept { return basis_; }

private:
    Eigen::VectorXd energies_;
    Matrix basis_;
};

inline Matrix rotate_coupling(const SystemModel& model, real t) { return InteractionFrame(model.H).rotate(model.X, t); }

using Superoperator = Matrix;

namespace detail {
inline void require_square(const Matrix& a) {
    if (a.rows() != a.cols()) throw std::invalid_argument("superoperator: operator must be square");
}
// vec(A B) = (I (x) A) vec(B); vec(B A) = (A^T (x) I) vec(B) for column-major vec.
inline Superoperator left_mult(const Matrix& a) {
    const auto n = a.rows();
    Superoperator s = Superoperator::Zero(n * n, n * n);
    for (Eigen::Index c = 0; c < n; ++c) s.block(c * n, c * n, n, n) = a;
    return s;
}
inline Superoperator right_mult(const Matrix& a) {
    const auto n = a.rows();
    Superoperator s = Superoperator::Zero(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            if (a(j, i) != cplx(0.0)) s.block(i * n, j * n, n, n) = a(j, i) * Matrix::Identity(n, n);
    return s;
}
}  // namespace detail

/// L_M A = i [X, A]
inline Superoperator commutator_superop(const Matrix& Xt) {
    detail::require_square(Xt);
    return kI * (detail::left_mult(Xt) - detail::right_mult(Xt));
}

/// L^c_M A = -1/2 {X, A}
inline Superoperator anticommutator_superop(const Matrix& Xt) {
    detail::require_square(Xt);
    return -0.5 * (detail::left_mult(Xt) + detail::right_mult(Xt));
}

enum class NoiseKind { plain, conjugate };  // superscript 0 / *

/// Family maps: L_0^0 = L_0^* = L_M, L_1^0 = 2 L_M, L_1^* = L^c_M.
inline Superoperator family_superop(int j, NoiseKind kind, const Matrix& Xt) {
    if (j == 0) return commutator_superop(Xt);
    if (j == 1) return kind == NoiseKind::plain ? Superoperator(2.0 * commutator_superop(Xt)) : anticommutator_superop(Xt);
    throw std::invalid_argument("family_superop: j must be 0 or 1");
}

}  // namespace oqs
