#include <gtest/gtest.h>

#include "bench_models.hpp"

using namespace oqs;

namespace {

std::shared_ptr<const NoiseFactors> factors_for(const BathSpectrum& s, real t_max, real delta) {
    return std::make_shared<const NoiseFactors>(s, t_max, delta);
}

// Second moments implied by the factors, without sampling.
cplx xi_nu_from_factors(const NoiseFactors& F, real tau) {
    cplx sum = 0.0;
    for (std::size_t k = 0; k < F.n_cross(); ++k)
        sum += 2.0 * kI * F.f()[k] * std::conj(F.h()[k]) * std::exp(-kI * F.cross_omega()[k] * tau);
    return sum;
}

real xi_xi_from_factors(const NoiseFactors& F, real tau) {
    real sum = 0.0;
    for (std::size_t m = 0; m < F.n_modes(); ++m) sum += 2.0 * F.g()[m] * F.g()[m] * std::cos(F.omega()[m] * tau);
    return sum;
}

}  // namespace

TEST(NoiseFactors, CrossMomentExactOnLagGrid) {
    const auto spec = bench::ohmic(0.1, 1.0);
    const real delta = 0.025, t_max = 5.0;
    const NoiseFactors F(spec, t_max, delta);
    EXPECT_GE(static_cast<real>(F.n_cross()) * delta, 2.0 * t_max);
    for (int m = -200; m <= 200; m += 7) {
        const real tau = m * delta;
        const cplx want = cross_correlation_target(spec, tau);
        EXPECT_NEAR(std::abs(xi_nu_from_factors(F, tau) - want), 0.0, 1e-12) << "tau=" << tau;
    }
}

TEST(NoiseFactors, CrossMomentIsCausal) {
    const auto spec = bench::ohmic(0.1, kInf);
    const NoiseFactors F(spec, 2.0, 0.05);
    for (int m = 1; m <= 40; ++m) EXPECT_NEAR(std::abs(xi_nu_from_factors(F, -0.05 * m)), 0.0, 1e-12);
    // alpha_I(0) = 0, so the zero-lag value vanishes too.
    EXPECT_NEAR(std::abs(xi_nu_from_factors(F, 0.0)), 0.0, 1e-12);
}

TEST(NoiseFactors, RealCorrelationFromBathModes) {
    const auto spec = bench::ohmic(0.07, 0.6);
    const NoiseFactors F(spec, 3.0, 0.05);
    for (real tau : {0.0, 0.3, 1.7, -2.2}) EXPECT_NEAR(xi_xi_from_factors(F, tau), correlation_function(spec, tau).real(), 1e-13);
}

TEST(NoiseFactors, RejectsBadArguments) {
    const auto spec = bench::ohmic(0.1, 1.0);  // recurrence 8 pi
    EXPECT_THROW(NoiseFactors(spec, 0.0, 0.1), ConfigError);
    EXPECT_THROW(NoiseFactors(spec, 1.0, 0.0), ConfigError);
    EXPECT_THROW(NoiseFactors(spec, 30.0, 0.1), ConfigError);
}

TEST(NoiseFactors, ForwardDftMatchesDirectSum) {
    const NoiseFactors F(bench::ohmic(0.1, 1.0), 1.0, 0.1);
    const std::size_t G = F.n_cross();
    std::vector<cplx> in(G), out(G);
    for (std::size_t k = 0; k < G; ++k) in[k] = cplx(std::sin(1.0 + k), std::cos(0.3 * k));
    F.forward_dft(in.data(), out.data());
    for (std::size_t j = 0; j < G; ++j) {
        cplx d = 0.0;
        for (std::size_t k = 0; k < G; ++k)
            d += in[k] * std::exp(cplx(0.0, -2.0 * std::numbers::pi * static_cast<real>(j * k % G) / static_cast<real>(G)));
        EXPECT_NEAR(std::abs(out[j] - d), 0.0, 1e-12);
    }
}

TEST(NoiseAmplitudes, DeterministicPerSeedAndStream) {
    const NoiseFactors F(bench::ohmic(0.1, 1.0), 1.0, 0.05);
    const auto a = sample_amplitudes(F, 42, 3), b = sample_amplitudes(F, 42, 3);
    const auto c = sample_amplitudes(F, 42, 4), d = sample_amplitudes(F, 43, 3);
    EXPECT_EQ(a.z0, b.z0);
    EXPECT_EQ(a.z1, b.z1);
    EXPECT_NE(a.z0, c.z0);
    EXPECT_NE(a.z0, d.z0);
    EXPECT_EQ(a.seed, 42u);
}

TEST(NoiseAmplitudes, CircularGaussianMoments) {
    auto gen = make_generator(7);
    const int n = 200000;
    cplx mean = 0.0, zz = 0.0;
    real abs2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const cplx z = circular_gaussian(gen);
        mean += z;
        zz += z * z;
        abs2 += std::norm(z);
    }
    // standard errors ~ 1/sqrt(n) ~ 2.2e-3
    EXPECT_LT(std::abs(mean / real(n)), 0.015);
    EXPECT_LT(std::abs(zz / real(n)), 0.015);
    EXPECT_NEAR(abs2 / n, 1.0, 0.015);
}

TEST(NoisePath, ZeroCouplingGivesZeroNoise) {
    auto F = factors_for(bench::ohmic(0.0, 1.0), 2.0, 0.05);
    const NoisePath p(F, sample_amplitudes(*F, 1));
    for (real t : {0.0, 0.5, 2.0}) {
        const auto s = p.evaluate(t);
        EXPECT_EQ(s.xi, cplx(0.0));
        EXPECT_EQ(s.nu, cplx(0.0));
    }
}

TEST(NoisePath, EvaluateRejectsOutOfRange) {
    auto F = factors_for(bench::ohmic(0.1, 1.0), 2.0, 0.05);
    const NoisePath p(F, sample_amplitudes(*F, 1));
    EXPECT_THROW(p.evaluate(-0.1), DomainError);
    EXPECT_THROW(p.evaluate(2.1), DomainError);
    EXPECT_NO_THROW(p.evaluate(2.0));
}

TEST(NoisePath, RejectsMismatchedAmplitudes) {
    auto F = factors_for(bench::ohmic(0.1, 1.0), 2.0, 0.05);
    auto a = sample_amplitudes(*F, 1);
    a.z1.pop_back();
    EXPECT_THROW(NoisePath(F, a), std::invalid_argument);
}

TEST(NoisePath, TabulationMatchesDirectEvaluation) {
    auto F = factors_for(bench::ohmic(0.1, 0.5), 4.0, 0.025);
    const NoisePath p(F, sample_amplitudes(*F, 99, 5));
    std::vector<cplx> xi, nu;
    const std::size_t count = 161;
    p.tabulate(count, xi, nu);
    for (std::size_t j = 0; j < count; j += 8) {
        const auto s = p.evaluate(0.025 * static_cast<real>(j));
        EXPECT_NEAR(std::abs(xi[j] - s.xi), 0.0, 1e-11);
        EXPECT_NEAR(std::abs(nu[j] - s.nu), 0.0, 1e-11);
    }
    EXPECT_THROW(p.tabulate(200, xi, nu), DomainError);
}

TEST(NoiseStatistics, EnsembleMatchesTargets) {
    const auto spec = bench::ohmic(0.1, 1.0, 20);
    auto F = factors_for(spec, 2.0, 0.125);
    std::vector<real> times;
    for (int i = 0; i <= 8; ++i) times.push_back(0.25 * i);
    const auto r = validate_statistics(F, spec, 2024, 4000, times);
    EXPECT_TRUE(r.passed()) << r.xi_xi.max_sigma << " " << r.xi_nu.max_sigma << " " << r.nu_nu.max_sigma;
    EXPECT_EQ(r.paths, 4000u);
}

TEST(NoiseStatistics, DetectsWrongNormalization) {
    const auto spec = bench::ohmic(0.1, 1.0, 20);
    auto F = factors_for(spec.scaled(2.0), 2.0, 0.125);
    const std::vector<real> times{0.0, 0.5, 1.0};
    const auto r = validate_statistics(F, spec, 2024, 4000, times);
    EXPECT_FALSE(r.passed());
    EXPECT_GT(r.xi_xi.flagged, 0u);
}

TEST(NoiseStatistics, StoredPathsAgreeWithStreaming) {
    const auto spec = bench::ohmic(0.1, 1.0, 10);
    auto F = factors_for(spec, 1.0, 0.25);
    std::vector<NoisePath> paths;
    for (std::size_t i = 0; i < 150; ++i) paths.emplace_back(F, sample_amplitudes(*F, 5, i));
    const std::vector<real> times{0.0, 0.5, 1.0};
    const auto a = validate_statistics(paths, spec, times);
    const auto b = validate_statistics(F, spec, 5, 150, times);
    EXPECT_EQ(a.xi_xi.empirical, b.xi_xi.empirical);
    EXPECT_EQ(a.xi_nu.empirical, b.xi_nu.empirical);
}

TEST(NoiseStatistics, RequiresEnoughPaths) {
    const auto spec = bench::ohmic(0.1, 1.0, 10);
    auto F = factors_for(spec, 1.0, 0.25);
    EXPECT_THROW(validate_statistics(F, spec, 1, 99, {0.0}), std::invalid_argument);
}
