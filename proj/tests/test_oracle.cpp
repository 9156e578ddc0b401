#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "minitest/oracle.hpp"
#include "minitest/rng.hpp"
#include "minitest/statistics.hpp"

using namespace minitest;

TEST(exact_pmf, anchors) {
    EXPECT_DOUBLE_EQ(oracle::poisson_pmf(0.0, 0), 1.0);
    EXPECT_DOUBLE_EQ(oracle::binomial_pmf(2, 0.5, 1), 0.5);
    EXPECT_NEAR(oracle::poisson_pmf(3.0, 3), 0.22404180765538775, 1e-14);
    EXPECT_DOUBLE_EQ(oracle::binomial_pmf(5, 0.0, 0), 1.0);
    EXPECT_DOUBLE_EQ(oracle::binomial_pmf(5, 1.0, 5), 1.0);
    EXPECT_DOUBLE_EQ(oracle::poisson_pmf(2.0, -1), 0.0);
}

TEST(enumerate_moments, null_means_vanish) {
    const std::vector<double> p{0.3, 0.1};
    for (auto model : {ModelKind::Binomial, ModelKind::Poisson}) {
        for (auto kind : {oracle::StatKind::Bulk, oracle::StatKind::T1, oracle::StatKind::T2}) {
            const auto m = oracle::enumerate_statistic_moments(model, p, p, 3, 1, 0.5, kind);
            EXPECT_NEAR(m.mean, 0.0, 1e-13);
            EXPECT_GE(m.variance, 0.0);
        }
    }
}

TEST(enumerate_moments, poisson_mean_matches_closed_form) {
    const std::vector<double> p{0.3, 0.1}, q{0.45, 0.2};
    const double b = 2.0 / 3.0;
    const auto e = oracle::enumerate_statistic_moments(ModelKind::Poisson, p, q, 3, 1, b,
                                                       oracle::StatKind::Bulk);
    const auto m = moments_t_bulk(p, q, 1, b, 3);
    EXPECT_NEAR(e.mean, m.mean, 1e-12);
}

TEST(enumerate_moments, multinomial_mean_matches_closed_form) {
    const std::vector<double> p{0.5, 0.3, 0.2}, q{0.4, 0.35, 0.25};
    const double b = 0.5;
    const auto e = oracle::enumerate_statistic_moments(ModelKind::Multinomial, p, q, 4, 2, b,
                                                       oracle::StatKind::Bulk);
    const auto m = moments_t_bulk(p, q, 2, b, 4);
    EXPECT_NEAR(e.mean, m.mean, 1e-12);
    const auto e1 = oracle::enumerate_statistic_moments(ModelKind::Multinomial, p, q, 4, 2, b,
                                                        oracle::StatKind::T1);
    const auto m1 = moments_t1(p, q, 8, 2);
    EXPECT_NEAR(e1.mean, m1.mean, 1e-12);
}

TEST(enumerate_moments, deterministic_under_bulk_reordering) {
    // Compensated accumulation: permuting coordinates inside the bulk (and
    // inside the tail) leaves the results identical to 1e-14.
    const std::vector<double> p{0.4, 0.3, 0.2}, q{0.3, 0.25, 0.35};
    const std::vector<double> p2{0.3, 0.4, 0.2}, q2{0.25, 0.3, 0.35};
    for (auto kind : {oracle::StatKind::Bulk, oracle::StatKind::T1}) {
        const auto a = oracle::enumerate_statistic_moments(ModelKind::Binomial, p, q, 3, 2, 0.5, kind);
        const auto b = oracle::enumerate_statistic_moments(ModelKind::Binomial, p2, q2, 3, 2, 0.5, kind);
        EXPECT_NEAR(a.mean, b.mean, 1e-14);
        EXPECT_NEAR(a.variance, b.variance, 1e-14);
    }
}

TEST(enumerate_moments, caps_enforced) {
    const std::vector<double> p(5, 0.1), q(5, 0.1);
    EXPECT_THROW(oracle::enumerate_statistic_moments(ModelKind::Binomial, p, q, 3, 1, 0.5,
                                                     oracle::StatKind::Bulk),
                 std::invalid_argument);
    const std::vector<double> p2(2, 0.1), q2(2, 0.1);
    EXPECT_THROW(oracle::enumerate_statistic_moments(ModelKind::Binomial, p2, q2, 7, 1, 0.5,
                                                     oracle::StatKind::Bulk),
                 std::invalid_argument);
}

TEST(exact_mixture_chi2, zero_gamma) {
    const std::vector<double> p{0.3, 0.2};
    EXPECT_NEAR(oracle::exact_mixture_chi2(p, std::vector<double>{0.0, 0.0}, 3), 0.0, 1e-14);
}

TEST(exact_mixture_chi2, monotone_in_gamma) {
    const std::vector<double> p{0.4, 0.25};
    double prev = -1.0;
    for (double g = 0.0; g <= 0.2001; g += 0.02) {
        const double v = oracle::exact_mixture_chi2(p, std::vector<double>{g, g * 0.5}, 4);
        EXPECT_GE(v, prev - 1e-13);
        prev = v;
    }
}

TEST(exact_mixture_chi2, caps_enforced) {
    const std::vector<double> p(3, 0.2), g(3, 0.01);
    EXPECT_THROW(oracle::exact_mixture_chi2(p, g, 2), std::invalid_argument);
    const std::vector<double> p2(2, 0.2), g2(2, 0.01);
    EXPECT_THROW(oracle::exact_mixture_chi2(p2, g2, 5), std::invalid_argument);
}

TEST(exact_tv_tail_prior, zero_tail) {
    const std::vector<double> p{0.0, 0.0};
    const auto tv = oracle::exact_tv_tail_prior(p, 0.1, 3);
    // pi_i = 0: the mixture is the point mass at zero counts, same as the null
    EXPECT_NEAR(tv.tv, 0.0, 1e-14);
    EXPECT_NEAR(tv.collision_mass_null, 0.0, 1e-14);
}

TEST(exact_tv_tail_prior, pi_equal_one_reduces_to_level_vs_null) {
    // pi_i = 1: the mixture is Bin(n, pi_bar) on each coordinate.
    const double pi_bar = 0.05;
    const std::vector<double> p{pi_bar};
    const long long n = 4;
    const auto tv = oracle::exact_tv_tail_prior(p, pi_bar, n);
    EXPECT_NEAR(tv.tv, 0.0, 1e-14);  // level equals p: identical distributions

    const std::vector<double> p2{0.03};
    const auto tv2 = oracle::exact_tv_tail_prior(p2, pi_bar, n);
    // direct two-distribution TV for one coordinate
    double direct = 0.0;
    const double pi = 0.03 / pi_bar;
    for (long long s = 0; s <= n; ++s) {
        double mix = pi * oracle::binomial_pmf(n, pi_bar, s);
        if (s == 0) mix += 1 - pi;
        direct += std::abs(oracle::binomial_pmf(n, 0.03, s) - mix);
    }
    EXPECT_NEAR(tv2.tv, 0.5 * direct, 1e-14);
}

TEST(exact_tv_tail_prior, collision_mass_bounded) {
    const std::vector<double> p{0.04, 0.02};
    const long long n = 4;
    const auto tv = oracle::exact_tv_tail_prior(p, 0.08, n);
    double bound = 0.0;
    for (double v : p) bound += static_cast<double>(n) * static_cast<double>(n) * v * v;
    EXPECT_LE(tv.collision_mass_null, bound);
    EXPECT_GE(tv.collision_mass_null, 0.0);
    EXPECT_GE(tv.collision_mass_mixture, 0.0);
}

TEST(gamma_q, poisson_cdf_consistency) {
    // cdf from the incomplete gamma agrees with direct pmf summation
    for (double lam : {0.5, 3.0, 40.0}) {
        double cum = 0.0;
        for (long long k = 0; k <= 80; ++k) {
            cum += oracle::poisson_pmf(lam, k);
            EXPECT_NEAR(poisson_cdf(lam, k), std::min(cum, 1.0), 1e-12) << lam << " " << k;
        }
    }
}
