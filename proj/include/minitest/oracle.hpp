#pragma once

// Exact small-instance ground truth. This module intentionally reimplements
// every formula it checks (statistics, divergences, pmfs) by brute-force
// enumeration; it must not route through statistics.hpp or adversary.hpp.

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "minitest/model.hpp"
#include "minitest/special.hpp"

namespace minitest::oracle {

// Stable log-space pmfs.
inline double binomial_pmf(long long n, double p, long long k) {
    if (k < 0 || k > n) return 0.0;
    if (p == 0.0) return k == 0 ? 1.0 : 0.0;
    if (p == 1.0) return k == n ? 1.0 : 0.0;
    return std::exp(log_binomial_coeff(n, k) + static_cast<double>(k) * std::log(p) +
                    static_cast<double>(n - k) * std::log1p(-p));
}

inline double poisson_pmf(double lambda, long long k) {
    if (k < 0) return 0.0;
    if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
    return std::exp(static_cast<double>(k) * std::log(lambda) - lambda -
                    std::lgamma(static_cast<double>(k) + 1.0));
}

enum class StatKind { Bulk, T1, T2 };

namespace detail {

// Per-coordinate split-count supports and pmfs. Poisson supports are
// truncated where the remaining mass is below 1e-15.
inline std::vector<double> count_pmf(ModelKind model, double q, long long k, long long& cap) {
    std::vector<double> pmf;
    if (model == ModelKind::Binomial) {
        cap = k;
        pmf.resize(static_cast<std::size_t>(k) + 1);
        for (long long s = 0; s <= k; ++s) pmf[static_cast<std::size_t>(s)] = binomial_pmf(k, q, s);
    } else {
        const double lam = static_cast<double>(k) * q;
        double cum = 0.0;
        cap = 0;
        for (long long s = 0;; ++s) {
            pmf.push_back(poisson_pmf(lam, s));
            cum += pmf.back();
            cap = s;
            if (1.0 - cum < 1e-14 || s > 4 * static_cast<long long>(lam) + 60) break;
        }
    }
    return pmf;
}

inline double statistic_value(StatKind kind, std::span<const double> p,
                              std::span<const long long> s, std::span<const long long> sp,
                              std::size_t A, double b, long long k) {
    const double kd = static_cast<double>(k);
    CompensatedSum acc;
    switch (kind) {
        case StatKind::Bulk:
            for (std::size_t i = 0; i < A; ++i) {
                const double w = b > 0.0 ? std::pow(p[i], -b) : 1.0;
                acc.add(w * (s[i] / kd - p[i]) * (sp[i] / kd - p[i]));
            }
            break;
        case StatKind::T1:
            for (std::size_t i = A; i < p.size(); ++i)
                acc.add(static_cast<double>(s[i] + sp[i]) / (2.0 * kd) - p[i]);
            break;
        case StatKind::T2:
            for (std::size_t i = A; i < p.size(); ++i)
                acc.add((s[i] / kd - p[i]) * (sp[i] / kd - p[i]));
            break;
    }
    return acc.value();
}

// Enumerates all vectors v in prod_j [0, caps_j] and calls fn(v, weight).
inline void enumerate_counts(const std::vector<std::vector<double>>& pmfs,
                             std::vector<long long>& v, std::size_t j, double w,
                             const std::function<void(const std::vector<long long>&, double)>& fn) {
    if (j == pmfs.size()) {
        fn(v, w);
        return;
    }
    for (std::size_t s = 0; s < pmfs[j].size(); ++s) {
        v[j] = static_cast<long long>(s);
        enumerate_counts(pmfs, v, j + 1, w * pmfs[j][s], fn);
    }
}

// Multinomial: enumerates compositions of k over N categories with their
// multinomial probabilities.
inline void enumerate_compositions(std::span<const double> q, long long k,
                                   std::vector<long long>& v, std::size_t j, long long left,
                                   double logw,
                                   const std::function<void(const std::vector<long long>&, double)>& fn) {
    if (j + 1 == v.size()) {
        v[j] = left;
        double lw = logw;
        if (left > 0) {
            if (q[j] == 0.0) return;
            lw += static_cast<double>(left) * std::log(q[j]) - std::lgamma(static_cast<double>(left) + 1.0);
        } else {
            lw -= std::lgamma(1.0);
        }
        fn(v, std::exp(lw + std::lgamma(static_cast<double>(k) + 1.0)));
        return;
    }
    for (long long s = 0; s <= left; ++s) {
        if (s > 0 && q[j] == 0.0) break;
        double lw = logw - std::lgamma(static_cast<double>(s) + 1.0);
        if (s > 0) lw += static_cast<double>(s) * std::log(q[j]);
        v[j] = s;
        enumerate_compositions(q, k, v, j + 1, left - s, lw, fn);
    }
}

}  // namespace detail

struct ExactMoments {
    double mean = 0;
    double variance = 0;
};

// Exact mean and variance of a split statistic by full enumeration over all
// (S, S') outcomes, weighted by the model pmfs. n = 2k observations.
// Desk-scale by contract: N <= 4 and k <= 6.
inline ExactMoments enumerate_statistic_moments(ModelKind model, std::span<const double> p,
                                                std::span<const double> q, long long k,
                                                std::size_t A, double b, StatKind kind) {
    const std::size_t N = p.size();
    if (N > 4 || k > 6) throw std::invalid_argument("oracle: enumeration capped at N <= 4, k <= 6");
    if (q.size() != N) throw std::invalid_argument("oracle: p/q size mismatch");

    CompensatedSum ex, ex2, wtot;
    auto accumulate = [&](std::span<const long long> s, std::span<const long long> sp, double w) {
        if (w == 0.0) return;
        const double x = detail::statistic_value(kind, p, s, sp, A, b, k);
        ex.add(w * x);
        ex2.add(w * x * x);
        wtot.add(w);
    };

    if (model == ModelKind::Multinomial) {
        std::vector<long long> s(N), sp(N);
        detail::enumerate_compositions(q, k, s, 0, k, 0.0,
            [&](const std::vector<long long>& sv, double ws) {
                detail::enumerate_compositions(q, k, sp, 0, k, 0.0,
                    [&](const std::vector<long long>& spv, double wsp) {
                        accumulate(sv, spv, ws * wsp);
                    });
            });
    } else {
        std::vector<std::vector<double>> pmfs(N);
        double states = 1.0;
        for (std::size_t j = 0; j < N; ++j) {
            long long cap = 0;
            pmfs[j] = detail::count_pmf(model, q[j], k, cap);
            states *= static_cast<double>(cap + 1);
        }
        if (states * states > 2.5e7)
            throw std::invalid_argument("oracle: outcome space too large for enumeration");
        std::vector<long long> s(N), sp(N);
        detail::enumerate_counts(pmfs, s, 0, 1.0, [&](const std::vector<long long>& sv, double ws) {
            detail::enumerate_counts(pmfs, sp, 0, ws,
                [&](const std::vector<long long>& spv, double w) { accumulate(sv, spv, w); });
        });
    }

    ExactMoments out;
    const double w = wtot.value();
    out.mean = ex.value() / w;
    out.variance = ex2.value() / w - out.mean * out.mean;
    if (out.variance < 0.0 && out.variance > -1e-15) out.variance = 0.0;
    return out;
}

// Chi-square divergence of the Rademacher mixture from the null by direct
// enumeration over histograms and all 2^N sign vectors (binomial model).
// Caps: N <= 2, n <= 4.
inline double exact_mixture_chi2(std::span<const double> p, std::span<const double> gamma,
                                 long long n) {
    const std::size_t N = p.size();
    if (N > 2 || n > 4) throw std::invalid_argument("oracle: chi2 enumeration capped at N <= 2, n <= 4");
    if (gamma.size() != N) throw std::invalid_argument("oracle: p/gamma size mismatch");

    const std::size_t signs = std::size_t{1} << N;
    std::vector<long long> s(N, 0);
    CompensatedSum chi2;
    // iterate histograms s in [0, n]^N
    std::function<void(std::size_t)> rec = [&](std::size_t j) {
        if (j == N) {
            double pp = 1.0;
            for (std::size_t i = 0; i < N; ++i) pp *= binomial_pmf(n, p[i], s[i]);
            CompensatedSum mix;
            for (std::size_t mask = 0; mask < signs; ++mask) {
                double term = 1.0;
                for (std::size_t i = 0; i < N; ++i) {
                    const double qi = p[i] + ((mask >> i) & 1 ? gamma[i] : -gamma[i]);
                    term *= binomial_pmf(n, qi, s[i]);
                }
                mix.add(term / static_cast<double>(signs));
            }
            const double m = mix.value();
            if (pp == 0.0) {
                if (m > 1e-300)
                    throw std::domain_error("oracle: mixture puts mass where the null does not");
                return;
            }
            chi2.add(m * m / pp);
            return;
        }
        for (long long v = 0; v <= n; ++v) {
            s[j] = v;
            rec(j + 1);
        }
    };
    rec(0);
    return chi2.value() - 1.0;
}

struct TailPriorTv {
    double tv = 0;
    double collision_mass_null = 0;     // sum_i P_p(s_i >= 2)
    double collision_mass_mixture = 0;  // same under the sparse mixture
};

// Exact total variation between the null and the sparse tail mixture on the
// tail block (coordinates at and beyond U), by enumeration. The two measures
// agree off the block, so this is the full TV. Caps: block size <= 2, n <= 4.
inline TailPriorTv exact_tv_tail_prior(std::span<const double> p_tail, double pi_bar,
                                       long long n) {
    const std::size_t m = p_tail.size();
    if (m > 2 || n > 4) throw std::invalid_argument("oracle: tv enumeration capped at 2 coords, n <= 4");
    std::vector<double> pi(m);
    for (std::size_t i = 0; i < m; ++i) {
        pi[i] = p_tail[i] / pi_bar;
        if (pi[i] < 0.0 || pi[i] > 1.0 + 1e-12)
            throw std::invalid_argument("oracle: pi_i outside [0,1]");
        pi[i] = std::min(pi[i], 1.0);
    }
    auto mixture_pmf = [&](std::size_t i, long long s) {
        // coordinate law: (1-pi_i) delta_0 + pi_i Bin(n, pi_bar)
        double v = pi[i] * binomial_pmf(n, pi_bar, s);
        if (s == 0) v += 1.0 - pi[i];
        return v;
    };
    TailPriorTv out;
    CompensatedSum tv, coll_null, coll_mix;
    std::vector<long long> s(m, 0);
    std::function<void(std::size_t)> rec = [&](std::size_t j) {
        if (j == m) {
            double pp = 1.0, mm = 1.0;
            int collisions = 0;
            for (std::size_t i = 0; i < m; ++i) {
                pp *= binomial_pmf(n, p_tail[i], s[i]);
                mm *= mixture_pmf(i, s[i]);
                if (s[i] >= 2) ++collisions;
            }
            tv.add(std::abs(pp - mm));
            if (collisions > 0) {
                coll_null.add(collisions * pp);
                coll_mix.add(collisions * mm);
            }
            return;
        }
        for (long long v = 0; v <= n; ++v) {
            s[j] = v;
            rec(j + 1);
        }
    };
    rec(0);
    out.tv = 0.5 * tv.value();
    out.collision_mass_null = coll_null.value();
    out.collision_mass_mixture = coll_mix.value();
    return out;
}

}  // namespace minitest::oracle
