#pragma once

#include <cmath>
#include <span>
#include <stdexcept>

#include "minitest/model.hpp"
#include "minitest/rates.hpp"

namespace minitest {

namespace detail {
inline double bulk_weight(double p, double b) {
    return (b > 0.0) ? std::pow(p, -b) : 1.0;
}
}  // namespace detail

// Weighted chi-square bulk statistic,
//   T_bulk = sum_{i<=A} p_i^{-b} (S_i/k - p_i)(S'_i/k - p_i).
inline double t_bulk(std::span<const double> p, std::span<const long long> S,
                     std::span<const long long> S_prime, std::size_t A, double b, long long k) {
    if (A == 0) throw std::domain_error("t_bulk: empty bulk (A = 0), test must be skipped");
    if (k < 1) throw std::invalid_argument("t_bulk: requires k >= 1");
    double acc = 0.0;
    const double kd = static_cast<double>(k);
    for (std::size_t i = 0; i < A; ++i) {
        if (b > 0.0 && p[i] <= 0.0)
            throw std::logic_error("t_bulk: zero p inside bulk violates the index-A contract");
        acc += detail::bulk_weight(p[i], b) *
               (static_cast<double>(S[i]) / kd - p[i]) *
               (static_cast<double>(S_prime[i]) / kd - p[i]);
    }
    return acc;
}

// No-split bulk statistic from the histogram H:
//   raw:       sum_{j<=A} p_j^{-b} [ (H_j/n - p_j)^2 - H_j ]
//   corrected: sum_{j<=A} p_j^{-b} [ (H_j/n - p_j)^2 - H_j/n^2 ]
// The raw -H_j bracket is dimensionally odd next to (H_j/n - p_j)^2; the
// -H_j/n^2 form matches the split statistic's mean. Both are exposed.
inline double t_bulk_nosplit(std::span<const double> p, std::span<const long long> hist,
                             std::size_t A, double b, long long n, bool corrected = false) {
    if (A == 0) throw std::domain_error("t_bulk_nosplit: empty bulk (A = 0)");
    if (n < 1) throw std::invalid_argument("t_bulk_nosplit: requires n >= 1");
    double acc = 0.0;
    const double nd = static_cast<double>(n);
    for (std::size_t j = 0; j < A; ++j) {
        if (b > 0.0 && p[j] <= 0.0)
            throw std::logic_error("t_bulk_nosplit: zero p inside bulk");
        const double h = static_cast<double>(hist[j]);
        const double dev = h / nd - p[j];
        const double bracket = corrected ? (dev * dev - h / (nd * nd)) : (dev * dev - h);
        acc += detail::bulk_weight(p[j], b) * bracket;
    }
    return acc;
}

// Tail mass statistic T_1 = sum_{i>A} N_i/n - p_i.
inline double t1_tail(std::span<const double> p, std::span<const long long> hist, std::size_t A,
                      long long n) {
    if (n < 1) throw std::invalid_argument("t1_tail: requires n >= 1");
    double acc = 0.0;
    const double nd = static_cast<double>(n);
    for (std::size_t i = A; i < p.size(); ++i)
        acc += static_cast<double>(hist[i]) / nd - p[i];
    return acc;
}

// Collision test psi_2: reject iff some tail coordinate is observed twice.
inline bool psi2_collision(std::span<const long long> hist, std::size_t A) {
    for (std::size_t i = A; i < hist.size(); ++i)
        if (hist[i] >= 2) return true;
    return false;
}

// Draft tail chi-square T_2 = sum_{i>A} (S_i/k - p_i)(S'_i/k - p_i).
inline double t2_tail(std::span<const double> p, std::span<const long long> S,
                      std::span<const long long> S_prime, std::size_t A, long long k) {
    if (k < 1) throw std::invalid_argument("t2_tail: requires k >= 1");
    double acc = 0.0;
    const double kd = static_cast<double>(k);
    for (std::size_t i = A; i < p.size(); ++i)
        acc += (static_cast<double>(S[i]) / kd - p[i]) *
               (static_cast<double>(S_prime[i]) / kd - p[i]);
    return acc;
}

// thr_bulk = (uc/n) ||p_{<=A}||_r^{r/2} = (uc/n) (sum_{i<=A} p_i^r)^{1/2}
// thr_t1   = uc sqrt(sum_{i>A} p_i / n)
inline std::pair<double, double> thresholds(std::span<const double> p, std::size_t A, double r,
                                            double n, const ConstantLedger& ledger) {
    const double sum_r = partial_power_sum(p, 0, A, r);
    const double thr_bulk = ledger.uc / n * std::sqrt(sum_r);
    const double tail_mass = partial_power_sum(p, A, p.size(), 1.0);
    const double thr_t1 = ledger.uc * std::sqrt(tail_mass / n);
    return {thr_bulk, thr_t1};
}

struct Moments {
    double mean = 0;
    double variance_upper = 0;  // simplified bound, drops the (1-q) factors
    double variance_exact = 0;  // exact value in the binomial model
};

// E[T_bulk] = sum_{i<=A} Delta_i^2 / p_i^b
// V[T_bulk] <= sum_{i<=A} p_i^{-2b} (q_i^2/k^2 + 2 q_i Delta_i^2 / k)
// exact:      sum_{i<=A} p_i^{-2b} (q_i^2(1-q_i)^2/k^2 + 2 q_i(1-q_i) Delta_i^2 / k)
inline Moments moments_t_bulk(std::span<const double> p, std::span<const double> q, std::size_t A,
                              double b, long long k) {
    Moments m;
    const double kd = static_cast<double>(k);
    for (std::size_t i = 0; i < A; ++i) {
        const double w = detail::bulk_weight(p[i], b);
        const double d = q[i] - p[i];
        m.mean += w * d * d;
        const double w2 = w * w;
        m.variance_upper += w2 * (q[i] * q[i] / (kd * kd) + 2.0 * q[i] * d * d / kd);
        const double v = q[i] * (1.0 - q[i]);
        m.variance_exact += w2 * (v * v / (kd * kd) + 2.0 * v * d * d / kd);
    }
    return m;
}

// E[T_1] = sum_{i>A} (q_i - p_i), V[T_1] <= sum_{i>A} q_i / n.
inline Moments moments_t1(std::span<const double> p, std::span<const double> q, long long n,
                          std::size_t A) {
    Moments m;
    const double nd = static_cast<double>(n);
    for (std::size_t i = A; i < p.size(); ++i) {
        m.mean += q[i] - p[i];
        m.variance_upper += q[i] / nd;
        m.variance_exact += q[i] * (1.0 - q[i]) / nd;
    }
    return m;
}

// E[T_2] = ||(p-q)_{>A}||_2^2; variance mirrors T_bulk with b = 0.
inline Moments moments_t2(std::span<const double> p, std::span<const double> q, long long k,
                          std::size_t A) {
    Moments m;
    const double kd = static_cast<double>(k);
    for (std::size_t i = A; i < p.size(); ++i) {
        const double d = q[i] - p[i];
        m.mean += d * d;
        m.variance_upper += q[i] * q[i] / (kd * kd) + 2.0 * q[i] * d * d / kd;
        const double v = q[i] * (1.0 - q[i]);
        m.variance_exact += v * v / (kd * kd) + 2.0 * v * d * d / kd;
    }
    return m;
}

struct TestOptions {
    bool include_draft_t2 = false;  // fold the draft tail chi-square into the aggregate
    bool frobenius_l2 = false;      // ThFrob mode: |T| vs C_eta ||p||_2 / n, t = 2 only
    bool auto_reject_impossible = true;
};

// The aggregated test. All rejection rules use strict ">". For multinomial
// data the statistics run on the last N-1 sorted coordinates. At t = 2 a
// single unweighted chi-square over all coordinates replaces the bulk/tail
// split (A = N).
inline TestVerdict run_test(const NullSpec& spec, const CanonicalNull& canon,
                            const SampleSet& sample, const TestOptions& opt = {}) {
    if (sample.histogram.size() != canon.size())
        throw std::invalid_argument("run_test: sample dimension mismatch with spec");
    if (opt.frobenius_l2 && spec.t != 2.0)
        throw std::invalid_argument("run_test: frobenius mode requires t = 2");
    const auto ledger = spec.ledger();
    const std::size_t off = effective_offset(spec.model);
    const auto p = effective_p(canon, spec.model);
    const std::size_t N = p.size();
    const long long n = sample.n;
    if (n < 1) throw std::invalid_argument("run_test: empty sample");

    auto eff_ll = [&](const std::vector<long long>& v) {
        return std::span<const long long>(v).subspan(off);
    };
    const auto hist = eff_ll(sample.histogram);

    TestVerdict v;
    v.profile = make_profile(p, static_cast<double>(n), spec.t, ledger);
    v.single_chi2_mode = (spec.t == 2.0);
    v.bulk_cut = v.single_chi2_mode ? N : v.profile.A;

    // Any observation on a zero-probability coordinate has likelihood zero
    // under the null, in all three models.
    if (opt.auto_reject_impossible) {
        for (std::size_t i = 0; i < canon.size(); ++i) {
            if (canon.p_sorted[i] == 0.0 && sample.histogram[i] > 0) {
                v.reject_reason = "impossible-under-null";
                break;
            }
        }
    }

    const auto [thr_bulk, thr_t1] =
        thresholds(p, v.bulk_cut, v.profile.r, static_cast<double>(n), ledger);
    v.thr_bulk = thr_bulk;
    v.thr_t1 = thr_t1;

    if (v.bulk_cut >= 1) {
        if (sample.split_available && sample.k >= 1) {
            v.t_bulk = t_bulk(p, eff_ll(sample.S), eff_ll(sample.S_prime), v.bulk_cut,
                              v.profile.b, sample.k);
        } else {
            // Histogram-only input: no-split variant with the same threshold,
            // debiased bracket (the raw -H_j bracket never rejects).
            v.t_bulk = t_bulk_nosplit(p, hist, v.bulk_cut, v.profile.b, n, /*corrected=*/true);
            v.used_nosplit = true;
        }
        if (opt.frobenius_l2) {
            const double thr = ledger.C_eta_frob * partial_norm(p, 0, N, 2.0) / static_cast<double>(n);
            v.thr_bulk = thr;
            v.decide_bulk = std::abs(v.t_bulk) > thr;
        } else {
            v.decide_bulk = v.t_bulk > v.thr_bulk;
        }
    }

    v.t1 = t1_tail(p, hist, v.bulk_cut, n);
    v.decide_t1 = std::abs(v.t1) > v.thr_t1;
    v.collision_found = psi2_collision(hist, v.bulk_cut);
    v.decide_psi2 = v.collision_found;

    if (opt.include_draft_t2 && sample.split_available && sample.k >= 1) {
        v.t2 = t2_tail(p, eff_ll(sample.S), eff_ll(sample.S_prime), v.bulk_cut, sample.k);
        v.thr_t2 = ledger.uc / static_cast<double>(n) * partial_norm(p, v.bulk_cut, N, 2.0);
        v.decide_t2 = std::abs(*v.t2) > *v.thr_t2;
    }

    v.decide_aggregate = v.decide_bulk || v.decide_t1 || v.decide_psi2;
    if (opt.include_draft_t2) v.decide_aggregate = v.decide_aggregate || v.decide_t2;
    if (!v.reject_reason.empty()) v.decide_aggregate = true;
    return v;
}

}  // namespace minitest
