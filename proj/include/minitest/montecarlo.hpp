#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "minitest/adversary.hpp"
#include "minitest/model.hpp"
#include "minitest/sampling.hpp"
#include "minitest/statistics.hpp"

namespace minitest {

// Empirical risk estimate with a 95% Wilson interval.
struct RiskReport {
    long long trials = 0;
    long long rejections = 0;
    double rate = 0;
    double ci_low = 0;
    double ci_high = 0;
    std::uint64_t seed = 0;
    double wall_seconds = 0;
    double mean_separation = 0;  // type-II runs: average realized l_t separation
};

inline std::pair<double, double> wilson_interval(long long successes, long long trials) {
    if (trials <= 0) return {0.0, 1.0};
    const double z = 1.959963984540054;
    const double n = static_cast<double>(trials);
    const double phat = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (phat + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(phat * (1.0 - phat) / n + z2 / (4.0 * n * n)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("MINITEST_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// Runs trials deterministically: trial i draws from Rng::for_trial(seed, i)
// and writes its outcome to slot i, so the aggregate is independent of the
// worker count and of scheduling.
template <typename TrialFn>
std::vector<double> run_trials(long long trials, int threads, std::uint64_t seed, TrialFn&& fn) {
    std::vector<double> out(static_cast<std::size_t>(trials), 0.0);
    const int nthreads = std::max(1, threads);
    if (nthreads == 1) {
        for (long long i = 0; i < trials; ++i) {
            Rng rng = Rng::for_trial(seed, static_cast<std::uint64_t>(i));
            out[static_cast<std::size_t>(i)] = fn(i, rng);
        }
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(nthreads));
    for (int w = 0; w < nthreads; ++w) {
        pool.emplace_back([&, w]() {
            for (long long i = w; i < trials; i += nthreads) {
                Rng rng = Rng::for_trial(seed, static_cast<std::uint64_t>(i));
                out[static_cast<std::size_t>(i)] = fn(i, rng);
            }
        });
    }
    for (auto& th : pool) th.join();
    return out;
}

// Empirical type-I error: fraction of rejections on data sampled from p.
inline RiskReport estimate_type1(const NullSpec& spec, long long n, long long trials,
                                 std::uint64_t seed, int threads = 0,
                                 const TestOptions& opt = {}) {
    spec.validate();
    const auto canon = canonicalize(spec);
    const auto t0 = std::chrono::steady_clock::now();
    const int nthreads = resolve_threads(threads);

    auto results = run_trials(trials, nthreads, seed, [&](long long, Rng& rng) {
        const SampleSet s = sample_null_or_alt(spec.model, canon.p_sorted, n, rng);
        return run_test(spec, canon, s, opt).decide_aggregate ? 1.0 : 0.0;
    });

    RiskReport rep;
    rep.trials = trials;
    for (double v : results) rep.rejections += v > 0.5 ? 1 : 0;
    rep.rate = trials > 0 ? static_cast<double>(rep.rejections) / static_cast<double>(trials) : 0.0;
    std::tie(rep.ci_low, rep.ci_high) = wilson_interval(rep.rejections, trials);
    rep.seed = seed;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

// Empirical type-II error against a prior: per trial, draw q from the
// adversary at the given scale, sample data from q, record acceptance.
// This is prior-averaged type-II, not the worst case over q.
inline RiskReport estimate_type2(const NullSpec& spec, long long n, PriorKind kind, double scale,
                                 long long trials, std::uint64_t seed, int threads = 0,
                                 const TestOptions& opt = {}) {
    spec.validate();
    const auto canon = canonicalize(spec);
    const auto prof =
        make_profile(effective_p(canon, spec.model), static_cast<double>(n), spec.t, spec.ledger());
    const auto t0 = std::chrono::steady_clock::now();
    const int nthreads = resolve_threads(threads);

    std::vector<double> separations(static_cast<std::size_t>(trials), 0.0);
    auto results = run_trials(trials, nthreads, seed, [&](long long i, Rng& rng) {
        const AdversarialDraw draw = adversarial_draw(spec, canon, prof, static_cast<double>(n),
                                                      kind, scale, rng);
        separations[static_cast<std::size_t>(i)] = draw.realized_separation;
        const SampleSet s = sample_null_or_alt(spec.model, draw.q, n, rng);
        return run_test(spec, canon, s, opt).decide_aggregate ? 1.0 : 0.0;
    });

    // rejections counts test rejections; rate is the acceptance rate, i.e. the
    // prior-averaged empirical type-II error.
    RiskReport rep;
    rep.trials = trials;
    for (double v : results) rep.rejections += v > 0.5 ? 1 : 0;
    const long long acceptances = trials - rep.rejections;
    rep.rate = trials > 0 ? static_cast<double>(acceptances) / static_cast<double>(trials) : 0.0;
    std::tie(rep.ci_low, rep.ci_high) = wilson_interval(acceptances, trials);
    rep.seed = seed;
    double sep = 0.0;
    for (double v : separations) sep += v;
    rep.mean_separation = trials > 0 ? sep / static_cast<double>(trials) : 0.0;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
}

struct RadiusResult {
    double scale = 0;
    double separation = 0;   // mean realized l_t separation at that scale
    double type2 = 1.0;      // achieved empirical type-II
    bool target_met = false;
};

// Empirical critical radius: bisection over the prior scale for the smallest
// scale whose empirical type-II is at most power_target.
inline RadiusResult empirical_radius(const NullSpec& spec, long long n, PriorKind kind,
                                     double power_target, long long trials, std::uint64_t seed,
                                     int threads = 0, double s_max = 64.0, int iterations = 20) {
    double lo = 0.0, hi = s_max;
    auto type2_at = [&](double s, int iter) {
        return estimate_type2(spec, n, kind, s, trials, seed + static_cast<std::uint64_t>(iter),
                              threads);
    };
    RiskReport top = type2_at(hi, 0);
    RadiusResult res;
    if (top.rate > power_target) {
        res.scale = hi;
        res.separation = top.mean_separation;
        res.type2 = top.rate;
        res.target_met = false;
        return res;
    }
    RiskReport at_hi = top;
    for (int it = 1; it <= iterations; ++it) {
        const double mid = 0.5 * (lo + hi);
        const RiskReport rep = type2_at(mid, it);
        if (rep.rate <= power_target) {
            hi = mid;
            at_hi = rep;
        } else {
            lo = mid;
        }
    }
    res.scale = hi;
    res.separation = at_hi.mean_separation;
    res.type2 = at_hi.rate;
    res.target_met = true;
    return res;
}

}  // namespace minitest
