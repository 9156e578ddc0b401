#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "minitest/model.hpp"
#include "minitest/rng.hpp"
#include "minitest/special.hpp"

namespace minitest {

// Poisson variates: cdf-walk inversion below mean 30, PTRS transformed
// rejection (Hormann) above. Alternate implementations can match these in
// distribution, not in stream.
class PoissonDist {
public:
    explicit PoissonDist(double mean) : mean_(mean) {
        if (mean < 0.0 || !std::isfinite(mean)) throw std::invalid_argument("PoissonDist: bad mean");
        if (mean_ > 0.0 && mean_ < kInversionCutoff) p0_ = std::exp(-mean_);
    }

    long long operator()(Rng& rng) const {
        if (mean_ == 0.0) return 0;
        if (mean_ < kInversionCutoff) return inversion(rng);
        return ptrs(rng);
    }

private:
    static constexpr double kInversionCutoff = 30.0;

    long long inversion(Rng& rng) const {
        const double u = rng.next_double();
        double f = p0_;
        double cum = f;
        long long k = 0;
        while (u > cum) {
            ++k;
            f *= mean_ / static_cast<double>(k);
            cum += f;
            if (f <= 0.0 || k > 400) break;  // cumulated all representable mass
        }
        return k;
    }

    long long ptrs(Rng& rng) const {
        const double lam = mean_;
        const double slam = std::sqrt(lam);
        const double loglam = std::log(lam);
        const double b = 0.931 + 2.53 * slam;
        const double a = -0.059 + 0.02483 * b;
        const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        const double v_r = 0.9277 - 3.6224 / (b - 2.0);
        for (;;) {
            double U = rng.next_double() - 0.5;
            double V = rng.next_open();
            double us = 0.5 - std::abs(U);
            double kf = std::floor((2.0 * a / us + b) * U + lam + 0.43);
            if (us >= 0.07 && V <= v_r) return static_cast<long long>(kf);
            if (kf < 0.0 || (us < 0.013 && V > us)) continue;
            double k = kf;
            if (std::log(V * inv_alpha / (a / (us * us) + b)) <=
                k * loglam - lam - std::lgamma(k + 1.0))
                return static_cast<long long>(kf);
        }
    }

    double mean_;
    double p0_ = 0.0;
};

// Binomial variates by exact inversion: cdf walk from zero when n*p is small,
// mode-centered alternating walk otherwise. Both are plain inversions of the
// exact pmf (over a reordered support in the latter case).
class BinomialDist {
public:
    BinomialDist(long long n, double p) : n_(n) {
        if (n < 0 || p < 0.0 || p > 1.0 || !std::isfinite(p))
            throw std::invalid_argument("BinomialDist: bad parameters");
        flip_ = p > 0.5;
        p_ = flip_ ? 1.0 - p : p;
        if (n_ > 0 && p_ > 0.0) {
            odds_ = p_ / (1.0 - p_);
            if (static_cast<double>(n_) * p_ <= kWalkCutoff) {
                from_zero_ = true;
                f0_ = std::exp(static_cast<double>(n_) * std::log1p(-p_));
            } else {
                mode_ = static_cast<long long>(std::floor((static_cast<double>(n_) + 1.0) * p_));
                if (mode_ > n_) mode_ = n_;
                log_fmode_ = log_binomial_coeff(n_, mode_) +
                             static_cast<double>(mode_) * std::log(p_) +
                             static_cast<double>(n_ - mode_) * std::log1p(-p_);
            }
        }
    }

    long long operator()(Rng& rng) const {
        long long v = 0;
        if (n_ > 0 && p_ > 0.0) v = from_zero_ ? walk_from_zero(rng) : walk_from_mode(rng);
        return flip_ ? n_ - v : v;
    }

private:
    static constexpr double kWalkCutoff = 30.0;

    long long walk_from_zero(Rng& rng) const {
        const double u = rng.next_double();
        double f = f0_;
        double cum = f;
        long long k = 0;
        while (u > cum && k < n_) {
            ++k;
            f *= static_cast<double>(n_ - k + 1) / static_cast<double>(k) * odds_;
            cum += f;
            if (f <= 0.0) break;
        }
        return k;
    }

    // Inversion over the support reordered as m, m-1, m+1, m-2, ... Expected
    // number of steps is O(sqrt(n p (1-p))).
    long long walk_from_mode(Rng& rng) const {
        const double u = rng.next_double();
        double f_up = std::exp(log_fmode_);
        double f_down = f_up;
        long long up = mode_, down = mode_;
        double cum = f_up;
        if (u <= cum) return mode_;
        for (;;) {
            if (down > 0) {
                f_down *= static_cast<double>(down) /
                          (static_cast<double>(n_ - down + 1) * odds_);
                --down;
                cum += f_down;
                if (u <= cum) return down;
            }
            if (up < n_) {
                ++up;
                f_up *= static_cast<double>(n_ - up + 1) / static_cast<double>(up) * odds_;
                cum += f_up;
                if (u <= cum) return up;
            }
            if (down == 0 && up == n_) return up;  // rounding: return the top slot
        }
    }

    long long n_;
    double p_ = 0.0;
    bool flip_ = false;
    bool from_zero_ = false;
    double f0_ = 0.0;
    double odds_ = 0.0;
    long long mode_ = 0;
    double log_fmode_ = 0.0;
};

// Categorical sampling via cdf + binary search. Weights are normalized
// internally (adversarial multinomial draws may carry rounding slack).
class CategoricalDist {
public:
    explicit CategoricalDist(std::span<const double> weights) {
        cdf_.resize(weights.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < weights.size(); ++i) {
            if (weights[i] < 0.0 || !std::isfinite(weights[i]))
                throw std::invalid_argument("CategoricalDist: bad weight");
            acc += weights[i];
            cdf_[i] = acc;
        }
        if (acc <= 0.0) throw std::invalid_argument("CategoricalDist: zero total mass");
        total_ = acc;
    }

    std::size_t operator()(Rng& rng) const {
        const double u = rng.next_double() * total_;
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        if (it == cdf_.end()) --it;
        return static_cast<std::size_t>(it - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
    double total_ = 0.0;
};

// Sufficient-statistics sampler: n iid observations from q reduced directly
// to (S, S', histogram) in the given coordinate order. Coordinatewise
// distributions match the row-level definition exactly (Bin(k, q_j) splits
// for binomial, Poi(k q_j) for Poisson, multinomial category counts).
inline SampleSet sample_null_or_alt(ModelKind model, std::span<const double> q, long long n,
                                    Rng& rng) {
    if (n < 0) throw std::invalid_argument("sample_null_or_alt: n must be >= 0");
    const std::size_t N = q.size();
    SampleSet out;
    out.n = n;
    out.k = n / 2;
    out.histogram.assign(N, 0);
    out.S.assign(N, 0);
    out.S_prime.assign(N, 0);
    const long long leftover = n - 2 * out.k;

    switch (model) {
        case ModelKind::Binomial: {
            for (std::size_t j = 0; j < N; ++j) {
                if (q[j] < 0.0 || q[j] > 1.0)
                    throw std::invalid_argument("sample: binomial q entry outside [0,1]");
                BinomialDist d(out.k, q[j]);
                out.S[j] = d(rng);
                out.S_prime[j] = d(rng);
                long long extra = 0;
                if (leftover > 0) extra = (rng.next_double() < q[j]) ? 1 : 0;
                out.histogram[j] = out.S[j] + out.S_prime[j] + extra;
            }
            break;
        }
        case ModelKind::Poisson: {
            for (std::size_t j = 0; j < N; ++j) {
                if (q[j] < 0.0) throw std::invalid_argument("sample: poisson q entry negative");
                PoissonDist half(static_cast<double>(out.k) * q[j]);
                out.S[j] = half(rng);
                out.S_prime[j] = half(rng);
                long long extra = 0;
                if (leftover > 0) extra = PoissonDist(q[j])(rng);
                out.histogram[j] = out.S[j] + out.S_prime[j] + extra;
            }
            break;
        }
        case ModelKind::Multinomial: {
            CategoricalDist cat(q);
            for (long long i = 0; i < n; ++i) {
                const std::size_t c = cat(rng);
                out.histogram[c] += 1;
                if (i < out.k) out.S[c] += 1;
                else if (i < 2 * out.k) out.S_prime[c] += 1;
            }
            break;
        }
    }
    return out;
}

// Row-level sampler used by the CLI: materializes the n observations
// themselves (original coordinate order is the caller's concern).
inline std::vector<std::vector<long long>> sample_rows(ModelKind model, std::span<const double> q,
                                                       long long n, Rng& rng) {
    std::vector<std::vector<long long>> rows;
    rows.reserve(static_cast<std::size_t>(n));
    const std::size_t N = q.size();
    if (model == ModelKind::Multinomial) {
        CategoricalDist cat(q);
        for (long long i = 0; i < n; ++i) rows.push_back({static_cast<long long>(cat(rng))});
        return rows;
    }
    std::vector<PoissonDist> pois;
    if (model == ModelKind::Poisson)
        for (std::size_t j = 0; j < N; ++j) pois.emplace_back(q[j]);
    for (long long i = 0; i < n; ++i) {
        std::vector<long long> row(N);
        for (std::size_t j = 0; j < N; ++j) {
            if (model == ModelKind::Binomial)
                row[j] = rng.next_double() < q[j] ? 1 : 0;
            else
                row[j] = pois[j](rng);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// Poissonization trick, multinomial: draw n~ ~ Poi(n), then n~ multinomial
// draws; the histogram has independent Poi(n q_j) coordinates.
inline std::vector<long long> poissonize_multinomial(std::span<const double> q, long long n,
                                                     Rng& rng) {
    std::vector<long long> hist(q.size(), 0);
    if (n == 0) return hist;
    const long long n_tilde = PoissonDist(static_cast<double>(n))(rng);
    if (n_tilde == 0) return hist;
    CategoricalDist cat(q);
    for (long long i = 0; i < n_tilde; ++i) hist[cat(rng)] += 1;
    return hist;
}

// Poissonization trick, binomial: sum of n~ ~ Poi(n) iid Bernoulli vectors.
// Conditional on n~ the coordinate sums are Bin(n~, p_j) independent, which
// is drawn directly; the marginal is Poi(n p_j).
inline std::vector<long long> poissonize_binomial(std::span<const double> p, long long n,
                                                  Rng& rng) {
    std::vector<long long> counts(p.size(), 0);
    if (n == 0) return counts;
    const long long n_tilde = PoissonDist(static_cast<double>(n))(rng);
    for (std::size_t j = 0; j < p.size(); ++j) {
        if (p[j] < 0.0 || p[j] > 1.0)
            throw std::invalid_argument("poissonize_binomial: p entry outside [0,1]");
        counts[j] = BinomialDist(n_tilde, p[j])(rng);
    }
    return counts;
}

// Truncation budget for the Poisson -> Bernoulli reduction: the largest
// integer m with P(Poi(n) < m) <= eta/4, returned with c = m/n, solved from
// the exact Poisson cdf rather than fixed a priori.
struct TruncationBudget {
    long long m = 0;
    double c = 0;
};

inline TruncationBudget solve_truncation_c(long long n, double eta) {
    if (n <= 0) throw std::invalid_argument("solve_truncation_c: n must be positive");
    const double budget = eta / 4.0;
    const double lam = static_cast<double>(n);
    long long lo = 0;  // m = 0 always qualifies: P(n~ < 0) = 0
    long long hi = n + static_cast<long long>(12.0 * std::sqrt(lam)) + 12;
    while (lo < hi) {
        long long mid = lo + (hi - lo + 1) / 2;
        if (poisson_cdf(lam, mid - 1) <= budget) lo = mid; else hi = mid - 1;
    }
    return {lo, static_cast<double>(lo) / lam};
}

// Subsampling budget for the Binomial -> Poisson reduction: the largest
// integer m with P(Poi(m) > n) <= eta/4, returned with c_bar = m/n.
inline TruncationBudget solve_subsample_cbar(long long n, double eta) {
    if (n <= 0) throw std::invalid_argument("solve_subsample_cbar: n must be positive");
    const double budget = eta / 4.0;
    long long lo = 0, hi = n;
    while (lo < hi) {
        long long mid = lo + (hi - lo + 1) / 2;
        const double exceed = 1.0 - poisson_cdf(static_cast<double>(mid), n);
        if (exceed <= budget) lo = mid; else hi = mid - 1;
    }
    return {lo, static_cast<double>(lo) / static_cast<double>(n)};
}

enum class ReductionStatus { Ok, TruncationFailed, CountExceedsRows, SubsampleFailed };

// Poisson counts -> truncated Bernoulli sample (proof of the model
// equivalence): distribute each coordinate's count uniformly over
// n~ ~ Poi(n) slots, keep the first floor(c n) rows. Reports the event
// {n~ < c n} and the event of a count exceeding n~ (not representable as
// 0/1 rows).
struct BernoulliStream {
    ReductionStatus status = ReductionStatus::Ok;
    long long n_tilde = 0;
    std::size_t bad_coordinate = 0;
    std::vector<std::vector<long long>> rows;  // floor(c n) rows of 0/1
};

inline BernoulliStream poisson_to_bernoulli_stream(std::span<const long long> counts,
                                                   long long n, double c, Rng& rng) {
    BernoulliStream out;
    const long long m = static_cast<long long>(std::floor(c * static_cast<double>(n)));
    out.n_tilde = PoissonDist(static_cast<double>(n))(rng);
    if (out.n_tilde < m) {
        out.status = ReductionStatus::TruncationFailed;
        return out;
    }
    const std::size_t N = counts.size();
    out.rows.assign(static_cast<std::size_t>(m), std::vector<long long>(N, 0));
    for (std::size_t j = 0; j < N; ++j) {
        const long long y = counts[j];
        if (y < 0) throw std::invalid_argument("poisson_to_bernoulli: negative count");
        if (y > out.n_tilde) {
            out.status = ReductionStatus::CountExceedsRows;
            out.bad_coordinate = j;
            out.rows.clear();
            return out;
        }
        // Floyd's sampling of y distinct slots among n_tilde.
        std::vector<long long> chosen;
        chosen.reserve(static_cast<std::size_t>(y));
        for (long long i = out.n_tilde - y; i < out.n_tilde; ++i) {
            long long t = static_cast<long long>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
            if (std::find(chosen.begin(), chosen.end(), t) != chosen.end())
                chosen.push_back(i);
            else
                chosen.push_back(t);
        }
        for (long long slot : chosen)
            if (slot < m) out.rows[static_cast<std::size_t>(slot)][j] = 1;
    }
    return out;
}

// Bernoulli rows -> Poisson-distributed counts: sum the first
// n~ ~ Poi(floor(c_bar n)) rows when n~ <= n; coordinate j is then
// Poi(floor(c_bar n) q_j).
struct PoissonSubsample {
    ReductionStatus status = ReductionStatus::Ok;
    long long n_tilde = 0;
    std::vector<long long> counts;
};

inline PoissonSubsample binomial_to_poisson_subsample(
    const std::vector<std::vector<long long>>& rows, long long n, double c_bar, Rng& rng) {
    if (static_cast<long long>(rows.size()) < n)
        throw std::invalid_argument("binomial_to_poisson_subsample: fewer rows than n");
    PoissonSubsample out;
    const long long m = static_cast<long long>(std::floor(c_bar * static_cast<double>(n)));
    out.n_tilde = PoissonDist(static_cast<double>(m))(rng);
    if (out.n_tilde > n) {
        out.status = ReductionStatus::SubsampleFailed;
        return out;
    }
    const std::size_t N = rows.empty() ? 0 : rows[0].size();
    out.counts.assign(N, 0);
    for (long long i = 0; i < out.n_tilde; ++i)
        for (std::size_t j = 0; j < N; ++j) out.counts[j] += rows[static_cast<std::size_t>(i)][j];
    return out;
}

}  // namespace minitest
