#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "minitest/model.hpp"

namespace minitest {

// r = 2t/(4-t), b = (4-2t)/(4-t). Identities r/2 + b = 1 and 2b = 2 - r hold.
inline std::pair<double, double> exponents(double t) {
    if (!(t >= 1.0 && t <= 2.0)) throw std::invalid_argument("exponents: t must lie in [1,2]");
    return {2.0 * t / (4.0 - t), (4.0 - 2.0 * t) / (4.0 - t)};
}

// (sum_{lo < i <= hi} p_i^s)^{1/s} with 1-based cut indices; empty range -> 0.
inline double partial_norm(std::span<const double> p, std::size_t lo, std::size_t hi, double s) {
    if (!(s > 0)) throw std::invalid_argument("partial_norm: exponent must be positive");
    if (hi > p.size() || lo > hi) throw std::invalid_argument("partial_norm: bad range");
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += std::pow(p[i], s);
    return std::pow(acc, 1.0 / s);
}

inline double partial_power_sum(std::span<const double> p, std::size_t lo, std::size_t hi,
                                double s) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) acc += std::pow(p[i], s);
    return acc;
}

// Smallest J in [0,N] with sum_{i>J} p_i^2 <= c_I / n^2. Right-to-left suffix
// sums, O(N).
inline std::size_t index_I(std::span<const double> p_sorted, double n, double c_I) {
    if (!(n >= 1)) throw std::invalid_argument("index_I: n must be >= 1");
    const std::size_t N = p_sorted.size();
    const double budget = c_I / (n * n);
    // suffix[J] = sum_{i > J} p_i^2 for J = N..0; return the smallest J under budget.
    double suffix = 0.0;
    std::size_t best = N;
    if (suffix <= budget) best = N;
    for (std::size_t j = N; j-- > 0;) {
        suffix += p_sorted[j] * p_sorted[j];
        if (suffix <= budget) best = j;
    }
    return best;
}

// Largest a <= I with p_a^{b/2} >= c_A / (sqrt(n) (sum_{i<=I} p_i^r)^{1/4});
// 0 when no index qualifies (empty bulk). Coordinates with p_a = 0 never
// qualify, for any t.
inline std::size_t index_A(std::span<const double> p_sorted, std::size_t I, double n, double t,
                           double c_A4) {
    const auto [r, b] = exponents(t);
    const double sum_r = partial_power_sum(p_sorted, 0, I, r);
    if (sum_r <= 0.0) return 0;
    const double threshold = std::pow(c_A4, 0.25) / (std::sqrt(n) * std::pow(sum_r, 0.25));
    for (std::size_t a = I; a-- > 0;) {
        const double pa = p_sorted[a];
        if (pa <= 0.0) continue;
        const double lhs = (b > 0.0) ? std::pow(pa, b / 2.0) : 1.0;
        if (lhs >= threshold) return a + 1;
    }
    return 0;
}

// Smallest 1-based U > I with n^2 p_U ||p_{>=U}||_1 <= c_u; none otherwise.
inline std::optional<std::size_t> index_U(std::span<const double> p_sorted, std::size_t I,
                                          double n, double c_u) {
    const std::size_t N = p_sorted.size();
    if (I >= N) return std::nullopt;
    // suffix masses ||p_{>=u}||_1, scanned left to right.
    std::vector<double> suffix(N + 1, 0.0);
    for (std::size_t j = N; j-- > 0;) suffix[j] = suffix[j + 1] + p_sorted[j];
    for (std::size_t u = I + 1; u <= N; ++u) {
        if (n * n * p_sorted[u - 1] * suffix[u - 1] <= c_u) return u;
    }
    return std::nullopt;
}

inline IndexProfile make_profile(std::span<const double> p_sorted, double n, double t,
                                 const ConstantLedger& ledger) {
    IndexProfile prof;
    std::tie(prof.r, prof.b) = exponents(t);
    prof.I = index_I(p_sorted, n, ledger.c_I);
    prof.A = index_A(p_sorted, prof.I, n, t, ledger.c_A4);
    prof.U = index_U(p_sorted, prof.I, n, ledger.c_u);
    return prof;
}

// Minimax separation radius breakdown:
//   bulk = sqrt(||p_{<=I}||_r / n)
//   tail = ||p_{>I}||_1^{(2-t)/t} / n^{(2t-2)/t}   (t=1: the mass itself)
//   inv  = 1/n
// At t = 2 the tail exponent form degenerates to 1/n; it is folded into the
// inv_n term rather than reported as a spurious tail contribution.
// Multinomial rates are computed on p with its largest entry removed.
// a_form_tail switches the tail mass from ||p_{>I}||_1 to ||p_{>A}||_1.
inline RateBreakdown minimax_rate(const NullSpec& spec, double n, bool a_form_tail = false) {
    const auto canon = canonicalize(spec);
    const auto p = effective_p(canon, spec.model);
    const auto ledger = spec.ledger();
    const auto prof = make_profile(p, n, spec.t, ledger);
    const double t = spec.t;

    RateBreakdown out;
    const double norm_r = partial_norm(p, 0, prof.I, prof.r);
    out.bulk_term = std::sqrt(norm_r / n);
    const std::size_t cut = a_form_tail ? prof.A : prof.I;
    const double tail_mass = partial_power_sum(p, cut, p.size(), 1.0);
    if (t == 2.0) {
        out.tail_term = 0.0;
    } else {
        out.tail_term = std::pow(tail_mass, (2.0 - t) / t) / std::pow(n, (2.0 * t - 2.0) / t);
    }
    out.inv_n_term = 1.0 / n;
    out.total = out.bulk_term + out.tail_term + out.inv_n_term;
    return out;
}

inline std::vector<double> flatten_upper_triangle(const std::vector<std::vector<double>>& P) {
    const std::size_t m = P.size();
    for (const auto& row : P)
        if (row.size() != m) throw std::invalid_argument("flatten: matrix must be square");
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j)
            if (std::abs(P[i][j] - P[j][i]) > 1e-12)
                throw std::invalid_argument("flatten: matrix must be symmetric");
    std::vector<double> out;
    out.reserve(m * (m - 1) / 2);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i + 1; j < m; ++j) out.push_back(P[i][j]);
    return out;
}

// epsilon* ~ sqrt(||P||_2 / n) + 1/n for a probability adjacency matrix.
// ||P||_2 here is the l2 norm of the strict upper triangle; the full-matrix
// Frobenius norm of the zero-diagonal symmetric P is sqrt(2) times larger.
inline double frobenius_rate(const std::vector<std::vector<double>>& P, double n) {
    const auto flat = flatten_upper_triangle(P);
    for (double v : flat)
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("frobenius_rate: entries must lie in [0,1]");
    double norm2 = 0.0;
    for (double v : flat) norm2 += v * v;
    return std::sqrt(std::sqrt(norm2) / n) + 1.0 / n;
}

struct FixedPointBounds {
    double eps_plus = 0;
    double eps_minus = 0;
    bool bounds_match = false;
};

namespace detail {

// ||p^{-max}_{-alpha}||_{2/3}: J = smallest index with sum_{i>J} p_i <= alpha,
// then the 2/3 quasi-norm of (p_2, ..., p_J).
inline double truncated_nomax_norm23(std::span<const double> p_sorted, double alpha) {
    const std::size_t N = p_sorted.size();
    std::vector<double> suffix(N + 1, 0.0);
    for (std::size_t j = N; j-- > 0;) suffix[j] = suffix[j + 1] + p_sorted[j];
    std::size_t J = N;
    for (std::size_t j = 0; j <= N; ++j) {
        if (suffix[j] <= alpha) { J = j; break; }
    }
    if (J <= 1) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 1; i < J; ++i) acc += std::pow(p_sorted[i], 2.0 / 3.0);
    return std::pow(acc, 1.5);
}

}  // namespace detail

// Fixed-point comparison bounds from the prior literature:
//   eps_plus  = largest  eps with eps <= C sqrt(||p^{-max}_{-eps/16}||_{2/3}/n) + C/n
//   eps_minus = smallest eps with eps >= c sqrt(||p^{-max}_{-eps}||_{2/3}/n) + c/n
// Both sides are monotone, solved by bisection to 1e-10 relative.
inline FixedPointBounds fixed_point_bounds(std::span<const double> p_sorted, double n, double C,
                                           double c) {
    if (!(C >= c && c > 0)) throw std::invalid_argument("fixed_point_bounds: need C >= c > 0");
    if (!(n >= 1)) throw std::invalid_argument("fixed_point_bounds: n must be >= 1");

    auto g_plus = [&](double eps) {
        return C * std::sqrt(detail::truncated_nomax_norm23(p_sorted, eps / 16.0) / n) + C / n;
    };
    auto g_minus = [&](double eps) {
        return c * std::sqrt(detail::truncated_nomax_norm23(p_sorted, eps) / n) + c / n;
    };

    // eps_plus: predicate eps <= g(eps) holds below the crossing. g is
    // nonincreasing, so g(0) is an upper bracket.
    double eps_plus;
    double lo = 0.0, hi = g_plus(0.0);
    if (!(hi > 0.0)) throw std::runtime_error("fixed_point_bounds: failed to bracket eps_plus");
    if (g_plus(hi) >= hi) {
        eps_plus = hi;  // the identity meets g at g's own maximum
    } else {
        for (int it = 0; it < 200 && (hi - lo) > 1e-10 * std::max(1.0, hi); ++it) {
            double mid = 0.5 * (lo + hi);
            if (mid <= g_plus(mid)) lo = mid; else hi = mid;
        }
        eps_plus = (g_plus(lo) == g_plus(hi)) ? g_plus(lo) : 0.5 * (lo + hi);
    }

    // eps_minus: predicate eps >= g(eps) holds above the crossing.
    double lo2 = 0.0, hi2 = g_minus(0.0);
    if (!(hi2 > 0.0)) throw std::runtime_error("fixed_point_bounds: failed to bracket eps_minus");
    for (int it = 0; it < 200 && (hi2 - lo2) > 1e-10 * std::max(1.0, hi2); ++it) {
        double mid = 0.5 * (lo2 + hi2);
        if (mid >= g_minus(mid)) hi2 = mid; else lo2 = mid;
    }
    double eps_minus = (g_minus(lo2) == g_minus(hi2)) ? g_minus(hi2) : 0.5 * (lo2 + hi2);

    FixedPointBounds out;
    out.eps_plus = eps_plus;
    out.eps_minus = eps_minus;
    out.bounds_match = eps_plus <= 16.0 * (C / c) * eps_minus * (1.0 + 1e-9);
    return out;
}

}  // namespace minitest
