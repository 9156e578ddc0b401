#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>

namespace minitest {

// Neumaier-compensated accumulator. Chi-square ratios and enumeration sums
// amplify cancellation, so all oracle summations go through this.
class CompensatedSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

namespace detail {

// Regularized lower incomplete gamma P(a, x), series expansion (x < a + 1).
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 10000; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::abs(del) < std::abs(sum) * 1e-16)
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw std::runtime_error("gamma_p_series: no convergence");
}

// Regularized upper incomplete gamma Q(a, x), Lentz continued fraction (x >= a + 1).
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < 10000; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < 1e-16)
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw std::runtime_error("gamma_q_cf: no convergence");
}

}  // namespace detail

// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
inline double gamma_q(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

// P(Poi(lambda) <= k), via Q(k + 1, lambda). Stable for large lambda.
inline double poisson_cdf(double lambda, long long k) {
    if (k < 0) return 0.0;
    if (lambda == 0.0) return 1.0;
    return gamma_q(static_cast<double>(k) + 1.0, lambda);
}

inline double log_binomial_coeff(long long n, long long k) {
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace minitest
