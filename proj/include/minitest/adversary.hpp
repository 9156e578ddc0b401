#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "minitest/model.hpp"
#include "minitest/rates.hpp"
#include "minitest/rng.hpp"
#include "minitest/special.hpp"

namespace minitest {

// gamma_i = c_gamma p_i^{2/(4-t)} / (sqrt(n) (sum_{i<=I} p_i^r)^{1/4}), i <= A.
inline std::vector<double> bulk_prior_gamma(std::span<const double> p, const IndexProfile& prof,
                                            double n, double c_gamma, double t) {
    if (prof.A == 0) throw std::domain_error("bulk prior: empty bulk (A = 0)");
    const double sum_r = partial_power_sum(p, 0, prof.I, prof.r);
    const double denom = std::sqrt(n) * std::pow(sum_r, 0.25);
    std::vector<double> gamma(prof.A);
    for (std::size_t i = 0; i < prof.A; ++i)
        gamma[i] = c_gamma * std::pow(p[i], 2.0 / (4.0 - t)) / denom;
    return gamma;
}

// Feasibility condition for a Rademacher perturbation to be statistically
// indistinguishable from the null: sum_i gamma_i^4 / p_i^2 <= budget / n^2,
// with gamma_i = 0 forced wherever p_i = 0.
inline bool feasibility_check(std::span<const double> p, std::span<const double> gamma, double n,
                              double budget) {
    if (p.size() != gamma.size()) throw std::invalid_argument("feasibility_check: size mismatch");
    CompensatedSum acc;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (gamma[i] < 0.0) return false;
        if (p[i] == 0.0) {
            if (gamma[i] != 0.0) return false;
            continue;
        }
        const double ratio = gamma[i] * gamma[i] / p[i];
        acc.add(ratio * ratio);
    }
    return acc.value() <= budget / (n * n) * (1.0 + 1e-12);
}

// Largest gamma in the feasible box, by Holder saturation: gamma_i
// proportional to p_i^{2/(4-t)}, scaled to meet the budget with equality,
// then clamped into [0, min(p_i, 1-p_i)] and the budget rechecked.
inline std::vector<double> holder_saturating_gamma(std::span<const double> p_bulk, double n,
                                                   double budget, double t) {
    const auto [r, b] = exponents(t);
    const double sum_r = partial_power_sum(p_bulk, 0, p_bulk.size(), r);
    std::vector<double> gamma(p_bulk.size(), 0.0);
    if (sum_r <= 0.0) return gamma;
    const double scale = std::pow(budget / (n * n), 0.25) / std::pow(sum_r, 0.25);
    for (std::size_t i = 0; i < p_bulk.size(); ++i) {
        if (p_bulk[i] <= 0.0) continue;
        const double g = scale * std::pow(p_bulk[i], 2.0 / (4.0 - t));
        gamma[i] = std::min(g, std::min(p_bulk[i], 1.0 - p_bulk[i]));
    }
    return gamma;
}

// Exact chi-square divergence between the Rademacher mixture and the null,
//   prod_i [ (1+x_i)^n + (1-x_i)^n ] / 2 - 1,   x_i = gamma_i^2 / (p_i (1-p_i)),
// evaluated in log space.
inline double chi2_divergence_closed_form(std::span<const double> p, std::span<const double> gamma,
                                          double n) {
    if (p.size() != gamma.size())
        throw std::invalid_argument("chi2_divergence_closed_form: size mismatch");
    CompensatedSum log_prod;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (gamma[i] == 0.0) continue;
        if (gamma[i] < 0.0 || p[i] <= 0.0 || p[i] >= 1.0)
            throw std::invalid_argument("chi2_divergence_closed_form: needs p_i in (0,1) where gamma_i > 0");
        const double x = gamma[i] * gamma[i] / (p[i] * (1.0 - p[i]));
        // bracket = ((1+x)^n + (1-x)^n) / 2, sign-aware for x > 1.
        const double up = std::exp(n * std::log1p(x));
        double down = 0.0;
        if (x < 1.0) down = std::exp(n * std::log1p(-x));
        else if (x > 1.0) down = (std::fmod(n, 2.0) == 0.0 ? 1.0 : -1.0) * std::exp(n * std::log(x - 1.0));
        log_prod.add(std::log(0.5 * (up + down)));
    }
    return std::expm1(log_prod.value());
}

namespace detail {

inline double model_upper_bound(ModelKind model) {
    return model == ModelKind::Binomial ? 1.0 : std::numeric_limits<double>::infinity();
}

// Finalizes a perturbed canonical vector into a draw: multinomial vectors are
// renormalized onto the simplex (the largest coordinate absorbs its share).
inline AdversarialDraw finalize_draw(const NullSpec& spec, const CanonicalNull& canon,
                                     std::vector<double> q, PriorKind kind) {
    if (spec.model == ModelKind::Multinomial) {
        double total = 0.0;
        for (double v : q) total += v;
        if (total <= 0.0) throw std::domain_error("adversary: degenerate multinomial draw");
        for (double& v : q) v /= total;
    }
    AdversarialDraw d;
    d.prior_kind = kind;
    d.realized_separation = lt_distance(q, canon.p_sorted, spec.t);
    d.q = std::move(q);
    return d;
}

}  // namespace detail

// Rademacher bulk prior: q_i = p_i + delta_i * scale * gamma_i on the bulk,
// clamped into the model's parameter range. scale = 1 is the calibrated
// prior (no clamping can occur then); scale = 0 degenerates to q = p.
// forced_sign pins every delta_i (test hook).
inline AdversarialDraw bulk_prior_draw(const NullSpec& spec, const CanonicalNull& canon,
                                       const IndexProfile& prof, double n, Rng& rng,
                                       double scale = 1.0,
                                       std::optional<int> forced_sign = std::nullopt) {
    const auto ledger = spec.ledger();
    const std::size_t off = effective_offset(spec.model);
    const auto p = effective_p(canon, spec.model);
    const auto gamma = bulk_prior_gamma(p, prof, n, ledger.c_gamma, spec.t);
    const double upper = detail::model_upper_bound(spec.model);

    std::vector<double> q(canon.p_sorted.begin(), canon.p_sorted.end());
    for (std::size_t i = 0; i < prof.A; ++i) {
        const int sign = forced_sign ? *forced_sign : (rng.next_u64() & 1 ? 1 : -1);
        double v = p[i] + sign * scale * gamma[i];
        v = std::min(std::max(v, 0.0), upper);
        if (scale == 1.0 && (v != p[i] + sign * gamma[i]))
            throw std::logic_error("bulk prior: perturbation left the parameter range at scale 1");
        q[off + i] = v;
    }
    return detail::finalize_draw(spec, canon, std::move(q), PriorKind::BulkRademacher);
}

// Level and Bernoulli parameters of the sparse tail prior.
struct TailPriorShape {
    double pi_bar = 0;
    std::vector<double> pi;  // Ber parameters for coordinates U, U+1, ..., N
};

inline TailPriorShape tail_prior_shape(std::span<const double> p, const IndexProfile& prof,
                                       double n, double c_u) {
    if (!prof.U) throw std::domain_error("tail prior: no valid index U");
    const std::size_t u0 = *prof.U - 1;
    const double mass = partial_power_sum(p, u0, p.size(), 1.0);
    if (mass <= 0.0) throw std::domain_error("tail prior: zero tail mass");
    TailPriorShape shape;
    shape.pi_bar = c_u / (n * n * mass);
    shape.pi.resize(p.size() - u0);
    for (std::size_t i = u0; i < p.size(); ++i) {
        const double pi = p[i] / shape.pi_bar;
        if (pi > 1.0 + 1e-9)
            throw std::logic_error("tail prior: pi_i > 1 violates the index-U contract");
        shape.pi[i - u0] = std::min(pi, 1.0);
    }
    return shape;
}

// Sparse tail prior: q_i = p_i below U; q_i = p_i + scale * (b_i pi_bar - p_i)
// at and beyond U, with b_i ~ Ber(pi_i). scale = 1 gives q_i = b_i pi_bar,
// whose first moment matches the null; scale = 0 gives q = p.
inline AdversarialDraw tail_prior_draw(const NullSpec& spec, const CanonicalNull& canon,
                                       const IndexProfile& prof, double n, Rng& rng,
                                       double scale = 1.0) {
    const auto ledger = spec.ledger();
    const std::size_t off = effective_offset(spec.model);
    const auto p = effective_p(canon, spec.model);
    const auto shape = tail_prior_shape(p, prof, n, ledger.c_u);
    const double upper = detail::model_upper_bound(spec.model);
    const std::size_t u0 = *prof.U - 1;

    std::vector<double> q(canon.p_sorted.begin(), canon.p_sorted.end());
    for (std::size_t i = u0; i < p.size(); ++i) {
        const double b = (rng.next_double() < shape.pi[i - u0]) ? 1.0 : 0.0;
        double v = p[i] + scale * (b * shape.pi_bar - p[i]);
        q[off + i] = std::min(std::max(v, 0.0), upper);
    }
    return detail::finalize_draw(spec, canon, std::move(q), PriorKind::TailSparse);
}

// Single-coordinate shift: q_1 = p_1 + scale * (1-eta)/n on the first
// effective coordinate.
inline AdversarialDraw single_coordinate_draw(const NullSpec& spec, const CanonicalNull& canon,
                                              double n, double scale = 1.0) {
    const std::size_t off = effective_offset(spec.model);
    if (canon.size() <= off) throw std::domain_error("single coordinate prior: empty vector");
    std::vector<double> q(canon.p_sorted.begin(), canon.p_sorted.end());
    const double shift = scale * (1.0 - spec.eta) / n;
    if (spec.model == ModelKind::Binomial && q[off] + shift > 1.0)
        throw std::domain_error("single coordinate prior: p_1 + (1-eta)/n exceeds 1");
    q[off] += shift;
    return detail::finalize_draw(spec, canon, std::move(q), PriorKind::SingleCoordinate);
}

// Model-aware dispatch used by the Monte Carlo engine and the CLI.
inline AdversarialDraw adversarial_draw(const NullSpec& spec, const CanonicalNull& canon,
                                        const IndexProfile& prof, double n, PriorKind kind,
                                        double scale, Rng& rng) {
    switch (kind) {
        case PriorKind::BulkRademacher: return bulk_prior_draw(spec, canon, prof, n, rng, scale);
        case PriorKind::TailSparse: return tail_prior_draw(spec, canon, prof, n, rng, scale);
        case PriorKind::SingleCoordinate: return single_coordinate_draw(spec, canon, n, scale);
    }
    throw std::logic_error("adversarial_draw: unknown prior kind");
}

}  // namespace minitest
