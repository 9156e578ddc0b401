#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace minitest {

enum class ModelKind { Binomial, Poisson, Multinomial };

inline std::string to_string(ModelKind m) {
    switch (m) {
        case ModelKind::Binomial: return "binomial";
        case ModelKind::Poisson: return "poisson";
        case ModelKind::Multinomial: return "multinomial";
    }
    return "?";
}

inline ModelKind model_from_string(const std::string& s) {
    if (s == "binomial") return ModelKind::Binomial;
    if (s == "poisson") return ModelKind::Poisson;
    if (s == "multinomial") return ModelKind::Multinomial;
    throw std::invalid_argument("unknown model kind: " + s);
}

// Constants used by the indices, thresholds and priors. All defaults are
// functions of eta; c_I and c_gamma only need to be small enough, pinned
// here as c_u/2 and (c_A4/2)^{1/4}.
struct ConstantLedger {
    double uc = 0;          // threshold multiplier, 4/sqrt(eta)
    double c_I = 0;         // index-I cut constant, pinned to c_u / 2
    double c_A4 = 0;        // c_A^4 = log(1 + 4(1-eta)^2)
    double c_u = 0;         // index-U constant, eta/10 ^ (1-eta)^2/2
    double c_gamma = 0;     // bulk-prior scale, (c_A4 / 2)^{1/4}
    double C_eta_frob = 0;  // Frobenius test constant, 2/sqrt(eta) ^ 1/4

    double c_A() const { return std::pow(c_A4, 0.25); }

    static ConstantLedger defaults(double eta) {
        ConstantLedger c;
        c.uc = 4.0 / std::sqrt(eta);
        c.c_A4 = std::log1p(4.0 * (1.0 - eta) * (1.0 - eta));
        c.c_u = std::min(eta / 10.0, 0.5 * (1.0 - eta) * (1.0 - eta));
        c.c_I = c.c_u / 2.0;
        // (c_A4/2)^{1/4} keeps the Rademacher prior's chi-square certificate
        // below 4(1-eta)^2 for every p with entries <= 1/2; the extra factor
        // 2 absorbs the worst case of 1/(1-p_i)^2.
        c.c_gamma = std::pow(c.c_A4 / 2.0, 0.25);
        c.C_eta_frob = std::min(2.0 / std::sqrt(eta), 0.25);
        return c;
    }

    void validate() const {
        if (!(uc > 0) || !(c_I > 0) || !(c_A4 > 0) || !(c_u > 0) || !(c_gamma > 0) ||
            !(C_eta_frob > 0))
            throw std::invalid_argument("ConstantLedger: all constants must be positive");
        if (c_I > c_u)
            throw std::invalid_argument("ConstantLedger: requires c_I <= c_u");
    }
};

// The known null distribution plus test parameters.
struct NullSpec {
    ModelKind model = ModelKind::Multinomial;
    std::vector<double> p;
    double eta = 0.1;
    double t = 1.0;
    ConstantLedger constants;  // zero-initialized means "use defaults(eta)"

    ConstantLedger ledger() const {
        if (constants.uc > 0) return constants;
        return ConstantLedger::defaults(eta);
    }

    void validate() const {
        if (p.empty()) throw std::invalid_argument("spec: p must be non-empty");
        if (!(eta > 0.0 && eta < 1.0)) throw std::invalid_argument("spec: eta must lie in (0,1)");
        if (!(t >= 1.0 && t <= 2.0)) throw std::invalid_argument("spec: t must lie in [1,2]");
        double sum = 0.0;
        for (double v : p) {
            if (std::isnan(v)) throw std::invalid_argument("spec: p contains NaN");
            if (v < 0.0) throw std::invalid_argument("spec: p entries must be nonnegative");
            if (model == ModelKind::Binomial && v > 1.0)
                throw std::invalid_argument("spec: binomial p entries must lie in [0,1]");
            sum += v;
        }
        if (model == ModelKind::Multinomial) {
            if (p.size() < 2)
                throw std::invalid_argument("spec: multinomial requires N >= 2 (N = 1 is degenerate)");
            if (std::abs(sum - 1.0) > 1e-12)
                throw std::invalid_argument("spec: multinomial p must sum to 1 within 1e-12");
        }
        ledger().validate();
    }
};

// Canonical view of p: binomial coordinates with p_j > 1/2 flipped to 1 - p_j,
// then sorted nonincreasing with ties broken by original index.
struct CanonicalNull {
    std::vector<double> p_sorted;      // nonincreasing
    std::vector<std::size_t> perm;     // perm[s] = original index of sorted slot s
    std::vector<char> flip_mask;       // aligned with p_sorted; binomial only

    std::size_t size() const { return p_sorted.size(); }

    // Reconstructs the original p exactly (bitwise on finite doubles).
    std::vector<double> restore() const {
        std::vector<double> out(p_sorted.size());
        for (std::size_t s = 0; s < p_sorted.size(); ++s) {
            double v = p_sorted[s];
            out[perm[s]] = flip_mask[s] ? 1.0 - v : v;
        }
        return out;
    }

    // Maps a canonical-space vector (e.g. an adversarial q) back to original
    // coordinates, undoing flips.
    std::vector<double> to_original(std::span<const double> canonical) const {
        if (canonical.size() != p_sorted.size())
            throw std::invalid_argument("to_original: size mismatch");
        std::vector<double> out(canonical.size());
        for (std::size_t s = 0; s < canonical.size(); ++s)
            out[perm[s]] = flip_mask[s] ? 1.0 - canonical[s] : canonical[s];
        return out;
    }
};

inline CanonicalNull canonicalize(const NullSpec& spec) {
    spec.validate();
    const std::size_t n = spec.p.size();
    std::vector<double> flipped(n);
    std::vector<char> flip(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        double v = spec.p[j];
        if (spec.model == ModelKind::Binomial && v > 0.5) {
            flipped[j] = 1.0 - v;
            flip[j] = 1;
        } else {
            flipped[j] = v;
        }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return flipped[a] > flipped[b];
    });
    CanonicalNull canon;
    canon.p_sorted.resize(n);
    canon.perm = order;
    canon.flip_mask.resize(n);
    for (std::size_t s = 0; s < n; ++s) {
        canon.p_sorted[s] = flipped[order[s]];
        canon.flip_mask[s] = flip[order[s]];
    }
    return canon;
}

// In the multinomial model the tests run on the last N-1 coordinates of the
// sorted vector (the largest coordinate carries no extra information). For
// binomial and Poisson the whole vector is used.
inline std::size_t effective_offset(ModelKind model) {
    return model == ModelKind::Multinomial ? 1 : 0;
}

inline std::span<const double> effective_p(const CanonicalNull& canon, ModelKind model) {
    const std::size_t off = effective_offset(model);
    return std::span<const double>(canon.p_sorted).subspan(off);
}

// A sample reduced to sufficient statistics, in canonical coordinate order.
//   histogram_j = total count over all n observations
//   S_j, S'_j   = counts over the first / second k = floor(n/2) observations
// For odd n the last observation enters the histogram only.
struct SampleSet {
    long long n = 0;
    long long k = 0;
    bool split_available = true;
    std::vector<long long> histogram;
    std::vector<long long> S;
    std::vector<long long> S_prime;

    void check_invariants(ModelKind model) const {
        const bool bounded = model != ModelKind::Poisson;
        for (std::size_t j = 0; j < histogram.size(); ++j) {
            if (split_available && S[j] + S_prime[j] > histogram[j])
                throw std::logic_error("SampleSet: split counts exceed histogram");
            if (bounded && histogram[j] > n)
                throw std::logic_error("SampleSet: histogram count exceeds n");
        }
    }
};

// Builds a SampleSet from raw observations (original coordinate order).
// Binomial/Poisson rows have N entries; multinomial rows have a single
// 0-based category index.
inline SampleSet ingest_samples(const NullSpec& spec, const CanonicalNull& canon,
                                const std::vector<std::vector<long long>>& rows) {
    const std::size_t N = spec.p.size();
    SampleSet out;
    out.n = static_cast<long long>(rows.size());
    out.k = out.n / 2;
    out.histogram.assign(N, 0);
    out.S.assign(N, 0);
    out.S_prime.assign(N, 0);

    std::vector<long long> hist_orig(N, 0), s_orig(N, 0), sp_orig(N, 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        const bool in_s = static_cast<long long>(i) < out.k;
        const bool in_sp = !in_s && static_cast<long long>(i) < 2 * out.k;
        if (spec.model == ModelKind::Multinomial) {
            if (row.size() != 1)
                throw std::invalid_argument("ingest: multinomial rows must hold one category index");
            long long c = row[0];
            if (c < 0 || c >= static_cast<long long>(N))
                throw std::invalid_argument("ingest: category index out of range");
            hist_orig[c] += 1;
            if (in_s) s_orig[c] += 1;
            if (in_sp) sp_orig[c] += 1;
        } else {
            if (row.size() != N)
                throw std::invalid_argument("ingest: row dimension mismatch with spec");
            for (std::size_t j = 0; j < N; ++j) {
                long long v = row[j];
                if (v < 0) throw std::invalid_argument("ingest: negative count");
                if (spec.model == ModelKind::Binomial && v > 1)
                    throw std::invalid_argument("ingest: binomial entries must be 0/1");
                hist_orig[j] += v;
                if (in_s) s_orig[j] += v;
                if (in_sp) sp_orig[j] += v;
            }
        }
    }
    // Apply the canonical permutation, then flips (count -> rows_seen - count).
    for (std::size_t s = 0; s < N; ++s) {
        const std::size_t o = canon.perm[s];
        out.histogram[s] = hist_orig[o];
        out.S[s] = s_orig[o];
        out.S_prime[s] = sp_orig[o];
        if (canon.flip_mask[s]) {
            out.histogram[s] = out.n - out.histogram[s];
            out.S[s] = out.k - out.S[s];
            out.S_prime[s] = out.k - out.S_prime[s];
        }
    }
    out.check_invariants(spec.model);
    return out;
}

// Builds a SampleSet from a histogram row. Split statistics are unavailable.
// For multinomial, n is the total count unless overridden; binomial and
// Poisson require an explicit n.
inline SampleSet ingest_histogram(const NullSpec& spec, const CanonicalNull& canon,
                                  const std::vector<long long>& hist_orig,
                                  std::optional<long long> n_override = std::nullopt) {
    const std::size_t N = spec.p.size();
    if (hist_orig.size() != N)
        throw std::invalid_argument("ingest: histogram dimension mismatch with spec");
    long long total = 0;
    for (long long v : hist_orig) {
        if (v < 0) throw std::invalid_argument("ingest: negative histogram count");
        total += v;
    }
    SampleSet out;
    if (spec.model == ModelKind::Multinomial) {
        out.n = n_override.value_or(total);
        if (out.n != total)
            throw std::invalid_argument("ingest: multinomial histogram must sum to n");
    } else {
        if (!n_override)
            throw std::invalid_argument("ingest: histogram input requires n for this model");
        out.n = *n_override;
    }
    out.k = 0;
    out.split_available = false;
    out.histogram.assign(N, 0);
    for (std::size_t s = 0; s < N; ++s) {
        const std::size_t o = canon.perm[s];
        out.histogram[s] = hist_orig[o];
        if (canon.flip_mask[s]) out.histogram[s] = out.n - out.histogram[s];
        if (spec.model != ModelKind::Poisson && out.histogram[s] > out.n)
            throw std::invalid_argument("ingest: histogram count exceeds n");
    }
    return out;
}

// Exponents, cut indices and the partial norms they induce, for a sorted
// (effective) null vector.
struct IndexProfile {
    double r = 0;                      // 2t / (4-t)
    double b = 0;                      // (4-2t) / (4-t)
    std::size_t I = 0;                 // prefix length: coordinates 1..I
    std::size_t A = 0;                 // prefix length: coordinates 1..A, A <= I
    std::optional<std::size_t> U;      // 1-based first tail-prior coordinate, U > I
};

struct RateBreakdown {
    double bulk_term = 0;
    double tail_term = 0;
    double inv_n_term = 0;
    double total = 0;
};

// Outcome of the aggregated test psi = psi_bulk v psi_1 v psi_2.
struct TestVerdict {
    double t_bulk = 0;
    double t1 = 0;
    bool collision_found = false;
    double thr_bulk = 0;
    double thr_t1 = 0;
    bool decide_bulk = false;
    bool decide_t1 = false;
    bool decide_psi2 = false;
    bool decide_aggregate = false;

    IndexProfile profile;
    std::size_t bulk_cut = 0;          // A actually used (N_eff in the t=2 single-test mode)
    bool single_chi2_mode = false;
    bool used_nosplit = false;

    // Draft tail chi^2 variant, off by default.
    std::optional<double> t2;
    std::optional<double> thr_t2;
    bool decide_t2 = false;

    std::string reject_reason;         // "impossible-under-null" when triggered
};

enum class PriorKind { BulkRademacher, TailSparse, SingleCoordinate };

inline std::string to_string(PriorKind k) {
    switch (k) {
        case PriorKind::BulkRademacher: return "bulk";
        case PriorKind::TailSparse: return "tail";
        case PriorKind::SingleCoordinate: return "single";
    }
    return "?";
}

inline PriorKind prior_from_string(const std::string& s) {
    if (s == "bulk") return PriorKind::BulkRademacher;
    if (s == "tail") return PriorKind::TailSparse;
    if (s == "single") return PriorKind::SingleCoordinate;
    throw std::invalid_argument("unknown prior kind: " + s);
}

// A sampled alternative in canonical coordinate order.
struct AdversarialDraw {
    std::vector<double> q;
    PriorKind prior_kind = PriorKind::BulkRademacher;
    double realized_separation = 0;
};

inline double lt_norm(std::span<const double> v, double t) {
    double acc = 0.0;
    for (double x : v) acc += std::pow(std::abs(x), t);
    return std::pow(acc, 1.0 / t);
}

inline double lt_distance(std::span<const double> a, std::span<const double> b, double t) {
    if (a.size() != b.size()) throw std::invalid_argument("lt_distance: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::pow(std::abs(a[i] - b[i]), t);
    return std::pow(acc, 1.0 / t);
}

}  // namespace minitest
