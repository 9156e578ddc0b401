// minitest: locally minimax-optimal identity tests for multivariate
// binomial, Poisson and multinomial models under l_t separation.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "minitest/adversary.hpp"
#include "minitest/io.hpp"
#include "minitest/montecarlo.hpp"
#include "minitest/oracle.hpp"
#include "minitest/rates.hpp"
#include "minitest/sampling.hpp"
#include "minitest/statistics.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

using minitest::json;

struct GlobalOpts {
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;
    std::string argv_line;  // full command line, for replayability
};

json metadata(const GlobalOpts& g, const std::string& command,
              const std::optional<minitest::ConstantLedger>& constants = std::nullopt) {
    json m{{"version", kVersion}, {"command", command}, {"argv", g.argv_line},
           {"seed", g.seed}, {"threads", minitest::resolve_threads(g.threads)}};
    if (constants) m["constants"] = minitest::constants_to_json(*constants);
    return m;
}

void emit(const GlobalOpts& g, const json& payload) {
    if (g.out.empty()) {
        std::cout << payload.dump(2) << std::endl;
    } else {
        std::ofstream out(g.out);
        if (!out) throw std::invalid_argument("cannot open output file: " + g.out);
        out << payload.dump(2) << std::endl;
    }
}

void emit_text(const GlobalOpts& g, const std::string& text) {
    if (g.out.empty()) {
        std::cout << text;
    } else {
        std::ofstream out(g.out);
        if (!out) throw std::invalid_argument("cannot open output file: " + g.out);
        out << text;
    }
}

// --config FILE: JSON object whose keys are long option names; applied as
// defaults wherever the flag was not given on the command line.
std::vector<std::string> merge_config(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    }
    if (config_path.empty()) return args;
    std::ifstream in(config_path);
    if (!in) throw std::invalid_argument("cannot open config file: " + config_path);
    json cfg;
    in >> cfg;
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        const std::string flag = "--" + it.key();
        bool present = false;
        for (const auto& a : args)
            if (a == flag || a.rfind(flag + "=", 0) == 0) present = true;
        if (present) continue;
        if (it.value().is_boolean()) {
            if (it.value().get<bool>()) args.push_back(flag);
        } else if (it.value().is_string()) {
            args.push_back(flag);
            args.push_back(it.value().get<std::string>());
        } else {
            args.push_back(flag);
            args.push_back(it.value().dump());
        }
    }
    return args;
}

json run_oracle_battery();

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Locally minimax-optimal identity testing for binomial, Poisson and "
                 "multinomial models"};
    app.require_subcommand(1);

    GlobalOpts g;
    std::string config_path;
    app.add_option("--seed", g.seed, "master RNG seed")->capture_default_str();
    app.add_option("--threads", g.threads,
                   "worker threads (0 = MINITEST_THREADS env or hardware)");
    app.add_option("--out", g.out, "output file (default stdout)");
    app.add_option("--config", config_path, "JSON file with default option values");
    app.fallthrough();

    std::string spec_path, data_path, kind = "bulk", mode;
    long long n = 0, trials = 10000;
    double scale = 1.0, C_big = 1.0, c_small = 0.25, power_target = 0.5;
    std::optional<long long> n_override;
    bool a_form_tail = false, draft_t2 = false;

    auto* cmd_rate = app.add_subcommand("rate", "minimax separation radius breakdown");
    cmd_rate->add_option("--spec", spec_path, "NullSpec JSON")->required();
    cmd_rate->add_option("--n", n, "sample size")->required();
    cmd_rate->add_flag("--a-form-tail", a_form_tail, "use ||p_{>A}||_1 in the tail term");

    auto* cmd_idx = app.add_subcommand("indices", "exponents, cut indices and partial norms");
    cmd_idx->add_option("--spec", spec_path)->required();
    cmd_idx->add_option("--n", n)->required();

    auto* cmd_bounds = app.add_subcommand("bounds-compare",
                                          "fixed-point bounds of the prior literature");
    cmd_bounds->add_option("--spec", spec_path)->required();
    cmd_bounds->add_option("--n", n)->required();
    cmd_bounds->add_option("--C", C_big, "upper-bound constant");
    cmd_bounds->add_option("--c", c_small, "lower-bound constant");

    auto* cmd_sample = app.add_subcommand("sample", "draw observations, write CSV");
    cmd_sample->add_option("--spec", spec_path)->required();
    cmd_sample->add_option("--n", n)->required();

    std::string direction = "histogram";
    auto* cmd_poi = app.add_subcommand(
        "poissonize", "poissonization conversions between the three models");
    cmd_poi->add_option("--spec", spec_path)->required();
    cmd_poi->add_option("--n", n)->required();
    cmd_poi->add_option("--direction", direction,
                        "histogram: draw a poissonized histogram (CSV H row); "
                        "to-bernoulli: Poisson counts (H row in --data) -> 0/1 rows; "
                        "subsample: 0/1 rows in --data -> Poisson counts (H row)");
    cmd_poi->add_option("--data", data_path, "input CSV for the conversion directions");

    long long data_n = -1;
    auto* cmd_test = app.add_subcommand("test", "run the aggregated identity test");
    cmd_test->add_option("--spec", spec_path)->required();
    cmd_test->add_option("--data", data_path, "samples CSV")->required();
    cmd_test->add_option("--n", data_n, "observation count for histogram-row input");
    cmd_test->add_flag("--draft-t2", draft_t2, "include the draft tail chi-square in the aggregate");

    auto* cmd_adv = app.add_subcommand("adversary", "draw an adversarial alternative");
    cmd_adv->add_option("--spec", spec_path)->required();
    cmd_adv->add_option("--n", n)->required();
    cmd_adv->add_option("--kind", kind, "bulk | tail | single");
    cmd_adv->add_option("--scale", scale, "perturbation scale (1 = calibrated prior)");

    auto* cmd_sim = app.add_subcommand("simulate", "Monte Carlo risk estimation, CSV output");
    cmd_sim->add_option("--spec", spec_path)->required();
    cmd_sim->add_option("--n", n)->required();
    cmd_sim->add_option("--mode", mode, "type1 | type2")->required();
    cmd_sim->add_option("--kind", kind, "prior for type2: bulk | tail | single");
    cmd_sim->add_option("--scale", scale, "prior scale for type2");
    cmd_sim->add_option("--trials", trials, "Monte Carlo trials");

    auto* cmd_radius = app.add_subcommand("radius", "empirical critical-radius search");
    cmd_radius->add_option("--spec", spec_path)->required();
    cmd_radius->add_option("--n", n)->required();
    cmd_radius->add_option("--kind", kind, "bulk | tail | single");
    cmd_radius->add_option("--power-target", power_target, "type-II target");
    cmd_radius->add_option("--trials", trials, "trials per bisection step");

    app.add_subcommand("oracle-check", "run the exact-oracle cross-validation battery");

    try {
        const auto args = merge_config(argc, argv);
        g.argv_line = "minitest";
        for (const auto& a : args) g.argv_line += " " + a;
        std::vector<const char*> cargs{argv[0]};
        for (const auto& a : args) cargs.push_back(a.c_str());
        app.parse(static_cast<int>(cargs.size()), cargs.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << std::endl;
        return 2;  // usage error
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    }

    try {
        using namespace minitest;
        if (data_n >= 0) n_override = data_n;

        if (app.got_subcommand(cmd_rate)) {
            const NullSpec spec = load_spec(spec_path);
            const auto rate = minimax_rate(spec, static_cast<double>(n), a_form_tail);
            json out{{"metadata", metadata(g, "rate", spec.ledger())},
                     {"n", n},
                     {"breakdown", rate_to_json(rate)}};
            emit(g, out);
        } else if (app.got_subcommand(cmd_idx)) {
            const NullSpec spec = load_spec(spec_path);
            const auto canon = canonicalize(spec);
            const auto p = effective_p(canon, spec.model);
            const auto prof = make_profile(p, static_cast<double>(n), spec.t, spec.ledger());
            json out{{"metadata", metadata(g, "indices", spec.ledger())},
                     {"n", n},
                     {"profile", profile_to_json(prof, p)}};
            emit(g, out);
        } else if (app.got_subcommand(cmd_bounds)) {
            const NullSpec spec = load_spec(spec_path);
            if (spec.model != ModelKind::Multinomial)
                throw std::invalid_argument("bounds-compare applies to multinomial specs");
            const auto canon = canonicalize(spec);
            const auto fp = fixed_point_bounds(canon.p_sorted, static_cast<double>(n), C_big,
                                               c_small);
            json out{{"metadata", metadata(g, "bounds-compare", spec.ledger())},
                     {"n", n},
                     {"eps_plus", fp.eps_plus},
                     {"eps_minus", fp.eps_minus},
                     {"ratio", fp.eps_plus / fp.eps_minus},
                     {"bounds_match", fp.bounds_match}};
            emit(g, out);
        } else if (app.got_subcommand(cmd_sample)) {
            const NullSpec spec = load_spec(spec_path);
            Rng rng(g.seed);
            const auto rows = sample_rows(spec.model, spec.p, n, rng);
            std::ostringstream os;
            write_samples_csv(os, rows);
            emit_text(g, os.str());
        } else if (app.got_subcommand(cmd_poi)) {
            const NullSpec spec = load_spec(spec_path);
            Rng rng(g.seed);
            std::ostringstream os;
            if (direction == "histogram") {
                const auto hist = spec.model == ModelKind::Multinomial
                                      ? poissonize_multinomial(spec.p, n, rng)
                                      : poissonize_binomial(spec.p, n, rng);
                write_histogram_csv(os, hist);
            } else if (direction == "to-bernoulli") {
                const auto file = read_samples_csv(data_path);
                if (!file.histogram_mode)
                    throw std::invalid_argument("to-bernoulli expects an H row of Poisson counts");
                const auto budget = solve_truncation_c(n, spec.eta);
                const auto res = poisson_to_bernoulli_stream(file.histogram, n, budget.c, rng);
                if (res.status == ReductionStatus::TruncationFailed)
                    throw std::domain_error("reduction failed: n~ < c n (caller should accept)");
                if (res.status == ReductionStatus::CountExceedsRows)
                    throw std::domain_error("reduction failed: count exceeds n~ at coordinate " +
                                            std::to_string(res.bad_coordinate));
                write_samples_csv(os, res.rows);
            } else if (direction == "subsample") {
                const auto file = read_samples_csv(data_path);
                if (file.histogram_mode)
                    throw std::invalid_argument("subsample expects 0/1 observation rows");
                const auto budget = solve_subsample_cbar(n, spec.eta);
                const auto res = binomial_to_poisson_subsample(file.rows, n, budget.c, rng);
                if (res.status == ReductionStatus::SubsampleFailed)
                    throw std::domain_error("reduction failed: n~ > n (caller should accept)");
                write_histogram_csv(os, res.counts);
            } else {
                throw std::invalid_argument("poissonize: unknown --direction " + direction);
            }
            emit_text(g, os.str());
        } else if (app.got_subcommand(cmd_test)) {
            const NullSpec spec = load_spec(spec_path);
            const auto canon = canonicalize(spec);
            const auto file = read_samples_csv(data_path);
            const SampleSet sample = ingest_sample_file(spec, canon, file, n_override);
            TestOptions opt;
            opt.include_draft_t2 = draft_t2;
            const TestVerdict v = run_test(spec, canon, sample, opt);
            json out{{"metadata", metadata(g, "test", spec.ledger())},
                     {"n", sample.n},
                     {"verdict", verdict_to_json(v)}};
            emit(g, out);
        } else if (app.got_subcommand(cmd_adv)) {
            const NullSpec spec = load_spec(spec_path);
            const auto canon = canonicalize(spec);
            const auto prof = make_profile(effective_p(canon, spec.model),
                                           static_cast<double>(n), spec.t, spec.ledger());
            Rng rng(g.seed);
            const auto draw = adversarial_draw(spec, canon, prof, static_cast<double>(n),
                                               prior_from_string(kind), scale, rng);
            json out{{"metadata", metadata(g, "adversary", spec.ledger())},
                     {"n", n},
                     {"prior_kind", to_string(draw.prior_kind)},
                     {"scale", scale},
                     {"realized_separation", draw.realized_separation},
                     {"q", canon.to_original(draw.q)}};
            emit(g, out);
        } else if (app.got_subcommand(cmd_sim)) {
            const NullSpec spec = load_spec(spec_path);
            RiskReport rep;
            std::string kind_label;
            if (mode == "type1") {
                rep = estimate_type1(spec, n, trials, g.seed, g.threads);
                kind_label = "type1";
                scale = 0.0;
            } else if (mode == "type2") {
                rep = estimate_type2(spec, n, prior_from_string(kind), scale, trials, g.seed,
                                     g.threads);
                kind_label = kind;
            } else {
                throw std::invalid_argument("simulate: mode must be type1 or type2");
            }
            std::ostringstream os;
            os << "n,N,t,eta,kind,scale,trials,rate,ci_low,ci_high,seed\n";
            os << n << ',' << spec.p.size() << ',' << spec.t << ',' << spec.eta << ','
               << kind_label << ',' << scale << ',' << rep.trials << ',' << rep.rate << ','
               << rep.ci_low << ',' << rep.ci_high << ',' << rep.seed << '\n';
            emit_text(g, os.str());
        } else if (app.got_subcommand(cmd_radius)) {
            const NullSpec spec = load_spec(spec_path);
            const auto res = empirical_radius(spec, n, prior_from_string(kind), power_target,
                                              trials, g.seed, g.threads);
            const auto rate = minimax_rate(spec, static_cast<double>(n));
            // Shared simulation CSV schema plus the radius-specific columns.
            std::ostringstream os;
            os << "n,N,t,eta,kind,scale,trials,rate,ci_low,ci_high,seed,"
               << "separation,separation_over_rate,target_met\n";
            os << n << ',' << spec.p.size() << ',' << spec.t << ',' << spec.eta << ',' << kind
               << ',' << res.scale << ',' << trials << ',' << res.type2 << ",,," << g.seed << ','
               << res.separation << ',' << res.separation / rate.total << ','
               << (res.target_met ? 1 : 0) << '\n';
            emit_text(g, os.str());
        } else {  // oracle-check
            json out = run_oracle_battery();
            out["metadata"] = metadata(g, "oracle-check");
            emit(g, out);
            return out["all_pass"].get<bool>() ? 0 : 1;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;  // domain error
    }
}

namespace {

json run_oracle_battery() {
    using namespace minitest;
    std::vector<json> checks;
    bool all = true;
    auto record = [&](const std::string& name, bool pass, const std::string& detail) {
        checks.push_back(json{{"name", name}, {"pass", pass}, {"detail", detail}});
        all = all && pass;
    };

    // Closed-form moments vs full enumeration, binomial model.
    {
        Rng rng(7);
        bool ok = true;
        double worst = 0.0;
        for (int rep = 0; rep < 20 && ok; ++rep) {
            const std::size_t N = 1 + rng.next_below(3);
            const long long k = 2 + static_cast<long long>(rng.next_below(3));
            std::vector<double> p(N), q(N);
            for (auto& v : p) v = 0.05 + 0.45 * rng.next_double();
            for (auto& v : q) v = 0.05 + 0.45 * rng.next_double();
            const double t = 1.0 + rng.next_double();
            const auto [r, b] = exponents(t);
            const std::size_t A = 1 + rng.next_below(N);
            for (auto kind : {oracle::StatKind::Bulk, oracle::StatKind::T1, oracle::StatKind::T2}) {
                const auto exact = oracle::enumerate_statistic_moments(ModelKind::Binomial, p, q,
                                                                       k, A, b, kind);
                Moments m;
                if (kind == oracle::StatKind::Bulk) m = moments_t_bulk(p, q, A, b, k);
                else if (kind == oracle::StatKind::T1) m = moments_t1(p, q, 2 * k, A);
                else m = moments_t2(p, q, k, A);
                worst = std::max(worst, std::abs(exact.mean - m.mean));
                ok = ok && std::abs(exact.mean - m.mean) <= 1e-12;
                ok = ok && m.variance_upper >= exact.variance - 1e-12;
            }
        }
        record("moments-vs-enumeration", ok, "worst mean gap " + std::to_string(worst));
    }

    // Chi-square certificate: closed form vs enumeration.
    {
        Rng rng(11);
        bool ok = true;
        double worst = 0.0;
        for (int rep = 0; rep < 20 && ok; ++rep) {
            const std::size_t N = 1 + rng.next_below(2);
            const long long n = 2 + static_cast<long long>(rng.next_below(3));
            std::vector<double> p(N), gamma(N);
            for (std::size_t i = 0; i < N; ++i) {
                p[i] = 0.05 + 0.45 * rng.next_double();
                gamma[i] = p[i] * rng.next_double() * 0.5;
            }
            const double cf = chi2_divergence_closed_form(p, gamma, static_cast<double>(n));
            const double ex = oracle::exact_mixture_chi2(p, gamma, n);
            worst = std::max(worst, std::abs(cf - ex));
            ok = ok && std::abs(cf - ex) <= 1e-12 * std::max(1.0, std::abs(ex));
        }
        record("chi2-closed-form-vs-enumeration", ok, "worst gap " + std::to_string(worst));
    }

    // pmf anchors.
    {
        const bool ok = std::abs(oracle::poisson_pmf(0.0, 0) - 1.0) <= 1e-15 &&
                        std::abs(oracle::binomial_pmf(2, 0.5, 1) - 0.5) <= 1e-15 &&
                        std::abs(oracle::poisson_pmf(3.0, 3) - 0.22404180765538775) <= 1e-12;
        record("pmf-anchors", ok, "Poi(0)@0, Bin(2,.5)@1, Poi(3)@3");
    }

    // Tail-prior TV: collision mass bounded by sum n^2 p_i^2.
    {
        bool ok = true;
        const std::vector<double> p_tail{0.04, 0.02};
        const long long n = 4;
        const double pi_bar = 0.1;
        const auto tv = oracle::exact_tv_tail_prior(p_tail, pi_bar, n);
        double bound = 0.0;
        for (double v : p_tail) bound += static_cast<double>(n * n) * v * v;
        ok = ok && tv.collision_mass_null <= bound && tv.tv >= 0.0 && tv.tv <= 1.0;
        record("tail-prior-tv", ok,
               "tv " + std::to_string(tv.tv) + ", collision mass " +
                   std::to_string(tv.collision_mass_null) + " <= " + std::to_string(bound));
    }

    json out;
    out["checks"] = checks;
    out["all_pass"] = all;
    return out;
}

}  // namespace
