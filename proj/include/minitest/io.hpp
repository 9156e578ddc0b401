#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "minitest/model.hpp"
#include "minitest/montecarlo.hpp"

namespace minitest {

using nlohmann::json;

// NullSpec JSON schema:
// {"model":"binomial|poisson|multinomial","p":[...],"eta":0.1,"t":1.0,
//  "constants":{optional overrides}}
inline NullSpec spec_from_json(const json& j) {
    NullSpec spec;
    spec.model = model_from_string(j.at("model").get<std::string>());
    spec.p = j.at("p").get<std::vector<double>>();
    spec.eta = j.at("eta").get<double>();
    spec.t = j.at("t").get<double>();
    spec.constants = ConstantLedger::defaults(spec.eta);
    if (j.contains("constants")) {
        const auto& c = j["constants"];
        if (c.contains("uc")) spec.constants.uc = c["uc"].get<double>();
        if (c.contains("c_I")) spec.constants.c_I = c["c_I"].get<double>();
        if (c.contains("c_A4")) spec.constants.c_A4 = c["c_A4"].get<double>();
        if (c.contains("c_u")) spec.constants.c_u = c["c_u"].get<double>();
        if (c.contains("c_gamma")) spec.constants.c_gamma = c["c_gamma"].get<double>();
        if (c.contains("C_eta_frob")) spec.constants.C_eta_frob = c["C_eta_frob"].get<double>();
    }
    spec.validate();
    return spec;
}

inline NullSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open spec file: " + path);
    json j;
    in >> j;
    return spec_from_json(j);
}

inline json constants_to_json(const ConstantLedger& c) {
    return json{{"uc", c.uc},           {"c_I", c.c_I},
                {"c_A4", c.c_A4},       {"c_u", c.c_u},
                {"c_gamma", c.c_gamma}, {"C_eta_frob", c.C_eta_frob}};
}

inline json spec_to_json(const NullSpec& spec) {
    return json{{"model", to_string(spec.model)},
                {"p", spec.p},
                {"eta", spec.eta},
                {"t", spec.t},
                {"constants", constants_to_json(spec.ledger())}};
}

inline json profile_to_json(const IndexProfile& prof, std::span<const double> p_eff) {
    json j{{"r", prof.r}, {"b", prof.b}, {"I", prof.I}, {"A", prof.A}};
    if (prof.U) j["U"] = *prof.U; else j["U"] = nullptr;
    j["norm_r_leq_I"] = partial_norm(p_eff, 0, prof.I, prof.r);
    j["norm_r_leq_A"] = partial_norm(p_eff, 0, prof.A, prof.r);
    j["mass_gt_I"] = partial_power_sum(p_eff, prof.I, p_eff.size(), 1.0);
    j["mass_gt_A"] = partial_power_sum(p_eff, prof.A, p_eff.size(), 1.0);
    j["norm2sq_gt_A"] = partial_power_sum(p_eff, prof.A, p_eff.size(), 2.0);
    return j;
}

inline json rate_to_json(const RateBreakdown& r) {
    return json{{"bulk_term", r.bulk_term},
                {"tail_term", r.tail_term},
                {"inv_n_term", r.inv_n_term},
                {"total", r.total}};
}

inline json verdict_to_json(const TestVerdict& v) {
    json j{{"t_bulk", v.t_bulk},
           {"t1", v.t1},
           {"collision_found", v.collision_found},
           {"thr_bulk", v.thr_bulk},
           {"thr_t1", v.thr_t1},
           {"decide_bulk", v.decide_bulk},
           {"decide_t1", v.decide_t1},
           {"decide_psi2", v.decide_psi2},
           {"decide_aggregate", v.decide_aggregate},
           {"bulk_cut", v.bulk_cut},
           {"single_chi2_mode", v.single_chi2_mode},
           {"used_nosplit", v.used_nosplit}};
    if (v.t2) {
        j["t2"] = *v.t2;
        j["thr_t2"] = *v.thr_t2;
        j["decide_t2"] = v.decide_t2;
    }
    if (!v.reject_reason.empty()) j["reject_reason"] = v.reject_reason;
    j["profile"] = json{{"r", v.profile.r}, {"b", v.profile.b}, {"I", v.profile.I},
                        {"A", v.profile.A}};
    if (v.profile.U) j["profile"]["U"] = *v.profile.U; else j["profile"]["U"] = nullptr;
    return j;
}

inline json risk_to_json(const RiskReport& r) {
    return json{{"trials", r.trials},   {"rejections", r.rejections},
                {"rate", r.rate},       {"ci_low", r.ci_low},
                {"ci_high", r.ci_high}, {"seed", r.seed},
                {"wall_seconds", r.wall_seconds}, {"mean_separation", r.mean_separation}};
}

// Samples CSV: one observation per row (0/1 or counts; a single 0-based
// category index for multinomial), or one histogram row prefixed with "H".
struct SampleFile {
    bool histogram_mode = false;
    std::vector<std::vector<long long>> rows;
    std::vector<long long> histogram;
};

inline SampleFile parse_samples_csv(std::istream& in) {
    SampleFile out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.empty()) continue;
        if (cells[0] == "H") {
            if (out.histogram_mode || !out.rows.empty())
                throw std::invalid_argument("samples: a histogram row must be the only row");
            out.histogram_mode = true;
            for (std::size_t i = 1; i < cells.size(); ++i)
                out.histogram.push_back(std::stoll(cells[i]));
        } else {
            std::vector<long long> row;
            row.reserve(cells.size());
            for (const auto& c : cells) row.push_back(std::stoll(c));
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

inline SampleFile read_samples_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open samples file: " + path);
    return parse_samples_csv(in);
}

inline void write_samples_csv(std::ostream& os, const std::vector<std::vector<long long>>& rows) {
    for (const auto& row : rows) {
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (j) os << ',';
            os << row[j];
        }
        os << '\n';
    }
}

inline void write_histogram_csv(std::ostream& os, const std::vector<long long>& hist) {
    os << "H";
    for (long long v : hist) os << ',' << v;
    os << '\n';
}

inline SampleSet ingest_sample_file(const NullSpec& spec, const CanonicalNull& canon,
                                    const SampleFile& file,
                                    std::optional<long long> n_override = std::nullopt) {
    if (file.histogram_mode) return ingest_histogram(spec, canon, file.histogram, n_override);
    return ingest_samples(spec, canon, file.rows);
}

}  // namespace minitest
