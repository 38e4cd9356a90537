// harmbound: sharp bounds on the fraction negatively affected by a treatment
// change, with cross-fitted doubly-robust estimation.
//
// Subcommands: estimate, simulate, replicate, oracle-bounds, cvar.
// Exit codes: 0 success, 1 usage/configuration error, 2 unreadable or invalid
// input data / failed output write, 3 internal invariant violation.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "harmbound/ahe.hpp"
#include "harmbound/core.hpp"
#include "harmbound/errors.hpp"
#include "harmbound/estimands.hpp"
#include "harmbound/nuisance.hpp"
#include "harmbound/oracle.hpp"
#include "harmbound/rng.hpp"

using namespace harmbound;

namespace {

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << text;
    if (!f) throw data_error("write failed: " + path);
}

// Emit a report; to the file when --out was given, to stdout otherwise.
void emit(const std::string& out_path, const std::string& text) {
    if (out_path.empty())
        std::cout << text;
    else
        write_text(out_path, text);
}

// Policy specs accepted on the command line: constant0 | constant1 |
// threshold:COL with COL a 1-based covariate column index.
Policy parse_policy(const std::string& s, const char* flag) {
    if (s == "constant0") return Policy::constant(0);
    if (s == "constant1") return Policy::constant(1);
    if (s.rfind("threshold:", 0) == 0) {
        const std::string idx = s.substr(10);
        try {
            std::size_t pos = 0;
            const int col = std::stoi(idx, &pos);
            if (pos == idx.size() && col >= 1) return Policy::threshold_coord(col - 1);
        } catch (const std::exception&) {
        }
        throw config_error(std::string(flag) + ": threshold column must be a 1-based integer");
    }
    throw config_error(std::string(flag) +
                       ": expected constant0, constant1, or threshold:COL, got '" + s + "'");
}

std::vector<std::int64_t> parse_int_list(const std::string& s, const char* flag) {
    std::vector<std::int64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            std::size_t pos = 0;
            out.push_back(std::stoll(item, &pos));
            if (pos != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw config_error(std::string(flag) + ": '" + item + "' is not an integer");
        }
    }
    if (out.empty()) throw config_error(std::string(flag) + ": empty list");
    return out;
}

std::vector<std::string> parse_name_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// Learner flags shared by estimate / replicate / cvar.
struct LearnerFlags {
    std::string propensity = "logistic";
    std::string outcome = "logistic";
    std::string eta = "dr-pseudo-outcome";
    std::string eta_learner = "k-nearest-mean";
    std::string features = "raw";
    int k = 0;
    int eta_k = 0;
    int rounds = 200;
    double learning_rate = 0.1;
    double ridge = 1e-6;
    double epsilon = 0.01;

    void attach(CLI::App* cmd, const LearnerConfig& defaults) {
        propensity = to_string(defaults.propensity);
        outcome = to_string(defaults.outcome);
        eta = to_string(defaults.eta_mode);
        eta_learner = to_string(defaults.eta_learner);
        features = to_string(defaults.features);
        k = defaults.k;
        eta_k = defaults.eta_k;
        rounds = defaults.rounds;
        learning_rate = defaults.learning_rate;
        ridge = defaults.ridge;
        epsilon = defaults.epsilon;
        cmd->add_option("--propensity", propensity,
                        "known-column | constant:P | logistic | boosted-stumps")
            ->capture_default_str();
        cmd->add_option("--outcome", outcome,
                        "logistic | boosted-stumps | k-nearest-mean | mean")
            ->capture_default_str();
        cmd->add_option("--eta", eta, "plugin | dr-pseudo-outcome")->capture_default_str();
        cmd->add_option("--eta-learner", eta_learner, "k-nearest-mean | boosted-stumps | mean")
            ->capture_default_str();
        cmd->add_option("--features", features, "raw | signs")->capture_default_str();
        cmd->add_option("--k", k, "outcome/propensity neighbors (0 = ceil(sqrt(n)))")
            ->capture_default_str();
        cmd->add_option("--eta-k", eta_k, "effect-regression neighbors (0 = ceil(sqrt(n)))")
            ->capture_default_str();
        cmd->add_option("--rounds", rounds, "boosting rounds")->capture_default_str();
        cmd->add_option("--learning-rate", learning_rate, "boosting shrinkage")
            ->capture_default_str();
        cmd->add_option("--ridge", ridge, "logistic ridge penalty")->capture_default_str();
        cmd->add_option("--epsilon", epsilon, "propensity clipping floor")->capture_default_str();
    }

    LearnerConfig to_config(std::uint64_t seed) const {
        LearnerConfig cfg;
        if (propensity.rfind("constant:", 0) == 0) {
            cfg.propensity = PropensityMode::Constant;
            const std::string p = propensity.substr(9);
            try {
                std::size_t pos = 0;
                cfg.constant_p = std::stod(p, &pos);
                if (pos != p.size()) throw std::invalid_argument(p);
            } catch (const std::exception&) {
                throw config_error("--propensity constant:P needs a numeric P");
            }
        } else {
            cfg.propensity = propensity_from_string(propensity);
        }
        cfg.outcome = outcome_from_string(outcome);
        cfg.eta_mode = eta_mode_from_string(eta);
        cfg.eta_learner = eta_learner_from_string(eta_learner);
        cfg.features = features_from_string(features);
        cfg.k = k;
        cfg.eta_k = eta_k;
        cfg.rounds = rounds;
        cfg.learning_rate = learning_rate;
        cfg.ridge = ridge;
        cfg.epsilon = epsilon;
        cfg.seed = seed;
        cfg.validate();
        return cfg;
    }
};

EstimandKind kind_from_flags(EstimandTag tag, const std::string& pi0, const std::string& pi1,
                             double alpha) {
    const bool takes_policies =
        tag == EstimandTag::FnaLowerPolicy || tag == EstimandTag::FnaUpperPolicy;
    if (takes_policies) {
        if (pi0.empty() || pi1.empty())
            throw config_error("policy estimands require both --pi0 and --pi1");
        Policy p0 = parse_policy(pi0, "--pi0");
        Policy p1 = parse_policy(pi1, "--pi1");
        return tag == EstimandTag::FnaLowerPolicy
                   ? EstimandKind::fna_lower_policy(std::move(p0), std::move(p1))
                   : EstimandKind::fna_upper_policy(std::move(p0), std::move(p1));
    }
    if (!pi0.empty() || !pi1.empty())
        throw config_error("--pi0/--pi1 apply only to fna-lower-policy and fna-upper-policy");
    switch (tag) {
        case EstimandTag::FnaLowerWholesale: return EstimandKind::fna_lower();
        case EstimandTag::FnaUpperWholesale: return EstimandKind::fna_upper();
        case EstimandTag::FnaUpperOptimal: return EstimandKind::fna_upper_optimal();
        case EstimandTag::CvarIte: return EstimandKind::cvar_ite(alpha);
        default: throw internal_error("kind_from_flags: unhandled tag");
    }
}

int probe_dim_for(const ObservationTable& data) {
    return data.d > 8 ? data.d : 8;
}

// ---------------------------------------------------------------------------
// CVaR composition (shared by `cvar` and `estimate --estimand cvar-ite`)
// ---------------------------------------------------------------------------

struct CvarResult {
    Interval interval{};
    double alpha = 0.25;
    bool clamped = false;
    EstimateReport fna_lower, fna_upper, ate;
};

CvarResult run_cvar(const ObservationTable& data, double alpha, const LearnerConfig& cfg,
                    int folds, double ci_level) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw config_error("--alpha must lie in (0,1)");
    const int pd = probe_dim_for(data);
    std::vector<AheSpec> specs{build_spec(EstimandKind::fna_lower(), pd),
                               build_spec(EstimandKind::fna_upper(), pd), ate_spec()};
    const MultiEstimate me = estimate_multi(data, specs, cfg, folds, ci_level);

    CvarResult res;
    res.alpha = alpha;
    res.fna_lower = me.reports[0];
    res.fna_upper = me.reports[1];
    res.ate = me.reports[2];

    // Point estimates of the three components can be jointly infeasible by
    // sampling noise; project onto the feasible region before composing.
    const double raw_lo = res.fna_lower.point;
    const double raw_hi = res.fna_upper.point;
    const double raw_ate = res.ate.point;
    double f_lo = std::min(std::max(raw_lo, 0.0), 1.0);
    double f_hi = std::min(std::max(raw_hi, f_lo), 1.0);
    double ate = std::min(std::max(raw_ate, -f_lo), 1.0 - f_hi);
    res.clamped = f_lo != raw_lo || f_hi != raw_hi || ate != raw_ate;
    res.interval = cvar_ite_bounds(Interval::make(f_lo, f_hi), ate, alpha);
    return res;
}

nlohmann::ordered_json cvar_json(const CvarResult& r) {
    nlohmann::ordered_json j;
    j["estimand"] = "cvar-ite";
    j["alpha"] = r.alpha;
    j["interval"] = {r.interval.lo, r.interval.hi};
    j["clamped"] = r.clamped;
    j["components"] = nlohmann::ordered_json{{"fna_lower", r.fna_lower.to_json()},
                                             {"fna_upper", r.fna_upper.to_json()},
                                             {"ate", r.ate.to_json()}};
    return j;
}

// ---------------------------------------------------------------------------
// Subcommand options
// ---------------------------------------------------------------------------

struct EstimateOpts {
    std::string data, estimand, pi0, pi1, out;
    int folds = 5;
    double ci = 0.95;
    double alpha = 0.25;
    std::uint64_t seed = 0;
    LearnerFlags learners;
};

struct SimulateOpts {
    double beta = 3.0;
    std::int64_t n = 0;
    std::uint64_t seed = 1;
    std::string out;
};

struct ReplicateOpts {
    double beta = 3.0;
    std::string ns = "800,3200";
    int reps = 20;
    std::string estimands = "fna-lower,fna-upper";
    std::string pi0, pi1, out;
    int folds = 5;
    std::int64_t truth_draws = 1000000;
    std::uint64_t seed = 1;
    LearnerFlags learners;
};

struct OracleBoundsOpts {
    int instances = 200;
    int max_atoms = 5;
    double h = 1e-4;
    std::uint64_t seed = 1;
    std::string out;
};

struct CvarOpts {
    std::string data, out;
    double alpha = 0.25;
    int folds = 5;
    double ci = 0.95;
    std::uint64_t seed = 0;
    LearnerFlags learners;
};

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_estimate(const EstimateOpts& o) {
    const EstimandTag tag = estimand_tag_from_string(o.estimand);
    const ObservationTable data = read_csv(o.data);
    const LearnerConfig cfg = o.learners.to_config(o.seed);

    if (tag == EstimandTag::CvarIte) {
        const CvarResult r = run_cvar(data, o.alpha, cfg, o.folds, o.ci);
        std::printf("cvar-ite(alpha=%g): [%.6f, %.6f]%s  (fna [%.4f, %.4f], ate %.4f, n=%lld)\n",
                    r.alpha, r.interval.lo, r.interval.hi, r.clamped ? " [clamped]" : "",
                    r.fna_lower.point, r.fna_upper.point, r.ate.point,
                    static_cast<long long>(data.n()));
        emit(o.out, cvar_json(r).dump(2) + "\n");
        return 0;
    }

    const EstimandKind kind = kind_from_flags(tag, o.pi0, o.pi1, o.alpha);
    const AheSpec spec = build_spec(kind, probe_dim_for(data));
    const EstimateReport rep = estimate(data, spec, cfg, o.folds, o.ci);
    std::printf("%s: point %.6f se %.6f %g%% ci [%.6f, %.6f] n=%lld folds=%d\n",
                rep.estimand.c_str(), rep.point, rep.se, 100.0 * rep.ci_level, rep.ci.lo,
                rep.ci.hi, static_cast<long long>(rep.n), rep.folds);
    emit(o.out, rep.to_json().dump(2) + "\n");
    return 0;
}

int cmd_simulate(const SimulateOpts& o) {
    DgpSpec dgp;
    dgp.beta = o.beta;
    dgp.seed = o.seed;
    const ObservationTable tab = sample(dgp, o.n);
    const std::string csv = to_csv(tab);
    if (o.out.empty()) {
        std::cout << csv;
    } else {
        write_text(o.out, csv);
        std::printf("wrote %lld rows (beta=%g, seed=%llu) to %s\n",
                    static_cast<long long>(tab.n()), o.beta,
                    static_cast<unsigned long long>(o.seed), o.out.c_str());
    }
    return 0;
}

int cmd_replicate(const ReplicateOpts& o) {
    DgpSpec dgp;
    dgp.beta = o.beta;
    dgp.seed = o.seed;
    const auto ns = parse_int_list(o.ns, "--ns");
    const auto names = parse_name_list(o.estimands);
    if (names.empty()) throw config_error("--estimands: empty list");
    std::vector<EstimandKind> kinds;
    for (const auto& name : names) {
        const EstimandTag tag = estimand_tag_from_string(name);
        if (tag == EstimandTag::CvarIte)
            throw config_error("replicate does not support cvar-ite (a composition)");
        const bool takes_policies =
            tag == EstimandTag::FnaLowerPolicy || tag == EstimandTag::FnaUpperPolicy;
        kinds.push_back(takes_policies ? kind_from_flags(tag, o.pi0, o.pi1, 0.25)
                                       : kind_from_flags(tag, "", "", 0.25));
    }
    const LearnerConfig cfg = o.learners.to_config(o.seed);
    const auto rows = replicate(dgp, kinds, ns, o.reps, cfg, o.folds, o.truth_draws);
    const std::string csv = replicate_csv(rows);
    if (o.out.empty()) {
        std::cout << csv;
    } else {
        write_text(o.out, csv);
        std::printf("wrote %zu rows (beta=%g, reps=%d) to %s\n", rows.size(), o.beta, o.reps,
                    o.out.c_str());
    }
    return 0;
}

int cmd_oracle_bounds(const OracleBoundsOpts& o) {
    if (o.instances < 1) throw config_error("--instances must be >= 1");
    double max_lo = 0.0, max_hi = 0.0;
    int identifiable = 0, mismatches = 0;
    for (int i = 0; i < o.instances; ++i) {
        const RandomInstance ri =
            random_coupling_instance(derive_seed(o.seed, static_cast<std::uint64_t>(i)),
                                     o.max_atoms, o.h);
        const Interval bf = coupling_bounds_bruteforce(ri.inst, ri.pi0, ri.pi1);
        const Interval cf = sharp_bounds_exact(ri.mu, ri.law, ri.pi0, ri.pi1);
        max_lo = std::max(max_lo, std::abs(bf.lo - cf.lo));
        max_hi = std::max(max_hi, std::abs(bf.hi - cf.hi));
        const bool ident = is_identifiable(ri.mu, ri.law, ri.pi0, ri.pi1);
        identifiable += ident ? 1 : 0;
        mismatches += (ident != (bf.width() <= o.h)) ? 1 : 0;
    }
    const double max_disc = std::max(max_lo, max_hi);
    std::printf("oracle-bounds: %d instances, max discrepancy %.3g (grid h=%g), "
                "%d identifiable, %d identifiability mismatches\n",
                o.instances, max_disc, o.h, identifiable, mismatches);
    nlohmann::ordered_json j;
    j["instances"] = o.instances;
    j["max_atoms"] = o.max_atoms;
    j["h"] = o.h;
    j["seed"] = o.seed;
    j["max_discrepancy_lower"] = max_lo;
    j["max_discrepancy_upper"] = max_hi;
    j["max_discrepancy"] = max_disc;
    j["identifiable_count"] = identifiable;
    j["identifiability_mismatches"] = mismatches;
    if (!o.out.empty()) write_text(o.out, j.dump(2) + "\n");
    if (max_disc > o.h || mismatches > 0) {
        std::cerr << "oracle-bounds: closed form and brute force disagree beyond the grid\n";
        return 3;
    }
    return 0;
}

int cmd_cvar(const CvarOpts& o) {
    const ObservationTable data = read_csv(o.data);
    const LearnerConfig cfg = o.learners.to_config(o.seed);
    const CvarResult r = run_cvar(data, o.alpha, cfg, o.folds, o.ci);
    std::printf("cvar-ite(alpha=%g): [%.6f, %.6f]%s  (fna [%.4f, %.4f], ate %.4f, n=%lld)\n",
                r.alpha, r.interval.lo, r.interval.hi, r.clamped ? " [clamped]" : "",
                r.fna_lower.point, r.fna_upper.point, r.ate.point,
                static_cast<long long>(data.n()));
    emit(o.out, cvar_json(r).dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sharp bounds on the fraction negatively affected by a treatment change"};
    app.require_subcommand(1);

    EstimateOpts eo;
    auto* est = app.add_subcommand("estimate", "Estimate a bound from a CSV dataset");
    est->add_option("--data", eo.data, "input CSV (x1..xd,a,y[,e])")->required();
    est->add_option("--estimand", eo.estimand,
                    "fna-lower | fna-upper | fna-lower-policy | fna-upper-policy | "
                    "fna-upper-optimal | cvar-ite")
        ->required();
    est->add_option("--pi0", eo.pi0, "baseline policy (constant0|constant1|threshold:COL)");
    est->add_option("--pi1", eo.pi1, "new policy (constant0|constant1|threshold:COL)");
    est->add_option("--folds", eo.folds, "cross-fitting folds")->capture_default_str();
    est->add_option("--ci", eo.ci, "confidence level")->capture_default_str();
    est->add_option("--alpha", eo.alpha, "tail fraction for cvar-ite")->capture_default_str();
    est->add_option("--seed", eo.seed, "seed echoed into the report")->capture_default_str();
    est->add_option("--out", eo.out, "write the JSON report here (default: stdout)");
    eo.learners.attach(est, LearnerConfig{});

    SimulateOpts so;
    auto* sim = app.add_subcommand("simulate", "Draw a synthetic dataset");
    sim->add_option("--beta", so.beta, "predictiveness")->capture_default_str();
    sim->add_option("--n", so.n, "rows")->required();
    sim->add_option("--seed", so.seed, "stream seed")->capture_default_str();
    sim->add_option("--out", so.out, "write the CSV here (default: stdout)");

    ReplicateOpts ro;
    auto* rep = app.add_subcommand("replicate", "RMSE/coverage study over seeded draws");
    rep->add_option("--beta", ro.beta, "predictiveness")->capture_default_str();
    rep->add_option("--ns", ro.ns, "comma-separated sample sizes")->capture_default_str();
    rep->add_option("--reps", ro.reps, "replications per size")->capture_default_str();
    rep->add_option("--estimands", ro.estimands, "comma-separated estimand names")
        ->capture_default_str();
    rep->add_option("--pi0", ro.pi0, "baseline policy for policy estimands");
    rep->add_option("--pi1", ro.pi1, "new policy for policy estimands");
    rep->add_option("--folds", ro.folds, "cross-fitting folds")->capture_default_str();
    rep->add_option("--truth-draws", ro.truth_draws, "Monte-Carlo draws for the true endpoint")
        ->capture_default_str();
    rep->add_option("--seed", ro.seed, "study seed")->capture_default_str();
    rep->add_option("--out", ro.out, "write the CSV here (default: stdout)");
    ro.learners.attach(rep, default_replicate_config());

    OracleBoundsOpts oo;
    auto* ob = app.add_subcommand("oracle-bounds",
                                  "Closed-form bounds vs. brute-force coupling search");
    ob->add_option("--instances", oo.instances, "random instances")->capture_default_str();
    ob->add_option("--max-atoms", oo.max_atoms, "atoms per instance")->capture_default_str();
    ob->add_option("--grid", oo.h, "coupling grid resolution h")->capture_default_str();
    ob->add_option("--seed", oo.seed, "instance stream seed")->capture_default_str();
    ob->add_option("--out", oo.out, "write the JSON report here");

    CvarOpts co;
    auto* cv = app.add_subcommand("cvar", "Bounds on the worst-alpha-fraction average effect");
    cv->add_option("--data", co.data, "input CSV (x1..xd,a,y[,e])")->required();
    cv->add_option("--alpha", co.alpha, "tail fraction")->capture_default_str();
    cv->add_option("--folds", co.folds, "cross-fitting folds")->capture_default_str();
    cv->add_option("--ci", co.ci, "confidence level for the component reports")
        ->capture_default_str();
    cv->add_option("--seed", co.seed, "seed echoed into the reports")->capture_default_str();
    cv->add_option("--out", co.out, "write the JSON report here (default: stdout)");
    co.learners.attach(cv, LearnerConfig{});

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (est->parsed()) return cmd_estimate(eo);
        if (sim->parsed()) return cmd_simulate(so);
        if (rep->parsed()) return cmd_replicate(ro);
        if (ob->parsed()) return cmd_oracle_bounds(oo);
        if (cv->parsed()) return cmd_cvar(co);
        std::cerr << "no subcommand selected\n";
        return 1;
    } catch (const config_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const data_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}
