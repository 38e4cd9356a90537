#include "harmbound/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "harmbound/mathstats.hpp"
#include "harmbound/parallel.hpp"

namespace harmbound {

// ---------------------------------------------------------------------------
// LearnerConfig
// ---------------------------------------------------------------------------

void LearnerConfig::validate() const {
    if (!(constant_p > 0.0 && constant_p < 1.0))
        throw config_error("learner config: constant propensity must lie in (0,1)");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0))
        throw config_error("learner config: learning rate must lie in (0,1]");
    if (rounds < 1) throw config_error("learner config: rounds must be >= 1");
    if (k < 0 || eta_k < 0) throw config_error("learner config: neighbor counts must be >= 0");
    if (!(ridge >= 0.0)) throw config_error("learner config: ridge must be >= 0");
    if (!(epsilon > 0.0 && epsilon < 0.5))
        throw config_error("learner config: epsilon must lie in (0, 0.5)");
}

std::string to_string(PropensityMode m) {
    switch (m) {
        case PropensityMode::KnownColumn: return "known-column";
        case PropensityMode::Constant: return "constant";
        case PropensityMode::Logistic: return "logistic";
        case PropensityMode::BoostedStumps: return "boosted-stumps";
    }
    return "?";
}
std::string to_string(OutcomeLearner l) {
    switch (l) {
        case OutcomeLearner::Logistic: return "logistic";
        case OutcomeLearner::BoostedStumps: return "boosted-stumps";
        case OutcomeLearner::KNearestMean: return "k-nearest-mean";
        case OutcomeLearner::Mean: return "mean";
    }
    return "?";
}
std::string to_string(EtaMode m) {
    return m == EtaMode::Plugin ? "plugin" : "dr-pseudo-outcome";
}
std::string to_string(EtaLearner l) {
    switch (l) {
        case EtaLearner::KNearestMean: return "k-nearest-mean";
        case EtaLearner::BoostedStumps: return "boosted-stumps";
        case EtaLearner::Mean: return "mean";
    }
    return "?";
}
std::string to_string(FeatureMap f) { return f == FeatureMap::Raw ? "raw" : "signs"; }

PropensityMode propensity_from_string(const std::string& s) {
    if (s == "known-column") return PropensityMode::KnownColumn;
    if (s == "constant" || s.rfind("constant:", 0) == 0) return PropensityMode::Constant;
    if (s == "logistic") return PropensityMode::Logistic;
    if (s == "boosted-stumps") return PropensityMode::BoostedStumps;
    throw config_error("unknown propensity mode '" + s + "'");
}
OutcomeLearner outcome_from_string(const std::string& s) {
    if (s == "logistic") return OutcomeLearner::Logistic;
    if (s == "boosted-stumps") return OutcomeLearner::BoostedStumps;
    if (s == "k-nearest-mean") return OutcomeLearner::KNearestMean;
    if (s == "mean") return OutcomeLearner::Mean;
    throw config_error("unknown outcome learner '" + s + "'");
}
EtaMode eta_mode_from_string(const std::string& s) {
    if (s == "plugin") return EtaMode::Plugin;
    if (s == "dr-pseudo-outcome") return EtaMode::DrPseudoOutcome;
    throw config_error("unknown eta mode '" + s + "'");
}
EtaLearner eta_learner_from_string(const std::string& s) {
    if (s == "k-nearest-mean") return EtaLearner::KNearestMean;
    if (s == "boosted-stumps") return EtaLearner::BoostedStumps;
    if (s == "mean") return EtaLearner::Mean;
    throw config_error("unknown eta learner '" + s + "'");
}
FeatureMap features_from_string(const std::string& s) {
    if (s == "raw") return FeatureMap::Raw;
    if (s == "signs") return FeatureMap::Signs;
    throw config_error("unknown feature map '" + s + "'");
}

nlohmann::ordered_json LearnerConfig::to_json() const {
    nlohmann::ordered_json j;
    j["propensity"] = to_string(propensity);
    j["constant_p"] = constant_p;
    j["outcome"] = to_string(outcome);
    j["joint_outcome"] = joint_outcome;
    j["eta"] = to_string(eta_mode);
    j["eta_learner"] = to_string(eta_learner);
    j["features"] = to_string(features);
    j["learning_rate"] = learning_rate;
    j["rounds"] = rounds;
    j["k"] = k;
    j["eta_k"] = eta_k;
    j["ridge"] = ridge;
    j["epsilon"] = epsilon;
    j["seed"] = seed;
    return j;
}

LearnerConfig LearnerConfig::from_json(const nlohmann::json& j) {
    LearnerConfig c;
    try {
        if (j.contains("propensity")) c.propensity = propensity_from_string(j.at("propensity"));
        if (j.contains("constant_p")) c.constant_p = j.at("constant_p").get<double>();
        if (j.contains("outcome")) c.outcome = outcome_from_string(j.at("outcome"));
        if (j.contains("joint_outcome")) c.joint_outcome = j.at("joint_outcome").get<bool>();
        if (j.contains("eta")) c.eta_mode = eta_mode_from_string(j.at("eta"));
        if (j.contains("eta_learner")) c.eta_learner = eta_learner_from_string(j.at("eta_learner"));
        if (j.contains("features")) c.features = features_from_string(j.at("features"));
        if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
        if (j.contains("rounds")) c.rounds = j.at("rounds").get<int>();
        if (j.contains("k")) c.k = j.at("k").get<int>();
        if (j.contains("eta_k")) c.eta_k = j.at("eta_k").get<int>();
        if (j.contains("ridge")) c.ridge = j.at("ridge").get<double>();
        if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("learner config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------------------
// Feature preprocessing
// ---------------------------------------------------------------------------

namespace {

// Sign-indicator encoding: x -> 1[x > 0] per coordinate.  Supplies the
// axis-aligned cell structure that distance- and threshold-based learners
// otherwise have to discover from data.
std::vector<double> transform_matrix(const ObservationTable& t, FeatureMap f) {
    std::vector<double> m(t.x);
    if (f == FeatureMap::Signs) {
        for (auto& v : m) v = v > 0.0 ? 1.0 : 0.0;
    }
    return m;
}

std::vector<double> transform_row(std::span<const double> x, FeatureMap f) {
    std::vector<double> r(x.begin(), x.end());
    if (f == FeatureMap::Signs) {
        for (auto& v : r) v = v > 0.0 ? 1.0 : 0.0;
    }
    return r;
}

// Wraps a predictor so callers pass raw covariates while the model sees the
// transformed design.
PredictFn with_features(PredictFn inner, FeatureMap f) {
    if (f == FeatureMap::Raw) return inner;
    return [inner = std::move(inner), f](std::span<const double> x) {
        const auto r = transform_row(x, f);
        return inner(r);
    };
}

PredictFn clipped(PredictFn inner, double lo, double hi) {
    return [inner = std::move(inner), lo, hi](std::span<const double> x) {
        return clip(inner(x), lo, hi);
    };
}

int auto_k(std::int64_t n) {
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
}

// Fits one real-valued regression per cfg's learner choice on an already
// transformed design matrix.
PredictFn fit_regression(EtaLearner learner, std::vector<double> X, std::int64_t n, int d,
                         std::vector<double> target, const LearnerConfig& cfg, int k_override) {
    switch (learner) {
        case EtaLearner::Mean: {
            double s = 0.0;
            for (double v : target) s += v;
            return fit_constant(s / static_cast<double>(n));
        }
        case EtaLearner::BoostedStumps:
            return fit_stumps(X.data(), n, d, target.data(), cfg.rounds, cfg.learning_rate);
        case EtaLearner::KNearestMean: {
            const int k = k_override > 0 ? k_override : auto_k(n);
            return fit_knn(std::move(X), n, d, std::move(target), k);
        }
    }
    throw internal_error("unreachable regression learner");
}

// Binary-target fit dispatch for the outcome/propensity learners.
PredictFn fit_binary(OutcomeLearner learner, std::vector<double> X, std::int64_t n, int d,
                     std::vector<double> target01, const LearnerConfig& cfg) {
    switch (learner) {
        case OutcomeLearner::Mean: {
            double s = 0.0;
            for (double v : target01) s += v;
            return fit_constant(s / static_cast<double>(n));
        }
        case OutcomeLearner::Logistic:
            return fit_logistic(X.data(), n, d, target01.data(), cfg.ridge, 200, 1e-8);
        case OutcomeLearner::BoostedStumps:
            return fit_stumps(X.data(), n, d, target01.data(), cfg.rounds, cfg.learning_rate);
        case OutcomeLearner::KNearestMean: {
            const int k = cfg.k > 0 ? cfg.k : auto_k(n);
            return fit_knn(std::move(X), n, d, std::move(target01), k);
        }
    }
    throw internal_error("unreachable binary learner");
}

} // namespace

// ---------------------------------------------------------------------------
// Pseudo-outcomes
// ---------------------------------------------------------------------------

double dr_pseudo_outcome(int a, int y, double e, double mu0, double mu1, bool sum_mode) {
    const double mu_a = a ? mu1 : mu0;
    const double w = (static_cast<double>(a) - e) / (e * (1.0 - e));
    if (!sum_mode) return mu1 - mu0 + w * (static_cast<double>(y) - mu_a);
    return mu1 + mu0 + w * (2.0 * a - 1.0) * (static_cast<double>(y) - mu_a);
}

// ---------------------------------------------------------------------------
// Propensity
// ---------------------------------------------------------------------------

PredictFn fit_propensity(const ObservationTable& train, const LearnerConfig& cfg) {
    cfg.validate();
    if (train.n() < 1) throw config_error("fit_propensity: empty training table");
    const double eps = cfg.epsilon;

    switch (cfg.propensity) {
        case PropensityMode::KnownColumn: {
            if (!train.has_e())
                throw config_error(
                    "fit_propensity: known-column mode requires a propensity column");
            // Reproduces each training row's supplied value (distance zero to
            // itself); novel covariates fall back to the nearest row's value.
            auto lookup = fit_knn(train.x, train.n(), train.d, train.e_known, 1);
            return clipped(std::move(lookup), eps, 1.0 - eps);
        }
        case PropensityMode::Constant:
            return fit_constant(clip(cfg.constant_p, eps, 1.0 - eps));
        case PropensityMode::Logistic: {
            std::int64_t ones = 0;
            for (auto v : train.a) ones += v;
            if (ones == 0 || ones == train.n()) {
                const double mean = static_cast<double>(ones) / static_cast<double>(train.n());
                std::cerr << "warning: degenerate arm labels; propensity falls back to the "
                             "clipped empirical mean\n";
                return fit_constant(clip(mean, eps, 1.0 - eps));
            }
            std::vector<double> t(train.a.begin(), train.a.end());
            auto X = transform_matrix(train, cfg.features);
            auto fit = fit_logistic(X.data(), train.n(), train.d, t.data(), cfg.ridge, 200, 1e-8);
            return clipped(with_features(std::move(fit), cfg.features), eps, 1.0 - eps);
        }
        case PropensityMode::BoostedStumps: {
            std::vector<double> t(train.a.begin(), train.a.end());
            auto X = transform_matrix(train, cfg.features);
            auto fit = fit_stumps(X.data(), train.n(), train.d, t.data(), cfg.rounds,
                                  cfg.learning_rate);
            return clipped(with_features(std::move(fit), cfg.features), eps, 1.0 - eps);
        }
    }
    throw internal_error("unreachable propensity mode");
}

// ---------------------------------------------------------------------------
// Outcome
// ---------------------------------------------------------------------------

MuFn fit_outcome(const ObservationTable& train, const LearnerConfig& cfg) {
    cfg.validate();
    if (train.n() < 1) throw config_error("fit_outcome: empty training table");

    double pooled = 0.0;
    for (auto v : train.y) pooled += v;
    pooled /= static_cast<double>(train.n());

    if (cfg.joint_outcome) {
        // One model over [x, a].
        const int d = train.d;
        std::vector<double> X;
        X.reserve(static_cast<std::size_t>(train.n()) * (d + 1));
        const auto base = transform_matrix(train, cfg.features);
        for (std::int64_t i = 0; i < train.n(); ++i) {
            X.insert(X.end(), base.begin() + i * d, base.begin() + (i + 1) * d);
            X.push_back(static_cast<double>(train.a[i]));
        }
        std::vector<double> t(train.y.begin(), train.y.end());
        auto fit = fit_binary(cfg.outcome, std::move(X), train.n(), d + 1, std::move(t), cfg);
        const FeatureMap f = cfg.features;
        return [fit = std::move(fit), d, f](std::span<const double> x, int a) {
            auto r = transform_row(x, f);
            r.push_back(static_cast<double>(a));
            return clip(fit(r), 0.0, 1.0);
        };
    }

    // Two per-arm regressions (the default).
    PredictFn per_arm[2];
    for (int arm = 0; arm < 2; ++arm) {
        std::vector<std::int64_t> idx;
        for (std::int64_t i = 0; i < train.n(); ++i)
            if (train.a[i] == arm) idx.push_back(i);
        if (idx.empty()) {
            std::cerr << "warning: no rows for arm " << arm
                      << "; outcome model uses the pooled mean\n";
            per_arm[arm] = fit_constant(pooled);
            continue;
        }
        const auto sub = train.subset(idx);
        std::vector<double> t(sub.y.begin(), sub.y.end());
        auto X = transform_matrix(sub, cfg.features);
        auto fit = fit_binary(cfg.outcome, std::move(X), sub.n(), sub.d, std::move(t), cfg);
        per_arm[arm] = with_features(std::move(fit), cfg.features);
    }
    return [m0 = per_arm[0], m1 = per_arm[1]](std::span<const double> x, int a) {
        return clip(a ? m1(x) : m0(x), 0.0, 1.0);
    };
}

// ---------------------------------------------------------------------------
// Effect learners (tau, sigma)
// ---------------------------------------------------------------------------

namespace {

// Pseudo-outcome vectors over the training rows, each formed with nuisances
// fitted on the opposite half of an internal 2-fold split.
struct PseudoOutcomes {
    std::vector<double> diff;
    std::vector<double> sum;
};

PseudoOutcomes nested_pseudo(const ObservationTable& train, const LearnerConfig& cfg,
                             bool need_diff, bool need_sum) {
    const std::int64_t n = train.n();
    if (n < 4) throw config_error("dr-pseudo-outcome mode needs at least 4 training rows");
    PseudoOutcomes out;
    if (need_diff) out.diff.assign(n, 0.0);
    if (need_sum) out.sum.assign(n, 0.0);

    const bool known_e = cfg.propensity == PropensityMode::KnownColumn && train.has_e();
    const double eps = cfg.epsilon;

    std::vector<std::int64_t> half[2];
    for (std::int64_t i = 0; i < n; ++i) half[i % 2].push_back(i);

    for (int b = 0; b < 2; ++b) {
        const auto fit_table = train.subset(half[1 - b]);
        const MuFn mu = fit_outcome(fit_table, cfg);
        PredictFn e_fit;
        if (!known_e) e_fit = fit_propensity(fit_table, cfg);
        const auto& rows = half[b];
        parallel_for(static_cast<std::int64_t>(rows.size()), [&](std::int64_t t) {
            const std::int64_t i = rows[t];
            const auto x = train.row(i);
            const double mu0 = mu(x, 0);
            const double mu1 = mu(x, 1);
            const double e = clip(known_e ? train.e_known[i] : e_fit(x), eps, 1.0 - eps);
            if (need_diff) out.diff[i] = dr_pseudo_outcome(train.a[i], train.y[i], e, mu0, mu1, false);
            if (need_sum) out.sum[i] = dr_pseudo_outcome(train.a[i], train.y[i], e, mu0, mu1, true);
        });
    }
    return out;
}

PredictFn regress_pseudo(const ObservationTable& train, const LearnerConfig& cfg,
                         std::vector<double> target, double lo, double hi) {
    auto X = transform_matrix(train, cfg.features);
    auto fit = fit_regression(cfg.eta_learner, std::move(X), train.n(), train.d,
                              std::move(target), cfg, cfg.eta_k);
    return clipped(with_features(std::move(fit), cfg.features), lo, hi);
}

} // namespace

PredictFn fit_cate(const ObservationTable& train, const PredictFn& /*e_hat*/,
                   const MuFn& mu_hat, const LearnerConfig& cfg) {
    cfg.validate();
    if (cfg.eta_mode == EtaMode::Plugin) {
        if (!mu_hat) throw config_error("fit_cate: plugin mode needs a fitted outcome model");
        return [mu_hat](std::span<const double> x) {
            return clip(mu_hat(x, 1) - mu_hat(x, 0), -1.0, 1.0);
        };
    }
    auto pseudo = nested_pseudo(train, cfg, true, false);
    return regress_pseudo(train, cfg, std::move(pseudo.diff), -1.0, 1.0);
}

PredictFn fit_cats(const ObservationTable& train, const PredictFn& /*e_hat*/,
                   const MuFn& mu_hat, const LearnerConfig& cfg) {
    cfg.validate();
    if (cfg.eta_mode == EtaMode::Plugin) {
        if (!mu_hat) throw config_error("fit_cats: plugin mode needs a fitted outcome model");
        return [mu_hat](std::span<const double> x) {
            return clip(mu_hat(x, 1) + mu_hat(x, 0), 0.0, 2.0);
        };
    }
    auto pseudo = nested_pseudo(train, cfg, false, true);
    return regress_pseudo(train, cfg, std::move(pseudo.sum), 0.0, 2.0);
}

// ---------------------------------------------------------------------------
// Bundle assembly
// ---------------------------------------------------------------------------

FittedParts fit_parts(const ObservationTable& train, const LearnerConfig& cfg,
                      bool need_tau, bool need_sigma) {
    cfg.validate();
    FittedParts parts;
    parts.e_hat = fit_propensity(train, cfg);
    parts.mu_hat = fit_outcome(train, cfg);
    if (cfg.eta_mode == EtaMode::Plugin) {
        if (need_tau) parts.tau_hat = fit_cate(train, parts.e_hat, parts.mu_hat, cfg);
        if (need_sigma) parts.sigma_hat = fit_cats(train, parts.e_hat, parts.mu_hat, cfg);
        return parts;
    }
    if (need_tau || need_sigma) {
        // Share the nested nuisance fits between the two pseudo-outcome
        // targets; they differ only in the target formula.
        auto pseudo = nested_pseudo(train, cfg, need_tau, need_sigma);
        if (need_tau)
            parts.tau_hat = regress_pseudo(train, cfg, std::move(pseudo.diff), -1.0, 1.0);
        if (need_sigma)
            parts.sigma_hat = regress_pseudo(train, cfg, std::move(pseudo.sum), 0.0, 2.0);
    }
    return parts;
}

NuisanceBundle bundle_from_parts(const FittedParts& parts, const AheSpec& spec,
                                 const LearnerConfig& cfg) {
    spec.check_shape();
    NuisanceBundle b;
    b.e_hat = parts.e_hat;
    b.mu_hat = parts.mu_hat;
    b.eta_hat.reserve(spec.m);
    for (int l = 1; l <= spec.m; ++l) {
        const CoefFn gl = spec.g[l];
        const EtaRole role = spec.eta_roles[l - 1];
        if (cfg.eta_mode == EtaMode::Plugin || role == EtaRole::CUSTOM) {
            const MuFn mu = parts.mu_hat;
            b.eta_hat.push_back([gl, mu](std::span<const double> x) {
                const CoefTriple c = gl(x);
                return clip(c[0] * mu(x, 0) + c[1] * mu(x, 1) + c[2], -3.0, 3.0);
            });
        } else if (role == EtaRole::CATE) {
            if (!parts.tau_hat) throw internal_error("bundle: tau requested but not fitted");
            const PredictFn tau = parts.tau_hat;
            b.eta_hat.push_back([gl, tau](std::span<const double> x) {
                const CoefTriple c = gl(x);
                return clip(c[1] * tau(x) + c[2], -3.0, 3.0);
            });
        } else { // EtaRole::CATS
            if (!parts.sigma_hat) throw internal_error("bundle: sigma requested but not fitted");
            const PredictFn sigma = parts.sigma_hat;
            b.eta_hat.push_back([gl, sigma](std::span<const double> x) {
                const CoefTriple c = gl(x);
                return clip(c[1] * sigma(x) + c[2], -3.0, 3.0);
            });
        }
    }
    return b;
}

NuisanceBundle fit_bundle(const ObservationTable& train, const AheSpec& spec,
                          const LearnerConfig& cfg) {
    spec.check_shape();
    bool need_tau = false, need_sigma = false;
    if (cfg.eta_mode == EtaMode::DrPseudoOutcome) {
        for (EtaRole r : spec.eta_roles) {
            need_tau |= (r == EtaRole::CATE);
            need_sigma |= (r == EtaRole::CATS);
        }
    }
    const FittedParts parts = fit_parts(train, cfg, need_tau, need_sigma);
    return bundle_from_parts(parts, spec, cfg);
}

} // namespace harmbound
