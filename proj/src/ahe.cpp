#include "harmbound/ahe.hpp"

#include <algorithm>
#include <cmath>

#include "harmbound/mathstats.hpp"
#include "harmbound/parallel.hpp"

namespace harmbound {

// ---------------------------------------------------------------------------
// AtomLaw
// ---------------------------------------------------------------------------

void AtomLaw::validate() const {
    if (p.empty() || xs.size() != p.size())
        throw input_error("atom law: xs and p must be nonempty and equally long");
    double s = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) throw input_error("atom law: probabilities must be >= 0");
        s += v;
    }
    if (std::abs(s - 1.0) > 1e-12)
        throw input_error("atom law: probabilities must sum to 1 (got " + std::to_string(s) + ")");
    for (std::size_t j = 1; j < xs.size(); ++j) {
        if (xs[j].size() != xs[0].size())
            throw input_error("atom law: atoms must share one dimension");
    }
}

// ---------------------------------------------------------------------------
// EstimateReport
// ---------------------------------------------------------------------------

nlohmann::ordered_json EstimateReport::to_json() const {
    nlohmann::ordered_json j;
    j["estimand"] = estimand;
    j["point"] = point;
    j["se"] = se;
    j["ci_level"] = ci_level;
    j["ci"] = {ci.lo, ci.hi};
    j["n"] = n;
    j["folds"] = folds;
    j["seed"] = seed;
    j["learners"] = learners.to_json();
    j["per_fold"] = per_fold;
    return j;
}

// ---------------------------------------------------------------------------
// phi
// ---------------------------------------------------------------------------

double phi_score(std::span<const double> x, int a, int y, const NuisanceBundle& bundle,
                 const AheSpec& spec, std::optional<double> e_known) {
    if (static_cast<int>(bundle.eta_hat.size()) != spec.m)
        throw internal_error("phi_score: bundle must carry exactly m hinge nuisances");
    const double e = e_known ? *e_known : bundle.e_hat(x);
    if (!(e > 0.0 && e < 1.0))
        throw internal_error("phi_score: propensity estimate outside (0,1)");

    CoefTriple c = spec.g[0](x);
    for (int l = 1; l <= spec.m; ++l) {
        if (bundle.eta_hat[l - 1](x) <= 0.0) {
            const CoefTriple gl = spec.g[l](x);
            const double r = static_cast<double>(spec.rho[l - 1]);
            c[0] += r * gl[0];
            c[1] += r * gl[1];
            c[2] += r * gl[2];
        }
    }
    const double mu0 = bundle.mu_hat(x, 0);
    const double mu1 = bundle.mu_hat(x, 1);
    const double t0 = ((static_cast<double>(a) - e) * mu0 + (1.0 - a) * y) / (1.0 - e);
    const double t1 = ((e - static_cast<double>(a)) * mu1 + static_cast<double>(a) * y) / e;
    return c[2] + c[0] * t0 + c[1] * t1;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

namespace {

EstimateReport summarize(const std::string& name, std::vector<double> phi,
                         const std::vector<int>& folds, int K, double ci_level,
                         const LearnerConfig& cfg) {
    const std::int64_t n = static_cast<std::int64_t>(phi.size());
    EstimateReport rep;
    rep.estimand = name;
    rep.n = n;
    rep.folds = K;
    rep.ci_level = ci_level;
    rep.seed = cfg.seed;
    rep.learners = cfg;

    rep.point = pairwise_mean(phi);
    std::vector<double> sq(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double d = phi[i] - rep.point;
        sq[i] = d * d;
    }
    rep.se = n > 1 ? std::sqrt(pairwise_sum(sq) / (static_cast<double>(n) * (n - 1))) : 0.0;
    const double z = normal_quantile(0.5 * (1.0 + ci_level));
    rep.ci = Interval::make(rep.point - z * rep.se, rep.point + z * rep.se);

    rep.per_fold.assign(K, 0.0);
    std::vector<double> bucket;
    for (int k = 0; k < K; ++k) {
        bucket.clear();
        for (std::int64_t i = 0; i < n; ++i)
            if (folds[i] == k) bucket.push_back(phi[i]);
        rep.per_fold[k] = pairwise_mean(bucket);
    }
    return rep;
}

void check_estimate_pre(const ObservationTable& data, int K, double ci_level) {
    if (K < 1) throw config_error("estimate: folds must be >= 1");
    if (data.n() < 2 * static_cast<std::int64_t>(K))
        throw config_error("estimate: need n >= 2K rows");
    if (!(ci_level > 0.0 && ci_level < 1.0))
        throw config_error("estimate: ci_level must lie in (0,1)");
}

} // namespace

EstimateReport estimate(const ObservationTable& data, const AheSpec& spec,
                        const LearnerConfig& cfg, int K, double ci_level) {
    spec.check_shape();
    cfg.validate();
    check_estimate_pre(data, K, ci_level);

    const std::int64_t n = data.n();
    const auto folds = fold_assign(n, K);
    const bool pass_known_e = data.has_e() && cfg.propensity == PropensityMode::KnownColumn;
    const double eps = cfg.epsilon;

    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    std::vector<std::int64_t> train_idx, eval_idx;
    for (int k = 0; k < K; ++k) {
        train_idx.clear();
        eval_idx.clear();
        for (std::int64_t i = 0; i < n; ++i)
            (folds[i] == k ? eval_idx : train_idx).push_back(i);
        const auto train = data.subset(train_idx);
        const NuisanceBundle bundle = fit_bundle(train, spec, cfg);
        parallel_for(static_cast<std::int64_t>(eval_idx.size()), [&](std::int64_t t) {
            const std::int64_t i = eval_idx[t];
            std::optional<double> e_opt;
            if (pass_known_e) e_opt = clip(data.e_known[i], eps, 1.0 - eps);
            phi[i] = phi_score(data.row(i), data.a[i], data.y[i], bundle, spec, e_opt);
        });
    }
    return summarize(spec.name, std::move(phi), folds, K, ci_level, cfg);
}

EstimateReport estimate_with_bundle(const ObservationTable& data, const AheSpec& spec,
                                    const NuisanceBundle& bundle, int K, double ci_level,
                                    bool use_known_e) {
    spec.check_shape();
    check_estimate_pre(data, K, ci_level);
    const std::int64_t n = data.n();
    const auto folds = fold_assign(n, K);
    std::vector<double> phi(static_cast<std::size_t>(n), 0.0);
    parallel_for(n, [&](std::int64_t i) {
        std::optional<double> e_opt;
        if (use_known_e && data.has_e()) e_opt = data.e_known[i];
        phi[i] = phi_score(data.row(i), data.a[i], data.y[i], bundle, spec, e_opt);
    });
    LearnerConfig cfg; // echo of defaults: no fitting happened
    return summarize(spec.name, std::move(phi), folds, K, ci_level, cfg);
}

// ---------------------------------------------------------------------------
// plugin comparator
// ---------------------------------------------------------------------------

namespace {

double hinge_integrand(std::span<const double> x, double mu0, double mu1, const AheSpec& spec) {
    const CoefTriple c0 = spec.g[0](x);
    double v = c0[0] * mu0 + c0[1] * mu1 + c0[2];
    for (int l = 1; l <= spec.m; ++l) {
        const CoefTriple c = spec.g[l](x);
        const double eta = c[0] * mu0 + c[1] * mu1 + c[2];
        v += spec.rho[l - 1] * std::min(0.0, eta);
    }
    return v;
}

} // namespace

double plugin_estimate(const ObservationTable& data, const AheSpec& spec,
                       const LearnerConfig& cfg, int K) {
    spec.check_shape();
    cfg.validate();
    check_estimate_pre(data, K, 0.95);

    const std::int64_t n = data.n();
    const auto folds = fold_assign(n, K);
    std::vector<double> vals(static_cast<std::size_t>(n), 0.0);
    std::vector<std::int64_t> train_idx, eval_idx;
    for (int k = 0; k < K; ++k) {
        train_idx.clear();
        eval_idx.clear();
        for (std::int64_t i = 0; i < n; ++i)
            (folds[i] == k ? eval_idx : train_idx).push_back(i);
        const auto train = data.subset(train_idx);
        const MuFn mu = fit_outcome(train, cfg);
        parallel_for(static_cast<std::int64_t>(eval_idx.size()), [&](std::int64_t t) {
            const std::int64_t i = eval_idx[t];
            const auto x = data.row(i);
            vals[i] = hinge_integrand(x, mu(x, 0), mu(x, 1), spec);
        });
    }
    return pairwise_mean(vals);
}

MultiEstimate estimate_multi(const ObservationTable& data, const std::vector<AheSpec>& specs,
                             const LearnerConfig& cfg, int K, double ci_level) {
    for (const auto& s : specs) s.check_shape();
    cfg.validate();
    check_estimate_pre(data, K, ci_level);
    if (specs.empty()) return {};

    const std::int64_t n = data.n();
    const std::size_t S = specs.size();
    const auto folds = fold_assign(n, K);
    const bool pass_known_e = data.has_e() && cfg.propensity == PropensityMode::KnownColumn;
    const double eps = cfg.epsilon;

    bool need_tau = false, need_sigma = false;
    if (cfg.eta_mode == EtaMode::DrPseudoOutcome) {
        for (const auto& s : specs)
            for (EtaRole r : s.eta_roles) {
                need_tau |= (r == EtaRole::CATE);
                need_sigma |= (r == EtaRole::CATS);
            }
    }

    std::vector<std::vector<double>> phi(S, std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<std::vector<double>> plug(S, std::vector<double>(static_cast<std::size_t>(n), 0.0));
    std::vector<std::int64_t> train_idx, eval_idx;
    for (int k = 0; k < K; ++k) {
        train_idx.clear();
        eval_idx.clear();
        for (std::int64_t i = 0; i < n; ++i)
            (folds[i] == k ? eval_idx : train_idx).push_back(i);
        const auto train = data.subset(train_idx);
        const FittedParts parts = fit_parts(train, cfg, need_tau, need_sigma);
        std::vector<NuisanceBundle> bundles;
        bundles.reserve(S);
        for (const auto& s : specs) bundles.push_back(bundle_from_parts(parts, s, cfg));
        parallel_for(static_cast<std::int64_t>(eval_idx.size()), [&](std::int64_t t) {
            const std::int64_t i = eval_idx[t];
            const auto x = data.row(i);
            std::optional<double> e_opt;
            if (pass_known_e) e_opt = clip(data.e_known[i], eps, 1.0 - eps);
            const double mu0 = parts.mu_hat(x, 0);
            const double mu1 = parts.mu_hat(x, 1);
            for (std::size_t s = 0; s < S; ++s) {
                phi[s][i] = phi_score(x, data.a[i], data.y[i], bundles[s], specs[s], e_opt);
                plug[s][i] = hinge_integrand(x, mu0, mu1, specs[s]);
            }
        });
    }

    MultiEstimate out;
    out.reports.reserve(S);
    out.plugin_points.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
        out.reports.push_back(summarize(specs[s].name, std::move(phi[s]), folds, K, ci_level, cfg));
        out.plugin_points.push_back(pairwise_mean(plug[s]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// population evaluators
// ---------------------------------------------------------------------------

double population_ahe(const MuFn& mu, const AtomLaw& atoms, const AheSpec& spec) {
    spec.check_shape();
    atoms.validate();
    double total = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        const std::span<const double> x(atoms.xs[j]);
        const double mu0 = mu(x, 0);
        const double mu1 = mu(x, 1);
        if (!(mu0 >= 0.0 && mu0 <= 1.0 && mu1 >= 0.0 && mu1 <= 1.0))
            throw input_error("population_ahe: outcome means must lie in [0,1]");
        total += atoms.p[j] * hinge_integrand(x, mu0, mu1, spec);
    }
    return total;
}

double population_phi_mean(const MuFn& mu, const EFn& e, const AtomLaw& atoms,
                           const NuisanceBundle& bundle, const AheSpec& spec) {
    spec.check_shape();
    atoms.validate();
    double total = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        const std::span<const double> x(atoms.xs[j]);
        const double ex = e(x);
        if (!(ex > 0.0 && ex < 1.0))
            throw input_error("population_phi_mean: true propensity must lie in (0,1)");
        for (int a = 0; a < 2; ++a) {
            const double pa = a ? ex : 1.0 - ex;
            const double mua = mu(x, a);
            if (!(mua >= 0.0 && mua <= 1.0))
                throw input_error("population_phi_mean: outcome means must lie in [0,1]");
            for (int y = 0; y < 2; ++y) {
                const double w = atoms.p[j] * pa * (y ? mua : 1.0 - mua);
                if (w == 0.0) continue;
                total += w * phi_score(x, a, y, bundle, spec);
            }
        }
    }
    return total;
}

} // namespace harmbound
