// Tests for nuisance fitting: learner configuration, propensity/outcome
// models, pseudo-outcome regressions for the effect and sum functions, and
// bundle assembly with its range guarantees.

#include <doctest.h>

#include <cmath>
#include <vector>

#include "harmbound/ahe.hpp"
#include "harmbound/core.hpp"
#include "harmbound/errors.hpp"
#include "harmbound/estimands.hpp"
#include "harmbound/mathstats.hpp"
#include "harmbound/nuisance.hpp"
#include "harmbound/oracle.hpp"
#include "harmbound/rng.hpp"

using namespace harmbound;

namespace {

// Random 7-dimensional covariate vectors matching the synthetic population.
std::vector<double> random_point(Rng& r, int d = 7) {
    std::vector<double> x(static_cast<std::size_t>(d));
    for (auto& v : x) v = r.normal();
    return x;
}

LearnerConfig known_e_config() {
    LearnerConfig cfg;
    cfg.propensity = PropensityMode::KnownColumn;
    cfg.outcome = OutcomeLearner::KNearestMean;
    cfg.eta_mode = EtaMode::DrPseudoOutcome;
    cfg.eta_learner = EtaLearner::KNearestMean;
    cfg.features = FeatureMap::Signs;
    cfg.eta_k = 25;
    return cfg;
}

} // namespace

TEST_CASE("learner config validation") {
    LearnerConfig cfg;
    CHECK_NOTHROW(cfg.validate());

    auto bad = cfg;
    bad.constant_p = 1.0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.learning_rate = 1.5;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.rounds = 0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.k = -1;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.eta_k = -3;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.ridge = -1e-9;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), config_error);
    bad = cfg;
    bad.epsilon = 0.5;
    CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("learner config string names round trip") {
    for (auto m : {PropensityMode::KnownColumn, PropensityMode::Constant, PropensityMode::Logistic,
                   PropensityMode::BoostedStumps}) {
        CHECK(propensity_from_string(to_string(m)) == m);
    }
    for (auto l : {OutcomeLearner::Logistic, OutcomeLearner::BoostedStumps,
                   OutcomeLearner::KNearestMean, OutcomeLearner::Mean}) {
        CHECK(outcome_from_string(to_string(l)) == l);
    }
    for (auto m : {EtaMode::Plugin, EtaMode::DrPseudoOutcome}) {
        CHECK(eta_mode_from_string(to_string(m)) == m);
    }
    for (auto l : {EtaLearner::KNearestMean, EtaLearner::BoostedStumps, EtaLearner::Mean}) {
        CHECK(eta_learner_from_string(to_string(l)) == l);
    }
    for (auto f : {FeatureMap::Raw, FeatureMap::Signs}) {
        CHECK(features_from_string(to_string(f)) == f);
    }
    CHECK(propensity_from_string("constant:0.3") == PropensityMode::Constant);
    CHECK_THROWS_AS(propensity_from_string("mystery"), config_error);
    CHECK_THROWS_AS(outcome_from_string(""), config_error);
    CHECK_THROWS_AS(eta_mode_from_string("none"), config_error);
    CHECK_THROWS_AS(eta_learner_from_string("forest"), config_error);
    CHECK_THROWS_AS(features_from_string("poly"), config_error);
}

TEST_CASE("learner config json round trip") {
    auto cfg = known_e_config();
    cfg.seed = 987;
    cfg.rounds = 37;
    cfg.learning_rate = 0.2;
    const auto j = cfg.to_json();
    const auto back = LearnerConfig::from_json(j);
    CHECK(back.to_json().dump() == j.dump());
    CHECK(back.propensity == cfg.propensity);
    CHECK(back.eta_k == 25);
    CHECK(back.seed == 987);

    nlohmann::json broken = j;
    broken["epsilon"] = 0.9;
    CHECK_THROWS_AS(LearnerConfig::from_json(broken), config_error);
    broken = j;
    broken["rounds"] = "many";
    CHECK_THROWS_AS(LearnerConfig::from_json(broken), config_error);
}

TEST_CASE("dr pseudo-outcome formula") {
    // Effect form at the true nuisances: 0.4 + (0.5/0.25)*0.4 = 1.2.
    CHECK(dr_pseudo_outcome(1, 1, 0.5, 0.2, 0.6, false) == doctest::Approx(1.2).epsilon(1e-12));
    // Hand-evaluated spot checks for both arms and both forms.
    CHECK(dr_pseudo_outcome(0, 1, 0.5, 0.2, 0.6, false) ==
          doctest::Approx(0.4 - 2.0 * 0.8).epsilon(1e-12));
    // Sum form flips the sign of the arm-0 outcome: y' = (2a-1) y.
    CHECK(dr_pseudo_outcome(1, 1, 0.5, 0.2, 0.6, true) ==
          doctest::Approx(0.8 + 2.0 * 0.4).epsilon(1e-12));
    CHECK(dr_pseudo_outcome(0, 0, 0.25, 0.2, 0.6, true) ==
          doctest::Approx(0.8 + (-0.25 / (0.25 * 0.75)) * (0.0 + 0.2)).epsilon(1e-12));
}

TEST_CASE("known-column propensity reproduces supplied values") {
    std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
    std::vector<std::uint8_t> a = {0, 1, 0, 1};
    std::vector<std::uint8_t> y = {0, 0, 1, 1};
    std::vector<double> e = {0.2, 0.4, 0.6, 0.8};
    const auto t = ObservationTable::build(1, x, a, y, e);

    LearnerConfig cfg;
    cfg.propensity = PropensityMode::KnownColumn;
    const auto e_hat = fit_propensity(t, cfg);
    for (int i = 0; i < 4; ++i) {
        std::vector<double> pt = {x[static_cast<std::size_t>(i)]};
        CHECK(e_hat(pt) == e[static_cast<std::size_t>(i)]);
    }

    // Constant known values extend to arbitrary points.
    std::vector<double> ec = {0.5, 0.5, 0.5, 0.5};
    const auto tc = ObservationTable::build(1, x, a, y, ec);
    const auto const_hat = fit_propensity(tc, cfg);
    std::vector<double> far = {77.0};
    CHECK(const_hat(far) == 0.5);

    // Requesting the column when it is absent is a configuration error.
    const auto noe = ObservationTable::build(1, x, a, y, {});
    CHECK_THROWS_AS(fit_propensity(noe, cfg), config_error);
}

TEST_CASE("constant propensity mode") {
    std::vector<double> x = {0.0, 1.0};
    const auto t = ObservationTable::build(1, x, {0, 1}, {0, 1}, {});
    LearnerConfig cfg;
    cfg.propensity = PropensityMode::Constant;
    cfg.constant_p = 0.3;
    const auto e_hat = fit_propensity(t, cfg);
    std::vector<double> pt = {-9.0};
    CHECK(e_hat(pt) == 0.3);
}

TEST_CASE("logistic propensity falls back on degenerate arms") {
    std::vector<double> x = {0.0, 1.0, 2.0, 3.0};
    const auto t = ObservationTable::build(1, x, {1, 1, 1, 1}, {0, 1, 0, 1}, {});
    LearnerConfig cfg;
    cfg.propensity = PropensityMode::Logistic;
    const auto e_hat = fit_propensity(t, cfg); // warns, falls back to clipped mean
    std::vector<double> pt = {1.5};
    CHECK(e_hat(pt) == doctest::Approx(0.99).epsilon(1e-12)); // 1 - default epsilon
}

TEST_CASE("logistic propensity recovers the generating log-odds on sign features") {
    DgpSpec dgp;
    dgp.beta = 3.0;
    dgp.seed = 21;
    const auto t = sample(dgp, 100000);

    LearnerConfig cfg;
    cfg.propensity = PropensityMode::Logistic;
    cfg.features = FeatureMap::Signs;
    const auto e_hat = fit_propensity(t, cfg);

    double worst = 0.0;
    for (std::int64_t i = 0; i < 200; ++i) {
        const auto x = t.row(i);
        const double truth = dgp_propensity(x);
        const double fit = e_hat(x);
        const double gap = std::abs(std::log(fit / (1.0 - fit)) - std::log(truth / (1.0 - truth)));
        worst = std::max(worst, gap);
    }
    CHECK(worst < 0.05);
}

TEST_CASE("outcome fit saturates on constant labels") {
    Rng r(3);
    const std::int64_t n = 60;
    std::vector<double> x(n);
    std::vector<std::uint8_t> a(n), y(n, 0);
    for (std::int64_t i = 0; i < n; ++i) {
        x[i] = r.normal();
        a[i] = static_cast<std::uint8_t>(i % 2);
    }
    const auto t = ObservationTable::build(1, x, a, y, {});
    for (auto learner : {OutcomeLearner::Logistic, OutcomeLearner::KNearestMean,
                         OutcomeLearner::BoostedStumps, OutcomeLearner::Mean}) {
        LearnerConfig cfg;
        cfg.outcome = learner;
        const auto mu = fit_outcome(t, cfg);
        std::vector<double> pt = {0.2};
        CHECK(mu(pt, 0) <= 1e-3);
        CHECK(mu(pt, 1) <= 1e-3);
        CHECK(mu(pt, 0) >= 0.0);
    }
}

TEST_CASE("outcome fit separates arms when y equals a") {
    Rng r(4);
    const std::int64_t n = 100;
    std::vector<double> x(n);
    std::vector<std::uint8_t> a(n), y(n);
    for (std::int64_t i = 0; i < n; ++i) {
        x[i] = r.normal();
        a[i] = static_cast<std::uint8_t>(r.bernoulli(0.5));
        y[i] = a[i];
    }
    const auto t = ObservationTable::build(1, x, a, y, {});
    LearnerConfig cfg;
    cfg.outcome = OutcomeLearner::Logistic;
    const auto mu = fit_outcome(t, cfg);
    std::vector<double> pt = {0.0};
    CHECK(mu(pt, 1) > 1.0 - 1e-3);
    CHECK(mu(pt, 0) < 1e-3);

    // Joint fit with the arm as a feature reaches the same extremes.
    cfg.joint_outcome = true;
    const auto muj = fit_outcome(t, cfg);
    CHECK(muj(pt, 1) > 0.99);
    CHECK(muj(pt, 0) < 0.01);
}

TEST_CASE("outcome fit uses pooled mean for an empty arm") {
    std::vector<double> x = {0.0, 1.0, 2.0, 3.0, 4.0};
    const auto t = ObservationTable::build(1, x, {1, 1, 1, 1, 1}, {1, 1, 0, 1, 0}, {});
    LearnerConfig cfg;
    cfg.outcome = OutcomeLearner::KNearestMean;
    const auto mu = fit_outcome(t, cfg); // warns about the empty arm
    std::vector<double> pt = {2.0};
    CHECK(mu(pt, 0) == doctest::Approx(0.6).epsilon(1e-12)); // pooled outcome mean
}

TEST_CASE("outcome fit approaches one half when effects vanish") {
    DgpSpec dgp;
    dgp.beta = 0.0;
    dgp.seed = 30;
    const auto t = sample(dgp, 100000);
    LearnerConfig cfg;
    cfg.outcome = OutcomeLearner::Logistic;
    cfg.features = FeatureMap::Signs;
    const auto mu = fit_outcome(t, cfg);
    double worst = 0.0;
    for (std::int64_t i = 0; i < 100; ++i) {
        const auto x = t.row(i);
        worst = std::max({worst, std::abs(mu(x, 0) - 0.5), std::abs(mu(x, 1) - 0.5)});
    }
    CHECK(worst < 0.05);
}

TEST_CASE("plugin effect estimate vanishes for identical arms") {
    std::vector<double> x = {0.0, 1.0, 2.0, 3.0};
    const auto t = ObservationTable::build(1, x, {0, 1, 0, 1}, {0, 0, 1, 1}, {});
    LearnerConfig cfg;
    cfg.eta_mode = EtaMode::Plugin;
    const MuFn flat = [](std::span<const double>, int) { return 0.3; };
    const PredictFn e_hat = fit_constant(0.5);
    const auto tau = fit_cate(t, e_hat, flat, cfg);
    std::vector<double> pt = {1.7};
    CHECK(tau(pt) == 0.0);

    const auto sig = fit_cats(t, e_hat, [](std::span<const double>, int) { return 0.5; }, cfg);
    CHECK(sig(pt) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pseudo-outcome effect regression improves with sample size") {
    auto cfg = known_e_config();
    cfg.eta_k = 0; // adaptive neighborhood
    DgpSpec dgp;
    dgp.beta = 3.0;

    Rng probe_rng(555);
    std::vector<std::vector<double>> probes;
    for (int i = 0; i < 1000; ++i) probes.push_back(random_point(probe_rng));

    auto tau_mse = [&](std::int64_t n, std::uint64_t seed) {
        DgpSpec d2 = dgp;
        d2.seed = seed;
        const auto t = sample(d2, n);
        const auto tau = fit_cate(t, PredictFn{}, MuFn{}, cfg);
        long double acc = 0.0L;
        for (const auto& x : probes) {
            const double err = tau(x) - dgp_tau(x, dgp.beta);
            acc += err * err;
        }
        return static_cast<double>(acc / static_cast<double>(probes.size()));
    };

    const double small = 0.5 * (tau_mse(800, 100) + tau_mse(800, 101));
    const double large = 0.5 * (tau_mse(6400, 100) + tau_mse(6400, 101));
    CHECK(large < small);
}

TEST_CASE("pseudo-outcome sum regression is exact at zero outcomes") {
    DgpSpec dgp;
    dgp.beta = 3.0;
    dgp.seed = 77;
    auto t = sample(dgp, 400);
    std::fill(t.y.begin(), t.y.end(), static_cast<std::uint8_t>(0));

    auto cfg = known_e_config();
    const auto sig = fit_cats(t, PredictFn{}, MuFn{}, cfg);
    Rng r(8);
    for (int i = 0; i < 20; ++i) {
        const auto x = random_point(r);
        CHECK(std::abs(sig(x)) <= 1e-9);
    }
}

TEST_CASE("pseudo-outcome sum regression finds the constant sum at zero effect") {
    DgpSpec dgp;
    dgp.beta = 0.0;
    dgp.seed = 91;
    const auto t = sample(dgp, 100000);

    auto cfg = known_e_config();
    cfg.outcome = OutcomeLearner::Logistic;
    cfg.eta_learner = EtaLearner::Mean; // truth is the constant 1
    const auto sig = fit_cats(t, PredictFn{}, MuFn{}, cfg);
    Rng r(9);
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto x = random_point(r);
        worst = std::max(worst, std::abs(sig(x) - 1.0));
    }
    CHECK(worst < 0.1);
}

TEST_CASE("cats transform sees arm means one and zero when y equals a") {
    // With exact outcome models mu(x,1)=1, mu(x,0)=0, the plugin sum is 1.
    std::vector<double> x = {0.0, 1.0, 2.0, 3.0};
    const auto t = ObservationTable::build(1, x, {0, 1, 0, 1}, {0, 1, 0, 1}, {});
    LearnerConfig cfg;
    cfg.eta_mode = EtaMode::Plugin;
    const MuFn exact = [](std::span<const double>, int arm) { return arm == 1 ? 1.0 : 0.0; };
    const auto sig = fit_cats(t, fit_constant(0.5), exact, cfg);
    std::vector<double> pt = {0.4};
    CHECK(sig(pt) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("bundle role mapping by hinge count") {
    DgpSpec dgp;
    dgp.beta = 3.0;
    dgp.seed = 15;
    const auto t = sample(dgp, 600);
    auto cfg = known_e_config();

    const auto none = fit_bundle(t, ate_spec(), cfg);
    CHECK(none.eta_hat.empty());
    CHECK(bool(none.e_hat));
    CHECK(bool(none.mu_hat));

    const auto lower = fit_bundle(t, build_spec(EstimandKind::fna_lower(), 7), cfg);
    CHECK(lower.eta_hat.size() == 1);

    const auto optimal = fit_bundle(t, build_spec(EstimandKind::fna_upper_optimal(), 7), cfg);
    CHECK(optimal.eta_hat.size() == 2);
}

TEST_CASE("bundle hinge functions are affine in the fitted parts") {
    DgpSpec dgp;
    dgp.beta = 3.0;
    dgp.seed = 16;
    const auto t = sample(dgp, 600);
    auto cfg = known_e_config();

    const auto parts = fit_parts(t, cfg, true, true);
    REQUIRE(bool(parts.tau_hat));
    REQUIRE(bool(parts.sigma_hat));

    const auto lower_spec = build_spec(EstimandKind::fna_lower(), 7);
    const auto lower = bundle_from_parts(parts, lower_spec, cfg);
    const auto optimal = bundle_from_parts(parts, build_spec(EstimandKind::fna_upper_optimal(), 7), cfg);

    Rng r(10);
    for (int i = 0; i < 50; ++i) {
        const auto x = random_point(r);
        CHECK(lower.eta_hat[0](x) == clip(parts.tau_hat(x), -3.0, 3.0));
        CHECK(optimal.eta_hat[0](x) == clip(parts.tau_hat(x), -3.0, 3.0));
        CHECK(optimal.eta_hat[1](x) == clip(1.0 - parts.sigma_hat(x), -3.0, 3.0));
    }
}

TEST_CASE("plugin mode hinge functions are exact linear combinations") {
    DgpSpec dgp;
    dgp.beta = 3.0;
    dgp.seed = 17;
    const auto t = sample(dgp, 500);
    auto cfg = known_e_config();
    cfg.eta_mode = EtaMode::Plugin;
    cfg.outcome = OutcomeLearner::BoostedStumps;

    const auto spec = build_spec(EstimandKind::fna_upper_optimal(), 7);
    const auto bundle = fit_bundle(t, spec, cfg);
    REQUIRE(bundle.eta_hat.size() == 2);

    Rng r(11);
    for (int i = 0; i < 100; ++i) {
        const auto x = random_point(r);
        const double mu0 = bundle.mu_hat(x, 0);
        const double mu1 = bundle.mu_hat(x, 1);
        for (std::size_t l = 0; l < 2; ++l) {
            const auto g = spec.g[l + 1](x);
            const double manual = g[0] * mu0 + g[1] * mu1 + g[2];
            CHECK(bundle.eta_hat[l](x) == doctest::Approx(manual).epsilon(1e-12));
        }
    }
}

TEST_CASE("bundles respect their range invariants for every learner") {
    DgpSpec dgp;
    dgp.beta = 3.0;
    dgp.seed = 18;
    const auto t = sample(dgp, 300);
    const auto spec = build_spec(EstimandKind::fna_upper(), 7);

    for (auto learner : {OutcomeLearner::Logistic, OutcomeLearner::BoostedStumps,
                         OutcomeLearner::KNearestMean, OutcomeLearner::Mean}) {
        auto cfg = known_e_config();
        cfg.outcome = learner;
        cfg.eta_learner = EtaLearner::BoostedStumps;
        const auto b = fit_bundle(t, spec, cfg);
        Rng r(12);
        for (int i = 0; i < 500; ++i) {
            const auto x = random_point(r);
            const double e = b.e_hat(x);
            CHECK(e >= cfg.epsilon);
            CHECK(e <= 1.0 - cfg.epsilon);
            for (int arm : {0, 1}) {
                const double m = b.mu_hat(x, arm);
                CHECK(m >= 0.0);
                CHECK(m <= 1.0);
            }
            for (const auto& eta : b.eta_hat) CHECK(std::abs(eta(x)) <= 3.0);
        }
    }
}

TEST_CASE("bundle fitting is deterministic") {
    DgpSpec dgp;
    dgp.beta = 3.0;
    dgp.seed = 19;
    const auto t = sample(dgp, 800);
    auto cfg = known_e_config();
    const auto spec = build_spec(EstimandKind::fna_lower(), 7);

    const auto b1 = fit_bundle(t, spec, cfg);
    const auto b2 = fit_bundle(t, spec, cfg);
    Rng r(13);
    for (int i = 0; i < 100; ++i) {
        const auto x = random_point(r);
        CHECK(b1.e_hat(x) == b2.e_hat(x));
        CHECK(b1.mu_hat(x, 0) == b2.mu_hat(x, 0));
        CHECK(b1.mu_hat(x, 1) == b2.mu_hat(x, 1));
        CHECK(b1.eta_hat[0](x) == b2.eta_hat[0](x));
    }
}

TEST_CASE("pseudo-outcome mode needs enough rows") {
    std::vector<double> x = {0.0, 1.0, 2.0};
    const auto t = ObservationTable::build(1, x, {0, 1, 0}, {0, 1, 0}, {0.5, 0.5, 0.5});
    auto cfg = known_e_config();
    CHECK_THROWS_AS(fit_cate(t, PredictFn{}, MuFn{}, cfg), config_error);
}
