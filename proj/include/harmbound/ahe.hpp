#pragma once

// The influence-style score phi, the cross-fitted estimator built on it, and
// exact population-side evaluators over discrete covariate laws (the test and
// oracle bench: summation, no sampling noise).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "harmbound/core.hpp"
#include "harmbound/nuisance.hpp"

namespace harmbound {

// A finite covariate law: atoms x_1..x_J with probabilities summing to one
// (within 1e-12; enforced).
struct AtomLaw {
    std::vector<std::vector<double>> xs;
    std::vector<double> p;

    std::size_t size() const { return p.size(); }
    void validate() const; // throws input_error
};

using EFn = std::function<double(std::span<const double>)>;

struct EstimateReport {
    std::string estimand;
    double point = 0.0;
    double se = 0.0;
    double ci_level = 0.95;
    Interval ci{};
    std::int64_t n = 0;
    int folds = 0;
    std::uint64_t seed = 0;
    LearnerConfig learners{};
    std::vector<double> per_fold;

    nlohmann::ordered_json to_json() const; // fixed field order and names
};

// The score at one observation:
//   phi = c2(x) + c0(x) * ((a - e)mu0 + (1-a)y)/(1 - e)
//              + c1(x) * ((e - a)mu1 + a y)/e
// with cz(x) = g0_z(x) + sum_l rho_l 1[eta_l(x) <= 0] gl_z(x); ties at
// eta = 0 fire the hinge.  When the caller holds the row's known propensity
// it can pass it via e_known, which overrides bundle.e_hat(x); the estimator
// uses this in known-column mode because a fitted x -> e map cannot reproduce
// held-out rows' supplied values.
double phi_score(std::span<const double> x, int a, int y, const NuisanceBundle& bundle,
                 const AheSpec& spec, std::optional<double> e_known = std::nullopt);

// Cross-fitted point estimate, standard error and CI:
//   folds by the congruence rule; per fold, nuisances are fitted on the
//   complement and phi is evaluated on the held-out rows;
//   point = mean(phi_i), se = sqrt( sum (phi_i - point)^2 / (n(n-1)) ),
//   ci = point +/- z se with z the normal quantile of (1+ci_level)/2.
// Deterministic given cfg.seed.
EstimateReport estimate(const ObservationTable& data, const AheSpec& spec,
                        const LearnerConfig& cfg, int K = 5, double ci_level = 0.95);

// Same evaluation path with fixed, pre-supplied nuisances (no fitting): the
// estimate is then exactly the sample mean of phi.  Used by tests that need
// controlled nuisances.
EstimateReport estimate_with_bundle(const ObservationTable& data, const AheSpec& spec,
                                    const NuisanceBundle& bundle, int K = 5,
                                    double ci_level = 0.95, bool use_known_e = false);

// Cross-fitted plugin comparator: the sample mean of the hinge-form integrand
// evaluated with a cross-fitted outcome model only (no score correction).
double plugin_estimate(const ObservationTable& data, const AheSpec& spec,
                       const LearnerConfig& cfg, int K = 5);

// Evaluates several estimands over one dataset while fitting each fold's
// nuisances once (the effect learners are shared across hinge roles).  Also
// returns the cross-fitted plugin value per estimand.  Produces exactly the
// same numbers as calling estimate/plugin_estimate per spec.
struct MultiEstimate {
    std::vector<EstimateReport> reports;
    std::vector<double> plugin_points;
};
MultiEstimate estimate_multi(const ObservationTable& data, const std::vector<AheSpec>& specs,
                             const LearnerConfig& cfg, int K = 5, double ci_level = 0.95);

// Exact expectation of the hinge-form integrand under an atom law.
double population_ahe(const MuFn& mu, const AtomLaw& atoms, const AheSpec& spec);

// Exact E[phi] under the true law (e, mu), with the supplied (possibly wrong)
// bundle inside the score; arm and outcome expectations are summed out.
double population_phi_mean(const MuFn& mu, const EFn& e, const AtomLaw& atoms,
                           const NuisanceBundle& bundle, const AheSpec& spec);

} // namespace harmbound
