#pragma once

// Nuisance fitting: the propensity e, outcome means mu(.,0)/mu(.,1), the
// conditional mean difference tau and sum sigma, and assembly of the fitted
// bundle consumed by the score.
//
// Cross-fitting discipline: fitters see only the training rows they are
// given.  In dr-pseudo-outcome mode the effect learners additionally split
// their training rows into two halves internally (by local index parity),
// fit e and mu on each half, and form pseudo-outcomes on the opposite half,
// so the regression targets never use nuisances fitted on their own row.
// Because a single passed-in predictor pair cannot satisfy that disjointness
// requirement, fit_cate/fit_cats refit internally in dr mode and use the
// passed predictors only in plugin mode.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "harmbound/core.hpp"
#include "harmbound/learners.hpp"

namespace harmbound {

using MuFn = std::function<double(std::span<const double>, int)>;

struct NuisanceBundle {
    PredictFn e_hat;                  // values clipped into [epsilon, 1-epsilon]
    MuFn mu_hat;                      // values in [0,1]
    std::vector<PredictFn> eta_hat;   // one per hinge, values in [-3,3]
};

enum class PropensityMode { KnownColumn, Constant, Logistic, BoostedStumps };
enum class OutcomeLearner { Logistic, BoostedStumps, KNearestMean, Mean };
enum class EtaMode { Plugin, DrPseudoOutcome };
enum class EtaLearner { KNearestMean, BoostedStumps, Mean };
enum class FeatureMap { Raw, Signs };

// Serialized as a flat JSON object (see to_json); all names are kebab-case on
// the CLI.  k / eta_k of 0 mean "automatic": ceil(sqrt(training rows)).
struct LearnerConfig {
    PropensityMode propensity = PropensityMode::Logistic;
    double constant_p = 0.5;               // used by PropensityMode::Constant
    OutcomeLearner outcome = OutcomeLearner::Logistic;
    bool joint_outcome = false;            // fit one model with the arm as a feature
    EtaMode eta_mode = EtaMode::DrPseudoOutcome;
    EtaLearner eta_learner = EtaLearner::KNearestMean;
    FeatureMap features = FeatureMap::Raw; // design-matrix preprocessing for all learners
    double learning_rate = 0.1;            // boosting shrinkage
    int rounds = 200;                      // boosting rounds
    int k = 0;                             // neighbors for outcome/propensity knn (0 = auto)
    int eta_k = 0;                         // neighbors for the pseudo-outcome regression (0 = auto)
    double ridge = 1e-6;                   // logistic ridge penalty
    double epsilon = 0.01;                 // propensity clipping floor
    std::uint64_t seed = 0;

    void validate() const; // throws config_error on out-of-range hyperparameters
    nlohmann::ordered_json to_json() const;
    static LearnerConfig from_json(const nlohmann::json& j);
};

std::string to_string(PropensityMode m);
std::string to_string(OutcomeLearner l);
std::string to_string(EtaMode m);
std::string to_string(EtaLearner l);
std::string to_string(FeatureMap f);
PropensityMode propensity_from_string(const std::string& s);   // accepts "constant:P" too
OutcomeLearner outcome_from_string(const std::string& s);
EtaMode eta_mode_from_string(const std::string& s);
EtaLearner eta_learner_from_string(const std::string& s);
FeatureMap features_from_string(const std::string& s);

// Doubly-robust pseudo-outcomes.  diff mode targets the conditional mean
// difference; sum mode targets the conditional mean sum (realized by flipping
// the outcome sign with the arm, whose arm-conditional means are mu(x,1) and
// -mu(x,0)).  With the true propensity these have conditional mean tau(x)
// resp. sigma(x) for any outcome model.
double dr_pseudo_outcome(int a, int y, double e, double mu0, double mu1, bool sum_mode);

PredictFn fit_propensity(const ObservationTable& train, const LearnerConfig& cfg);
MuFn fit_outcome(const ObservationTable& train, const LearnerConfig& cfg);

// tau_hat(x) in [-1,1]; sigma_hat(x) in [0,2].  Plugin mode derives them from
// the passed mu_hat; dr mode runs the nested pseudo-outcome regression.
PredictFn fit_cate(const ObservationTable& train, const PredictFn& e_hat,
                   const MuFn& mu_hat, const LearnerConfig& cfg);
PredictFn fit_cats(const ObservationTable& train, const PredictFn& e_hat,
                   const MuFn& mu_hat, const LearnerConfig& cfg);

NuisanceBundle fit_bundle(const ObservationTable& train, const AheSpec& spec,
                          const LearnerConfig& cfg);

// Lower-level path used by the replication harness so several estimands can
// share one set of fitted nuisances per fold.
struct FittedParts {
    PredictFn e_hat;
    MuFn mu_hat;
    PredictFn tau_hat;   // empty unless requested
    PredictFn sigma_hat; // empty unless requested
};
FittedParts fit_parts(const ObservationTable& train, const LearnerConfig& cfg,
                      bool need_tau, bool need_sigma);
NuisanceBundle bundle_from_parts(const FittedParts& parts, const AheSpec& spec,
                                 const LearnerConfig& cfg);

} // namespace harmbound
