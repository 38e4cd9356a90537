#pragma once

// Ground-truth machinery: the synthetic population used throughout the test
// suite, Monte-Carlo evaluation of the true identified set, a brute-force
// coupling search that certifies the closed-form bounds independently, margin
// diagnostics, and the replication harness producing RMSE/coverage tables.

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "harmbound/ahe.hpp"
#include "harmbound/core.hpp"
#include "harmbound/estimands.hpp"
#include "harmbound/nuisance.hpp"

namespace harmbound {

// ---------------------------------------------------------------------------
// Synthetic population over 7-dimensional standard-normal covariates.
//
//   xi(x)   = 2 * parity(1[x3>0], ..., 1[x7>0]) - 1          (in {-1, +1})
//   mu(x,a) = logistic( beta * (2*1[xi x2 > 0] - 1)
//                        * ( 1[xi x1 <= 0] + (2a-1) 1[xi x1 > 0] ) )
//   e(x)    = logistic( -(0.25 - 1[x3>0] + 0.5*1[x4>0]) )
//
// Coordinates are 1-based in the formulas and 0-based in code (x1 = x[0]).
// beta controls how predictive the covariates are: at beta = 0 both arms are
// fair coins everywhere; as beta grows the affected quarter of the population
// (xi x1 > 0 with a negative effect sign) saturates.
// ---------------------------------------------------------------------------
struct DgpSpec {
    double beta = 3.0;
    std::uint64_t seed = 1;
    static constexpr int dim = 7;

    void validate() const; // beta must be finite and >= 0
};

double dgp_mu(std::span<const double> x, int a, double beta);
double dgp_propensity(std::span<const double> x);
// mu(x,1) - mu(x,0); three-valued: 0 or +/-(2 logistic(beta) - 1).
double dgp_tau(std::span<const double> x, double beta);

// Draws n rows: X ~ N(0, I_7), A | X ~ Bernoulli(e(X)), Y | X,A ~
// Bernoulli(mu(X,A)).  The known-propensity column is filled with e(X).
// Deterministic in dgp.seed.
ObservationTable sample(const DgpSpec& dgp, std::int64_t n);

// ---------------------------------------------------------------------------
// Monte-Carlo truth: the identified set of the requested estimand family
// under the exact population formulas, with the Monte-Carlo standard error of
// each endpoint.  mc_draws must be >= 10^4.  The CVaR family is a composition
// of three of these and is rejected here.
// ---------------------------------------------------------------------------
struct TrueBounds {
    Interval bounds{};
    double se_lo = 0.0;
    double se_hi = 0.0;
    std::int64_t draws = 0;

    // The endpoint a given family member estimates (lower kinds -> lo).
    double endpoint(EstimandTag tag) const;
};

TrueBounds true_bounds(const DgpSpec& dgp, const EstimandKind& kind,
                       std::int64_t mc_draws = 1000000);

// ---------------------------------------------------------------------------
// Brute-force sharpness oracle.  An instance is a finite covariate law where
// each atom carries its two true outcome means.  For every atom the joint law
// of (Y(0), Y(1)) has one free parameter
//   q = P(Y(0)=1, Y(1)=0 | x)  in  [max{0, mu0-mu1}, min{mu0, 1-mu1}],
// and the oracle sweeps it over an h-grid (endpoints included), checking at
// every grid point that the four cell probabilities are nonnegative, sum to
// one, and reproduce the margins.  The target P(Y(pi0)=1, Y(pi1)=0) is a
// probability-weighted sum over atoms, so the aggregate extremes decompose
// into per-atom extremes.
// ---------------------------------------------------------------------------
struct CouplingAtom {
    std::vector<double> x; // what the policies read
    double mu0 = 0.5;
    double mu1 = 0.5;
    double p = 1.0;
};

struct CouplingInstance {
    std::vector<CouplingAtom> atoms;
    double h = 1e-4; // grid resolution; must be in (0, 1e-3]
};

Interval coupling_bounds_bruteforce(const CouplingInstance& inst, const Policy& pi0,
                                    const Policy& pi1);

// Seeded generator of finite instances for the sharpness and identifiability
// property checks: up to max_atoms atoms with scalar covariates, outcome means
// uniform on [0,1] but snapped to exact {0,1} when drawn within 0.05 of the
// boundary (so identifiable and non-identifiable instances are separated by a
// width gap far above the grid resolution), probabilities bounded away from
// zero, and policies drawn from {always 0, always 1, 1[x1 > 0]}.  The same
// instance is expressed both as a CouplingInstance (brute-force side) and as
// an AtomLaw with an exact-lookup mu (closed-form side).
struct RandomInstance {
    CouplingInstance inst;
    AtomLaw law;
    MuFn mu;
    Policy pi0;
    Policy pi1;
};
RandomInstance random_coupling_instance(std::uint64_t seed, int max_atoms = 5, double h = 1e-4);

// ---------------------------------------------------------------------------
// Margin diagnostic: the empirical small-ball profile t -> P(0 < |eta| <= t)
// on the supplied grid, plus the least-squares slope of log P against log t
// over the grid points with P > 0 (a rough sharpness exponent; NaN when fewer
// than two usable points or the usable t values coincide).
// ---------------------------------------------------------------------------
struct MarginProfile {
    std::vector<std::pair<double, double>> points; // (t, P(0 < |eta| <= t))
    double slope = 0.0;
};

MarginProfile margin_profile(std::span<const double> eta_values,
                             std::span<const double> t_grid);

// ---------------------------------------------------------------------------
// Replication harness.  For each n in n_grid it draws `reps` independent
// seeded datasets, runs the cross-fitted estimator and the plugin comparator
// for every requested estimand on each, and aggregates
//   rmse          against the matching true_bounds endpoint,
//   coverage      of the 95% CIs (NaN for the plugin, which has no CI),
//   mean_ci_width (NaN for the plugin).
// Replication r at size n uses the derived stream (dgp.seed, n, r), so rows
// are bit-identical across runs and thread counts and unchanged by adding
// estimands to the request.
// ---------------------------------------------------------------------------
struct ReplicateRow {
    std::int64_t n = 0;
    std::string estimand;
    std::string estimator; // "ahe" or "plugin"
    double rmse = 0.0;
    double coverage = 0.0;
    double mean_ci_width = 0.0;
    int reps = 0;
    std::uint64_t seed = 0;
};

std::vector<ReplicateRow> replicate(const DgpSpec& dgp, const std::vector<EstimandKind>& kinds,
                                    std::span<const std::int64_t> n_grid, int reps,
                                    const LearnerConfig& cfg, int folds = 5,
                                    std::int64_t truth_draws = 1000000);
std::vector<ReplicateRow> replicate(const DgpSpec& dgp, const EstimandKind& kind,
                                    std::span<const std::int64_t> n_grid, int reps,
                                    const LearnerConfig& cfg, int folds = 5,
                                    std::int64_t truth_draws = 1000000);

// The configuration the replication studies default to: known propensity
// column, k-nearest-mean outcome model, dr-pseudo-outcome effect learners on
// sign-indicator features with 25 neighbors.
LearnerConfig default_replicate_config();

// CSV with header n,estimand,estimator,rmse,coverage,mean_ci_width,reps,seed.
std::string replicate_csv(const std::vector<ReplicateRow>& rows);
void write_replicate_csv(const std::vector<ReplicateRow>& rows, const std::string& path);

} // namespace harmbound
