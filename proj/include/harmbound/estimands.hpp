#pragma once

// Estimand catalogue: constructors mapping each target parameter to its
// hinge-form description, the closed-form identified-set endpoints over
// discrete laws (the oracle side), the identifiability test, and the
// CVaR-of-ITE composition.

#include <string>

#include "harmbound/ahe.hpp"
#include "harmbound/core.hpp"

namespace harmbound {

enum class EstimandTag {
    FnaLowerWholesale,
    FnaUpperWholesale,
    FnaLowerPolicy,
    FnaUpperPolicy,
    FnaUpperOptimal,
    CvarIte,
};

struct EstimandKind {
    EstimandTag tag = EstimandTag::FnaLowerWholesale;
    Policy pi0;          // used by the policy-change kinds
    Policy pi1;
    double alpha = 0.25; // used by CvarIte

    static EstimandKind fna_lower();
    static EstimandKind fna_upper();
    static EstimandKind fna_lower_policy(Policy pi0, Policy pi1);
    static EstimandKind fna_upper_policy(Policy pi0, Policy pi1);
    static EstimandKind fna_upper_optimal();
    static EstimandKind cvar_ite(double alpha);
};

// CLI-facing names: fna-lower, fna-upper, fna-lower-policy, fna-upper-policy,
// fna-upper-optimal, cvar-ite.
std::string estimand_name(EstimandTag tag);
EstimandTag estimand_tag_from_string(const std::string& name); // config_error on unknown

// Builds the hinge-form description and validates its coefficient ranges on
// 10^4 random probe points of dimension probe_dim (raise probe_dim when the
// supplied policies read higher coordinates).  CvarIte composes two interval
// endpoints and has no single description; requesting it raises config_error.
AheSpec build_spec(const EstimandKind& kind, int probe_dim = 8);

// The average treatment effect as a degenerate hinge form (m = 0); used by
// the CVaR composition.
AheSpec ate_spec();

// Per-atom integrands of the identified-set endpoints for a policy change
// a0 -> a1 (arms already evaluated at the atom):
//   lower: max{(a0 - a1) tau, 0}
//   upper: min{a1(1-a0) mu0 + a0(1-a1)(1-mu0), a1(1-a0)(1-mu1) + a0(1-a1) mu1}
double fna_lower_integrand(int a0, int a1, double mu0, double mu1);
double fna_upper_integrand(int a0, int a1, double mu0, double mu1);
// min{mu0, 1-mu0, mu1, 1-mu1}: the identified-set width density together with
// the policy overlap factor, and the optimal-policy upper integrand.
double min4(double mu0, double mu1);

// Closed-form identified set for the fraction negatively affected by the
// change pi0 -> pi1 under the exact outcome means; asserts the per-atom
// ordering of the two integrands.
Interval sharp_bounds_exact(const MuFn& mu, const AtomLaw& atoms, const Policy& pi0,
                            const Policy& pi1);

// True iff every atom with positive mass satisfies pi0 = pi1 or has a
// degenerate outcome mean in either arm; cross-checked against the interval
// width being zero.
bool is_identifiable(const MuFn& mu, const AtomLaw& atoms, const Policy& pi0,
                     const Policy& pi1);

// Worst-alpha-fraction average effect as a function of one feasible FNA value
// f and the ATE:  C(f) = max{ -1, -f/alpha, 1 - (1 - ate)/alpha }.
// Applied to the FNA interval endpoints (f = fna.hi gives the lower endpoint)
// and clamped into [-1,1].  Infeasible (fna, ate) pairs raise input_error.
Interval cvar_ite_bounds(Interval fna, double ate, double alpha);

// The policy assigning the arm with the larger estimated conditional mean;
// ties (tau_hat = 0) go to arm 0.
Policy optimal_policy_from(PredictFn tau_hat);

} // namespace harmbound
