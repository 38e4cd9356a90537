#include "harmbound/estimands.hpp"

#include <algorithm>
#include <cmath>

#include "harmbound/mathstats.hpp"

namespace harmbound {

// ---------------------------------------------------------------------------
// EstimandKind
// ---------------------------------------------------------------------------

EstimandKind EstimandKind::fna_lower() {
    EstimandKind k;
    k.tag = EstimandTag::FnaLowerWholesale;
    return k;
}
EstimandKind EstimandKind::fna_upper() {
    EstimandKind k;
    k.tag = EstimandTag::FnaUpperWholesale;
    return k;
}
EstimandKind EstimandKind::fna_lower_policy(Policy pi0, Policy pi1) {
    EstimandKind k;
    k.tag = EstimandTag::FnaLowerPolicy;
    k.pi0 = std::move(pi0);
    k.pi1 = std::move(pi1);
    return k;
}
EstimandKind EstimandKind::fna_upper_policy(Policy pi0, Policy pi1) {
    EstimandKind k;
    k.tag = EstimandTag::FnaUpperPolicy;
    k.pi0 = std::move(pi0);
    k.pi1 = std::move(pi1);
    return k;
}
EstimandKind EstimandKind::fna_upper_optimal() {
    EstimandKind k;
    k.tag = EstimandTag::FnaUpperOptimal;
    return k;
}
EstimandKind EstimandKind::cvar_ite(double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw config_error("cvar-ite: alpha must lie in (0,1)");
    EstimandKind k;
    k.tag = EstimandTag::CvarIte;
    k.alpha = alpha;
    return k;
}

std::string estimand_name(EstimandTag tag) {
    switch (tag) {
        case EstimandTag::FnaLowerWholesale: return "fna-lower";
        case EstimandTag::FnaUpperWholesale: return "fna-upper";
        case EstimandTag::FnaLowerPolicy: return "fna-lower-policy";
        case EstimandTag::FnaUpperPolicy: return "fna-upper-policy";
        case EstimandTag::FnaUpperOptimal: return "fna-upper-optimal";
        case EstimandTag::CvarIte: return "cvar-ite";
    }
    return "?";
}

EstimandTag estimand_tag_from_string(const std::string& name) {
    if (name == "fna-lower") return EstimandTag::FnaLowerWholesale;
    if (name == "fna-upper") return EstimandTag::FnaUpperWholesale;
    if (name == "fna-lower-policy") return EstimandTag::FnaLowerPolicy;
    if (name == "fna-upper-policy") return EstimandTag::FnaUpperPolicy;
    if (name == "fna-upper-optimal") return EstimandTag::FnaUpperOptimal;
    if (name == "cvar-ite") return EstimandTag::CvarIte;
    throw config_error("unknown estimand: " + name);
}

// ---------------------------------------------------------------------------
// build_spec
// ---------------------------------------------------------------------------

namespace {

CoefFn const_triple(double c0, double c1, double c2) {
    const CoefTriple c{c0, c1, c2};
    return [c](std::span<const double>) { return c; };
}

} // namespace

AheSpec ate_spec() {
    AheSpec s;
    s.name = "ate";
    s.m = 0;
    s.g = {const_triple(-1.0, 1.0, 0.0)};
    return s;
}

AheSpec build_spec(const EstimandKind& kind, int probe_dim) {
    AheSpec s;
    s.name = estimand_name(kind.tag);
    switch (kind.tag) {
        case EstimandTag::FnaLowerWholesale:
            s.m = 1;
            s.rho = {-1};
            s.g = {const_triple(0, 0, 0), const_triple(-1, 1, 0)};
            s.eta_roles = {EtaRole::CATE};
            break;
        case EstimandTag::FnaUpperWholesale:
            s.m = 1;
            s.rho = {+1};
            s.g = {const_triple(1, 0, 0), const_triple(-1, -1, 1)};
            s.eta_roles = {EtaRole::CATS};
            break;
        case EstimandTag::FnaLowerPolicy: {
            const PolicyCoefs pc = policy_indicator_functions(kind.pi0, kind.pi1);
            s.m = 1;
            s.rho = {-1};
            s.g = {const_triple(0, 0, 0), pc.lower_hinge};
            s.eta_roles = {EtaRole::CATE};
            break;
        }
        case EstimandTag::FnaUpperPolicy: {
            const PolicyCoefs pc = policy_indicator_functions(kind.pi0, kind.pi1);
            s.m = 1;
            s.rho = {+1};
            s.g = {pc.upper_base, pc.upper_hinge};
            s.eta_roles = {EtaRole::CATS};
            break;
        }
        case EstimandTag::FnaUpperOptimal:
            s.m = 2;
            s.rho = {+1, +1};
            s.g = {const_triple(1, 0, 0), const_triple(-1, 1, 0), const_triple(-1, -1, 1)};
            s.eta_roles = {EtaRole::CATE, EtaRole::CATS};
            break;
        case EstimandTag::CvarIte:
            throw config_error(
                "cvar-ite composes two interval estimates and has no single hinge form");
    }
    validate_spec(s, probe_dim);
    return s;
}

// ---------------------------------------------------------------------------
// Closed-form endpoints
// ---------------------------------------------------------------------------

double fna_lower_integrand(int a0, int a1, double mu0, double mu1) {
    const double tau = mu1 - mu0;
    return std::max((a0 - a1) * tau, 0.0);
}

double fna_upper_integrand(int a0, int a1, double mu0, double mu1) {
    const double w10 = a1 * (1.0 - a0); // moves 0 -> 1
    const double w01 = a0 * (1.0 - a1); // moves 1 -> 0
    return std::min(w10 * mu0 + w01 * (1.0 - mu0), w10 * (1.0 - mu1) + w01 * mu1);
}

double min4(double mu0, double mu1) {
    return std::min(std::min(mu0, 1.0 - mu0), std::min(mu1, 1.0 - mu1));
}

Interval sharp_bounds_exact(const MuFn& mu, const AtomLaw& atoms, const Policy& pi0,
                            const Policy& pi1) {
    atoms.validate();
    double lo = 0.0, hi = 0.0;
    for (std::size_t j = 0; j < atoms.size(); ++j) {
        const std::span<const double> x(atoms.xs[j]);
        const double mu0 = mu(x, 0);
        const double mu1 = mu(x, 1);
        if (!(mu0 >= 0.0 && mu0 <= 1.0 && mu1 >= 0.0 && mu1 <= 1.0))
            throw input_error("sharp_bounds_exact: outcome means must lie in [0,1]");
        const int a0 = pi0(x);
        const int a1 = pi1(x);
        const double lo_j = fna_lower_integrand(a0, a1, mu0, mu1);
        const double hi_j = fna_upper_integrand(a0, a1, mu0, mu1);
        if (lo_j > hi_j + 1e-12)
            throw internal_error("sharp_bounds_exact: endpoint integrands out of order");
        lo += atoms.p[j] * lo_j;
        hi += atoms.p[j] * hi_j;
    }
    return Interval::make(lo, hi);
}

bool is_identifiable(const MuFn& mu, const AtomLaw& atoms, const Policy& pi0,
                     const Policy& pi1) {
    atoms.validate();
    bool clause = true;
    for (std::size_t j = 0; j < atoms.size() && clause; ++j) {
        if (atoms.p[j] <= 0.0) continue;
        const std::span<const double> x(atoms.xs[j]);
        if (pi0(x) == pi1(x)) continue;
        const double mu0 = mu(x, 0);
        const double mu1 = mu(x, 1);
        const bool degenerate0 = std::min(mu0, 1.0 - mu0) <= 1e-12;
        const bool degenerate1 = std::min(mu1, 1.0 - mu1) <= 1e-12;
        if (!degenerate0 && !degenerate1) clause = false;
    }
    // Cross-check against the interval itself: the per-atom clause holds
    // exactly when the width vanishes.
    const double width = sharp_bounds_exact(mu, atoms, pi0, pi1).width();
    if (clause && width > 1e-9)
        throw internal_error("is_identifiable: zero-width clause holds but width is positive");
    if (!clause && width <= 1e-13)
        throw internal_error("is_identifiable: clause fails but width is zero");
    return clause;
}

// ---------------------------------------------------------------------------
// CVaR composition
// ---------------------------------------------------------------------------

Interval cvar_ite_bounds(Interval fna, double ate, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw config_error("cvar_ite_bounds: alpha must lie in (0,1)");
    constexpr double tol = 1e-9;
    if (!(fna.lo >= -tol && fna.hi <= 1.0 + tol && fna.lo <= fna.hi + tol))
        throw input_error("cvar_ite_bounds: fna interval must lie within [0,1]");
    if (!(ate >= -1.0 - tol && ate <= 1.0 + tol))
        throw input_error("cvar_ite_bounds: ate must lie in [-1,1]");
    if (fna.lo < std::max(0.0, -ate) - tol)
        throw input_error("cvar_ite_bounds: infeasible pair (fna lower bound below max{0, -ate})");

    const auto C = [&](double f) {
        const double v = std::max({-1.0, -f / alpha, 1.0 - (1.0 - ate) / alpha});
        return clip(v, -1.0, 1.0) + 0.0; // normalizes -0 to +0
    };
    return Interval::make(C(fna.hi), C(fna.lo));
}

Policy optimal_policy_from(PredictFn tau_hat) {
    if (!tau_hat) throw config_error("optimal_policy_from: empty effect predictor");
    return Policy::threshold(std::move(tau_hat), "optimal");
}

} // namespace harmbound
