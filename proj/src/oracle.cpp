#include "harmbound/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>

#include "harmbound/mathstats.hpp"
#include "harmbound/parallel.hpp"
#include "harmbound/rng.hpp"

namespace harmbound {

// ---------------------------------------------------------------------------
// Population formulas
// ---------------------------------------------------------------------------

namespace {

void check_x(std::span<const double> x) {
    if (x.size() != static_cast<std::size_t>(DgpSpec::dim))
        throw input_error("population formulas expect 7-dimensional covariates");
}

double xi_of(std::span<const double> x) {
    int parity = 0;
    for (int j = 2; j < 7; ++j) parity ^= (x[j] > 0.0) ? 1 : 0;
    return 2.0 * parity - 1.0;
}

} // namespace

void DgpSpec::validate() const {
    if (!(std::isfinite(beta) && beta >= 0.0))
        throw config_error("population spec: beta must be finite and >= 0");
}

double dgp_mu(std::span<const double> x, int a, double beta) {
    check_x(x);
    if (a != 0 && a != 1) throw input_error("dgp_mu: arm must be 0 or 1");
    if (!(std::isfinite(beta) && beta >= 0.0))
        throw config_error("dgp_mu: beta must be finite and >= 0");
    const double xi = xi_of(x);
    const double sign = (xi * x[1] > 0.0) ? 1.0 : -1.0;   // 2*1[xi x2 > 0] - 1
    const double active = (xi * x[0] > 0.0) ? 1.0 : 0.0;  // 1[xi x1 > 0]
    const double t = beta * sign * ((1.0 - active) + (2.0 * a - 1.0) * active);
    return sigmoid(t);
}

double dgp_propensity(std::span<const double> x) {
    check_x(x);
    const double ind3 = x[2] > 0.0 ? 1.0 : 0.0;
    const double ind4 = x[3] > 0.0 ? 1.0 : 0.0;
    return sigmoid(-(0.25 - ind3 + 0.5 * ind4));
}

double dgp_tau(std::span<const double> x, double beta) {
    return dgp_mu(x, 1, beta) - dgp_mu(x, 0, beta);
}

ObservationTable sample(const DgpSpec& dgp, std::int64_t n) {
    dgp.validate();
    if (n < 1) throw config_error("sample: n must be >= 1");
    const int d = DgpSpec::dim;
    Rng r(derive_seed(dgp.seed, 0x5A17ULL));
    std::vector<double> x(static_cast<std::size_t>(n) * d);
    std::vector<std::uint8_t> a(static_cast<std::size_t>(n));
    std::vector<std::uint8_t> y(static_cast<std::size_t>(n));
    std::vector<double> e(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        double* xi = x.data() + i * d;
        for (int j = 0; j < d; ++j) xi[j] = r.normal();
        const std::span<const double> row(xi, static_cast<std::size_t>(d));
        const double ei = dgp_propensity(row);
        const int ai = r.bernoulli(ei);
        const double mu = dgp_mu(row, ai, dgp.beta);
        a[i] = static_cast<std::uint8_t>(ai);
        y[i] = static_cast<std::uint8_t>(r.bernoulli(mu));
        e[i] = ei;
    }
    return ObservationTable::build(d, std::move(x), std::move(a), std::move(y), std::move(e));
}

// ---------------------------------------------------------------------------
// Monte-Carlo truth
// ---------------------------------------------------------------------------

namespace {

double mean_se(std::span<const double> v, double mean) {
    const std::int64_t n = static_cast<std::int64_t>(v.size());
    if (n < 2) return 0.0;
    std::vector<double> sq(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double d = v[i] - mean;
        sq[i] = d * d;
    }
    return std::sqrt(pairwise_sum(sq) / (static_cast<double>(n) * (n - 1)));
}

} // namespace

double TrueBounds::endpoint(EstimandTag tag) const {
    switch (tag) {
        case EstimandTag::FnaLowerWholesale:
        case EstimandTag::FnaLowerPolicy: return bounds.lo;
        case EstimandTag::FnaUpperWholesale:
        case EstimandTag::FnaUpperPolicy:
        case EstimandTag::FnaUpperOptimal: return bounds.hi;
        case EstimandTag::CvarIte: break;
    }
    throw config_error("true bounds: the cvar-ite family has no single endpoint");
}

TrueBounds true_bounds(const DgpSpec& dgp, const EstimandKind& kind, std::int64_t mc_draws) {
    dgp.validate();
    if (kind.tag == EstimandTag::CvarIte)
        throw config_error(
            "true_bounds: cvar-ite is a composition of three bounds; evaluate its parts");
    if (mc_draws < 10000) throw config_error("true_bounds: need at least 10^4 draws");
    const bool needs_policies =
        kind.tag == EstimandTag::FnaLowerPolicy || kind.tag == EstimandTag::FnaUpperPolicy;
    if (needs_policies && (!kind.pi0.fn || !kind.pi1.fn))
        throw config_error("true_bounds: policy estimands need both policies set");

    const double beta = dgp.beta;
    std::vector<double> lo_v(static_cast<std::size_t>(mc_draws));
    std::vector<double> hi_v(static_cast<std::size_t>(mc_draws));
    const std::int64_t chunk = 65536;
    const std::int64_t n_chunks = (mc_draws + chunk - 1) / chunk;
    const std::uint64_t stream = derive_seed(dgp.seed, 0xB07DULL);

    parallel_for(n_chunks, [&](std::int64_t c) {
        Rng r(derive_seed(stream, static_cast<std::uint64_t>(c)));
        double xbuf[DgpSpec::dim];
        const std::int64_t b = c * chunk;
        const std::int64_t stop = std::min(mc_draws, b + chunk);
        for (std::int64_t i = b; i < stop; ++i) {
            for (int j = 0; j < DgpSpec::dim; ++j) xbuf[j] = r.normal();
            const std::span<const double> x(xbuf, DgpSpec::dim);
            const double mu0 = dgp_mu(x, 0, beta);
            const double mu1 = dgp_mu(x, 1, beta);
            int a0 = 0, a1 = 1;
            switch (kind.tag) {
                case EstimandTag::FnaLowerWholesale:
                case EstimandTag::FnaUpperWholesale: break;
                case EstimandTag::FnaLowerPolicy:
                case EstimandTag::FnaUpperPolicy:
                    a0 = kind.pi0(x);
                    a1 = kind.pi1(x);
                    break;
                case EstimandTag::FnaUpperOptimal:
                    // The optimal policy against its complement; ties go to 0.
                    a1 = (mu1 - mu0 > 0.0) ? 1 : 0;
                    a0 = 1 - a1;
                    break;
                case EstimandTag::CvarIte: break; // rejected above
            }
            lo_v[i] = fna_lower_integrand(a0, a1, mu0, mu1);
            hi_v[i] = fna_upper_integrand(a0, a1, mu0, mu1);
        }
    });

    TrueBounds tb;
    tb.draws = mc_draws;
    const double lo = pairwise_mean(lo_v);
    const double hi = pairwise_mean(hi_v);
    tb.se_lo = mean_se(lo_v, lo);
    tb.se_hi = mean_se(hi_v, hi);
    tb.bounds = Interval::make(lo, hi);
    return tb;
}

// ---------------------------------------------------------------------------
// Brute-force coupling oracle
// ---------------------------------------------------------------------------

Interval coupling_bounds_bruteforce(const CouplingInstance& inst, const Policy& pi0,
                                    const Policy& pi1) {
    if (inst.atoms.empty()) throw input_error("coupling oracle: need at least one atom");
    if (!(inst.h > 0.0 && inst.h <= 1e-3))
        throw config_error("coupling oracle: grid resolution must lie in (0, 1e-3]");
    if (!pi0.fn || !pi1.fn) throw input_error("coupling oracle: both policies must be set");

    double total_p = 0.0;
    for (const auto& atom : inst.atoms) {
        if (!(atom.p >= 0.0))
            throw input_error("coupling oracle: atom probabilities must be >= 0");
        if (!(atom.mu0 >= 0.0 && atom.mu0 <= 1.0 && atom.mu1 >= 0.0 && atom.mu1 <= 1.0))
            throw input_error("coupling oracle: outcome means must lie in [0,1]");
        total_p += atom.p;
    }
    if (std::abs(total_p - 1.0) > 1e-12)
        throw input_error("coupling oracle: atom probabilities must sum to 1");

    double lo = 0.0, hi = 0.0;
    for (const auto& atom : inst.atoms) {
        const std::span<const double> x(atom.x);
        const int a0 = pi0(x);
        const int a1 = pi1(x);
        const double w10 = static_cast<double>(a1 * (1 - a0));
        const double w01 = static_cast<double>(a0 * (1 - a1));
        const double qmin = std::max(0.0, atom.mu0 - atom.mu1);
        const double qmax = std::min(atom.mu0, 1.0 - atom.mu1);
        const std::int64_t steps = static_cast<std::int64_t>((qmax - qmin) / inst.h);
        double vmin = std::numeric_limits<double>::infinity();
        double vmax = -vmin;
        for (std::int64_t t = 0; t <= steps + 1; ++t) {
            // h-grid from qmin, with the upper endpoint always included.
            const double q = std::min(qmin + static_cast<double>(t) * inst.h, qmax);
            const double p10 = q;
            const double p11 = atom.mu0 - q;
            const double p01 = atom.mu1 - atom.mu0 + q;
            const double p00 = 1.0 - atom.mu1 - q;
            if (p10 < -1e-12 || p11 < -1e-12 || p01 < -1e-12 || p00 < -1e-12)
                throw internal_error("coupling oracle: negative cell probability on the grid");
            if (std::abs(p10 + p11 + p01 + p00 - 1.0) > 1e-9)
                throw internal_error("coupling oracle: cell probabilities do not sum to 1");
            if (std::abs(p10 + p11 - atom.mu0) > 1e-9 || std::abs(p01 + p11 - atom.mu1) > 1e-9)
                throw internal_error("coupling oracle: margins not reproduced");
            const double v = w10 * p10 + w01 * p01;
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
        }
        lo += atom.p * vmin;
        hi += atom.p * vmax;
    }
    return Interval::make(lo, hi);
}

RandomInstance random_coupling_instance(std::uint64_t seed, int max_atoms, double h) {
    if (max_atoms < 1) throw config_error("random instance: max_atoms must be >= 1");
    Rng r(derive_seed(seed, 0xC0C0ULL));
    int J = 1 + static_cast<int>(r.uniform() * max_atoms);
    if (J > max_atoms) J = max_atoms;

    RandomInstance out;
    out.inst.h = h;
    std::vector<double> w(J);
    double total = 0.0;
    for (int j = 0; j < J; ++j) {
        w[j] = 0.05 + r.uniform();
        total += w[j];
    }

    struct Entry {
        double x, mu0, mu1;
    };
    auto entries = std::make_shared<std::vector<Entry>>();
    double acc = 0.0;
    for (int j = 0; j < J; ++j) {
        CouplingAtom atom;
        atom.x = {r.normal()};
        auto snap = [](double m) { return m < 0.05 ? 0.0 : (m > 0.95 ? 1.0 : m); };
        atom.mu0 = snap(r.uniform());
        atom.mu1 = snap(r.uniform());
        atom.p = (j + 1 == J) ? std::max(0.0, 1.0 - acc) : w[j] / total;
        acc += atom.p;
        entries->push_back({atom.x[0], atom.mu0, atom.mu1});
        out.law.xs.push_back(atom.x);
        out.law.p.push_back(atom.p);
        out.inst.atoms.push_back(std::move(atom));
    }
    out.mu = [entries](std::span<const double> x, int a) -> double {
        for (const auto& e : *entries)
            if (x[0] == e.x) return a ? e.mu1 : e.mu0;
        throw input_error("random instance: covariate is not one of the atoms");
    };
    auto pick = [&r]() {
        const double u = r.uniform();
        if (u < 1.0 / 3.0) return Policy::constant(0);
        if (u < 2.0 / 3.0) return Policy::constant(1);
        return Policy::threshold_coord(0);
    };
    out.pi0 = pick();
    out.pi1 = pick();
    return out;
}

// ---------------------------------------------------------------------------
// Margin diagnostic
// ---------------------------------------------------------------------------

MarginProfile margin_profile(std::span<const double> eta_values,
                             std::span<const double> t_grid) {
    if (eta_values.empty()) throw input_error("margin profile: need at least one value");
    std::vector<double> mags;
    mags.reserve(eta_values.size());
    for (double v : eta_values) {
        if (!std::isfinite(v)) throw input_error("margin profile: values must be finite");
        mags.push_back(std::fabs(v));
    }
    std::sort(mags.begin(), mags.end());
    const auto zero_end = std::upper_bound(mags.begin(), mags.end(), 0.0);
    const double n = static_cast<double>(mags.size());

    MarginProfile out;
    out.points.reserve(t_grid.size());
    for (double t : t_grid) {
        double p = 0.0;
        if (t > 0.0) {
            const auto it = std::upper_bound(mags.begin(), mags.end(), t);
            p = static_cast<double>(it - zero_end) / n;
        }
        out.points.emplace_back(t, p);
    }

    // Least-squares sharpness exponent over the usable (t > 0, P > 0) points.
    std::vector<double> lx, ly;
    for (const auto& [t, p] : out.points)
        if (t > 0.0 && p > 0.0) {
            lx.push_back(std::log(t));
            ly.push_back(std::log(p));
        }
    out.slope = std::numeric_limits<double>::quiet_NaN();
    if (lx.size() >= 2) {
        const double mx = pairwise_mean(lx);
        const double my = pairwise_mean(ly);
        double sxx = 0.0, sxy = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxx += (lx[i] - mx) * (lx[i] - mx);
            sxy += (lx[i] - mx) * (ly[i] - my);
        }
        if (sxx > 0.0) out.slope = sxy / sxx;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Replication harness
// ---------------------------------------------------------------------------

namespace {

double rmse_against(std::span<const double> points, double truth) {
    std::vector<double> sq(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double d = points[i] - truth;
        sq[i] = d * d;
    }
    return std::sqrt(pairwise_mean(sq));
}

} // namespace

std::vector<ReplicateRow> replicate(const DgpSpec& dgp, const std::vector<EstimandKind>& kinds,
                                    std::span<const std::int64_t> n_grid, int reps,
                                    const LearnerConfig& cfg, int folds,
                                    std::int64_t truth_draws) {
    dgp.validate();
    cfg.validate();
    if (reps < 2) throw config_error("replicate: need at least 2 replications");
    if (kinds.empty()) throw config_error("replicate: need at least one estimand");
    if (n_grid.empty()) throw config_error("replicate: need at least one sample size");

    const std::size_t S = kinds.size();
    std::vector<AheSpec> specs;
    specs.reserve(S);
    std::vector<double> truth(S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
        specs.push_back(build_spec(kinds[s]));
        truth[s] = true_bounds(dgp, kinds[s], truth_draws).endpoint(kinds[s].tag);
    }

    const double nan = std::numeric_limits<double>::quiet_NaN();
    std::vector<ReplicateRow> rows;
    rows.reserve(2 * S * n_grid.size());
    for (std::int64_t n : n_grid) {
        if (n < 2 * static_cast<std::int64_t>(folds))
            throw config_error("replicate: every sample size must be >= 2*folds");
        std::vector<std::vector<double>> pt(S, std::vector<double>(reps, 0.0));
        std::vector<std::vector<double>> cov(S, std::vector<double>(reps, 0.0));
        std::vector<std::vector<double>> wid(S, std::vector<double>(reps, 0.0));
        std::vector<std::vector<double>> plug(S, std::vector<double>(reps, 0.0));

        parallel_for(reps, [&](std::int64_t rep) {
            const std::uint64_t rep_seed = derive_seed(dgp.seed, static_cast<std::uint64_t>(n),
                                                       static_cast<std::uint64_t>(rep));
            DgpSpec draw = dgp;
            draw.seed = rep_seed;
            const ObservationTable tab = sample(draw, n);
            LearnerConfig rep_cfg = cfg;
            rep_cfg.seed = rep_seed;
            const MultiEstimate me = estimate_multi(tab, specs, rep_cfg, folds, 0.95);
            for (std::size_t s = 0; s < S; ++s) {
                const EstimateReport& r = me.reports[s];
                pt[s][rep] = r.point;
                cov[s][rep] = (r.ci.lo <= truth[s] && truth[s] <= r.ci.hi) ? 1.0 : 0.0;
                wid[s][rep] = r.ci.width();
                plug[s][rep] = me.plugin_points[s];
            }
        });

        for (std::size_t s = 0; s < S; ++s) {
            const std::string name = estimand_name(kinds[s].tag);
            rows.push_back({n, name, "ahe", rmse_against(pt[s], truth[s]), pairwise_mean(cov[s]),
                            pairwise_mean(wid[s]), reps, dgp.seed});
            rows.push_back({n, name, "plugin", rmse_against(plug[s], truth[s]), nan, nan, reps,
                            dgp.seed});
        }
    }
    return rows;
}

std::vector<ReplicateRow> replicate(const DgpSpec& dgp, const EstimandKind& kind,
                                    std::span<const std::int64_t> n_grid, int reps,
                                    const LearnerConfig& cfg, int folds,
                                    std::int64_t truth_draws) {
    return replicate(dgp, std::vector<EstimandKind>{kind}, n_grid, reps, cfg, folds, truth_draws);
}

LearnerConfig default_replicate_config() {
    LearnerConfig cfg;
    cfg.propensity = PropensityMode::KnownColumn;
    cfg.outcome = OutcomeLearner::KNearestMean;
    cfg.eta_mode = EtaMode::DrPseudoOutcome;
    cfg.eta_learner = EtaLearner::KNearestMean;
    cfg.features = FeatureMap::Signs;
    cfg.k = 0;      // automatic: ceil(sqrt(training rows))
    cfg.eta_k = 25; // small neighborhoods keep the hinge signal sharp
    return cfg;
}

std::string replicate_csv(const std::vector<ReplicateRow>& rows) {
    std::string out = "n,estimand,estimator,rmse,coverage,mean_ci_width,reps,seed\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%lld,%s,%s,%.10g,%.10g,%.10g,%d,%llu\n",
                      static_cast<long long>(r.n), r.estimand.c_str(), r.estimator.c_str(),
                      r.rmse, r.coverage, r.mean_ci_width, r.reps,
                      static_cast<unsigned long long>(r.seed));
        out += buf;
    }
    return out;
}

void write_replicate_csv(const std::vector<ReplicateRow>& rows, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw data_error("cannot open for writing: " + path);
    f << replicate_csv(rows);
    if (!f) throw data_error("write failed: " + path);
}

} // namespace harmbound
