#pragma once

// Domain types shared by every module: the observation container, treatment
// policies, the hinge-form estimand description, intervals, fold assignment,
// and CSV ingestion.  All types are immutable after construction and safe to
// share across threads.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "harmbound/errors.hpp"

namespace harmbound {

// ---------------------------------------------------------------------------
// ObservationTable: n rows of (x in R^d, arm a in {0,1}, outcome y in {0,1})
// with an optional known-propensity column (all rows or none, values strictly
// inside (0,1)).  Covariates are stored row-major in one flat buffer.
// ---------------------------------------------------------------------------
struct ObservationTable {
    int d = 0;
    std::vector<double> x;        // n*d, row-major
    std::vector<std::uint8_t> a;  // n
    std::vector<std::uint8_t> y;  // n
    std::vector<double> e_known;  // n or empty

    std::int64_t n() const { return static_cast<std::int64_t>(a.size()); }
    bool has_e() const { return !e_known.empty(); }
    std::span<const double> row(std::int64_t i) const {
        return {x.data() + i * d, static_cast<std::size_t>(d)};
    }

    // Validates every invariant; throws data_error with a description.
    static ObservationTable build(int d, std::vector<double> x, std::vector<std::uint8_t> a,
                                  std::vector<std::uint8_t> y, std::vector<double> e_known = {});

    // Row subset (used for fold complements); preserves the e column.
    ObservationTable subset(std::span<const std::int64_t> idx) const;
};

// CSV format: header "x1,...,xd,a,y" with an optional trailing "e" column.
// Malformed content raises data_error naming the offending physical line.
ObservationTable read_csv(const std::string& path);
void write_csv(const ObservationTable& t, const std::string& path);
std::string to_csv(const ObservationTable& t);

// ---------------------------------------------------------------------------
// Policy: a deterministic total map from covariates to an arm.
// ---------------------------------------------------------------------------
struct Policy {
    std::function<int(std::span<const double>)> fn;
    std::string desc;

    int operator()(std::span<const double> x) const { return fn(x) ? 1 : 0; }

    static Policy constant(int arm);
    // Assigns arm 1 where score(x) > 0.
    static Policy threshold(std::function<double(std::span<const double>)> score,
                            std::string desc = "threshold");
    // Assigns arm 1 where x[j] > 0 (j is 0-based).
    static Policy threshold_coord(int j);
    static Policy from_fn(std::function<int(std::span<const double>)> fn,
                          std::string desc = "custom");
};

// ---------------------------------------------------------------------------
// AheSpec: a hinge-form estimand
//   E[ g0_0(X) mu(X,0) + g0_1(X) mu(X,1) + g0_2(X)
//      + sum_l rho_l * min{0, eta_l(X)} ],
//   eta_l(X) = gl_0(X) mu(X,0) + gl_1(X) mu(X,1) + gl_2(X).
// g holds m+1 coefficient triples (base first); every component must stay in
// [-1,1], which bounds each eta_l in [-3,3] automatically.  eta_roles tags how
// each hinge nuisance is learned from data:
//   CATE   : eta_l = gl_1 * tau + gl_2    (requires gl_0 = -gl_1)
//   CATS   : eta_l = gl_1 * sigma + gl_2  (requires gl_0 =  gl_1)
//   CUSTOM : plugged in from the fitted outcome model directly.
// ---------------------------------------------------------------------------
using CoefTriple = std::array<double, 3>;
using CoefFn = std::function<CoefTriple(std::span<const double>)>;

enum class EtaRole { CATE, CATS, CUSTOM };

struct AheSpec {
    std::string name;
    int m = 0;
    std::vector<int> rho;          // m entries, each +1 or -1
    std::vector<CoefFn> g;         // m+1 entries, g[0] is the base triple
    std::vector<EtaRole> eta_roles; // m entries

    void check_shape() const; // size/sign consistency; throws config_error
};

// Probes the coefficient functions on `draws` random points of dimension
// `probe_dim` (standard normal, fixed seed) and asserts every component lies
// in [-1,1] and that each role's structural identity holds.  Construction of
// the built-in estimands runs this with 10^4 draws.
void validate_spec(const AheSpec& spec, int probe_dim = 8, int draws = 10000,
                   std::uint64_t seed = 0x5eedULL);

// ---------------------------------------------------------------------------
// Interval with the computed-bounds tolerance: construction asserts
// lo <= hi + 1e-12 and then clamps lo to min(lo, hi) so floating-point noise
// cannot produce an inverted interval.
// ---------------------------------------------------------------------------
struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    static Interval make(double lo, double hi);
    double width() const { return hi - lo; }
};

// ---------------------------------------------------------------------------
// Fold assignment: row i belongs to evaluation fold (i mod K); the optional
// seeded variant applies a Fisher-Yates permutation of the indices first.
// ---------------------------------------------------------------------------
std::vector<int> fold_assign(std::int64_t n, int K);
std::vector<int> fold_assign(std::int64_t n, int K, std::uint64_t shuffle_seed);

// ---------------------------------------------------------------------------
// Coefficient functions induced by a policy change pi0 -> pi1, consumed by the
// estimand constructors:
//   upper_base  = ( pi1(1-pi0), pi0(1-pi1), 0 )
//   lower_hinge = ( pi0-pi1,    pi1-pi0,    0 )
//   upper_hinge = ( -s,         -s,         s )   with s = (pi1-pi0)^2,
// where s(x) in {0,1} marks the symmetric difference of the two policies.
// ---------------------------------------------------------------------------
struct PolicyCoefs {
    CoefFn upper_base;
    CoefFn lower_hinge;
    CoefFn upper_hinge;
    std::function<double(std::span<const double>)> s;
};

PolicyCoefs policy_indicator_functions(const Policy& pi0, const Policy& pi1);

} // namespace harmbound
