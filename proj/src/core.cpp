#include "harmbound/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "harmbound/rng.hpp"

namespace harmbound {

// ---------------------------------------------------------------------------
// ObservationTable
// ---------------------------------------------------------------------------

ObservationTable ObservationTable::build(int d, std::vector<double> x,
                                         std::vector<std::uint8_t> a,
                                         std::vector<std::uint8_t> y,
                                         std::vector<double> e_known) {
    const std::size_t n = a.size();
    if (d < 1) throw data_error("observation table: covariate dimension must be >= 1");
    if (n < 1) throw data_error("observation table: at least one row required");
    if (y.size() != n) throw data_error("observation table: a/y length mismatch");
    if (x.size() != n * static_cast<std::size_t>(d))
        throw data_error("observation table: covariate buffer size does not match n*d");
    if (!e_known.empty() && e_known.size() != n)
        throw data_error("observation table: propensity column must cover all rows or none");
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] > 1) throw data_error("observation table: arm must be 0 or 1");
        if (y[i] > 1) throw data_error("observation table: outcome must be 0 or 1");
        if (!e_known.empty() && !(e_known[i] > 0.0 && e_known[i] < 1.0))
            throw data_error("observation table: known propensity must lie strictly in (0,1)");
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw data_error("observation table: non-finite covariate");
    }
    ObservationTable t;
    t.d = d;
    t.x = std::move(x);
    t.a = std::move(a);
    t.y = std::move(y);
    t.e_known = std::move(e_known);
    return t;
}

ObservationTable ObservationTable::subset(std::span<const std::int64_t> idx) const {
    ObservationTable out;
    out.d = d;
    out.x.reserve(idx.size() * d);
    out.a.reserve(idx.size());
    out.y.reserve(idx.size());
    if (has_e()) out.e_known.reserve(idx.size());
    for (std::int64_t i : idx) {
        const auto r = row(i);
        out.x.insert(out.x.end(), r.begin(), r.end());
        out.a.push_back(a[i]);
        out.y.push_back(y[i]);
        if (has_e()) out.e_known.push_back(e_known[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v))
        throw data_error(where + ": cannot parse number '" + s + "'");
    return v;
}

std::uint8_t parse_binary(const std::string& s, const std::string& where) {
    const double v = parse_number(s, where);
    if (v == 0.0) return 0;
    if (v == 1.0) return 1;
    throw data_error(where + ": value '" + s + "' must be 0 or 1");
}

void format_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

} // namespace

ObservationTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open '" + path + "' for reading");

    std::string line;
    if (!std::getline(in, line)) throw data_error(path + " line 1: missing header");
    const auto header = split_csv_line(line);

    // Expected header: x1..xd, a, y [, e]
    int d = 0;
    while (d < static_cast<int>(header.size()) &&
           header[d] == "x" + std::to_string(d + 1)) {
        ++d;
    }
    const int rest = static_cast<int>(header.size()) - d;
    const bool with_e = (rest == 3);
    if (d < 1 || (rest != 2 && rest != 3) || header[d] != "a" || header[d + 1] != "y" ||
        (with_e && header[d + 2] != "e"))
        throw data_error(path + " line 1: header must read x1,...,xd,a,y[,e]");

    std::vector<double> xs;
    std::vector<std::uint8_t> as, ys;
    std::vector<double> es;
    std::int64_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto cells = split_csv_line(line);
        const std::string where = path + " line " + std::to_string(lineno);
        if (static_cast<int>(cells.size()) != d + 2 + (with_e ? 1 : 0))
            throw data_error(where + ": expected " + std::to_string(d + 2 + (with_e ? 1 : 0)) +
                             " fields, found " + std::to_string(cells.size()));
        for (int j = 0; j < d; ++j) xs.push_back(parse_number(cells[j], where));
        as.push_back(parse_binary(cells[d], where));
        ys.push_back(parse_binary(cells[d + 1], where));
        if (with_e) {
            const double e = parse_number(cells[d + 2], where);
            if (!(e > 0.0 && e < 1.0))
                throw data_error(where + ": propensity must lie strictly in (0,1)");
            es.push_back(e);
        }
    }
    if (as.empty()) throw data_error(path + ": no data rows");
    return ObservationTable::build(d, std::move(xs), std::move(as), std::move(ys), std::move(es));
}

std::string to_csv(const ObservationTable& t) {
    std::string out;
    for (int j = 0; j < t.d; ++j) {
        out += "x" + std::to_string(j + 1) + ",";
    }
    out += t.has_e() ? "a,y,e\n" : "a,y\n";
    for (std::int64_t i = 0; i < t.n(); ++i) {
        const auto r = t.row(i);
        for (int j = 0; j < t.d; ++j) {
            format_double(out, r[j]);
            out += ',';
        }
        out += t.a[i] ? '1' : '0';
        out += ',';
        out += t.y[i] ? '1' : '0';
        if (t.has_e()) {
            out += ',';
            format_double(out, t.e_known[i]);
        }
        out += '\n';
    }
    return out;
}

void write_csv(const ObservationTable& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw data_error("cannot open '" + path + "' for writing");
    out << to_csv(t);
    if (!out) throw data_error("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Policy
// ---------------------------------------------------------------------------

Policy Policy::constant(int arm) {
    if (arm != 0 && arm != 1) throw config_error("policy: constant arm must be 0 or 1");
    Policy p;
    p.fn = [arm](std::span<const double>) { return arm; };
    p.desc = arm ? "constant1" : "constant0";
    return p;
}

Policy Policy::threshold(std::function<double(std::span<const double>)> score,
                         std::string desc) {
    if (!score) throw config_error("policy: empty score function");
    Policy p;
    p.fn = [score = std::move(score)](std::span<const double> x) {
        return score(x) > 0.0 ? 1 : 0;
    };
    p.desc = std::move(desc);
    return p;
}

Policy Policy::threshold_coord(int j) {
    if (j < 0) throw config_error("policy: coordinate index must be >= 0");
    Policy p;
    p.fn = [j](std::span<const double> x) {
        if (j >= static_cast<int>(x.size()))
            throw input_error("policy: coordinate " + std::to_string(j + 1) +
                              " out of range for dimension " + std::to_string(x.size()));
        return x[j] > 0.0 ? 1 : 0;
    };
    p.desc = "threshold:" + std::to_string(j + 1);
    return p;
}

Policy Policy::from_fn(std::function<int(std::span<const double>)> fn, std::string desc) {
    if (!fn) throw config_error("policy: empty function");
    Policy p;
    p.fn = std::move(fn);
    p.desc = std::move(desc);
    return p;
}

// ---------------------------------------------------------------------------
// AheSpec
// ---------------------------------------------------------------------------

void AheSpec::check_shape() const {
    if (m < 0) throw config_error("spec '" + name + "': m must be >= 0");
    if (static_cast<int>(rho.size()) != m)
        throw config_error("spec '" + name + "': rho must have m entries");
    if (static_cast<int>(g.size()) != m + 1)
        throw config_error("spec '" + name + "': g must have m+1 coefficient triples");
    if (static_cast<int>(eta_roles.size()) != m)
        throw config_error("spec '" + name + "': eta_roles must have m entries");
    for (int r : rho) {
        if (r != 1 && r != -1) throw config_error("spec '" + name + "': rho entries must be +1 or -1");
    }
    for (const auto& fn : g) {
        if (!fn) throw config_error("spec '" + name + "': empty coefficient function");
    }
}

void validate_spec(const AheSpec& spec, int probe_dim, int draws, std::uint64_t seed) {
    spec.check_shape();
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(probe_dim));
    for (int t = 0; t < draws; ++t) {
        for (auto& v : x) v = rng.normal();
        for (int l = 0; l <= spec.m; ++l) {
            const CoefTriple c = spec.g[l](x);
            for (double comp : c) {
                if (!(comp >= -1.0 - 1e-12 && comp <= 1.0 + 1e-12))
                    throw config_error("spec '" + spec.name +
                                       "': coefficient component outside [-1,1]");
            }
            if (l >= 1) {
                // Structural identities the nuisance roles rely on.
                const EtaRole role = spec.eta_roles[l - 1];
                if (role == EtaRole::CATE && std::abs(c[0] + c[1]) > 1e-12)
                    throw config_error("spec '" + spec.name +
                                       "': CATE hinge requires g0 = -g1");
                if (role == EtaRole::CATS && std::abs(c[0] - c[1]) > 1e-12)
                    throw config_error("spec '" + spec.name +
                                       "': CATS hinge requires g0 = g1");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Interval
// ---------------------------------------------------------------------------

Interval Interval::make(double lo, double hi) {
    if (!(lo <= hi + 1e-12))
        throw internal_error("interval: lo exceeds hi beyond tolerance (lo=" +
                             std::to_string(lo) + ", hi=" + std::to_string(hi) + ")");
    Interval iv;
    iv.lo = std::min(lo, hi);
    iv.hi = hi;
    return iv;
}

// ---------------------------------------------------------------------------
// Fold assignment
// ---------------------------------------------------------------------------

std::vector<int> fold_assign(std::int64_t n, int K) {
    if (K < 1) throw config_error("fold_assign: K must be >= 1");
    if (K > n) throw config_error("fold_assign: K must not exceed n");
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) fold[i] = static_cast<int>(i % K);
    return fold;
}

std::vector<int> fold_assign(std::int64_t n, int K, std::uint64_t shuffle_seed) {
    if (K < 1) throw config_error("fold_assign: K must be >= 1");
    if (K > n) throw config_error("fold_assign: K must not exceed n");
    std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) perm[i] = i;
    Rng rng(shuffle_seed);
    for (std::int64_t i = n - 1; i > 0; --i) {
        const std::int64_t j = static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(i + 1));
        std::swap(perm[i], perm[j]);
    }
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (std::int64_t pos = 0; pos < n; ++pos) fold[perm[pos]] = static_cast<int>(pos % K);
    return fold;
}

// ---------------------------------------------------------------------------
// Policy-induced coefficient functions
// ---------------------------------------------------------------------------

PolicyCoefs policy_indicator_functions(const Policy& pi0, const Policy& pi1) {
    if (!pi0.fn || !pi1.fn) throw config_error("policy_indicator_functions: empty policy");
    auto p0 = pi0.fn;
    auto p1 = pi1.fn;
    PolicyCoefs out;
    out.upper_base = [p0, p1](std::span<const double> x) -> CoefTriple {
        const double a0 = p0(x) ? 1.0 : 0.0;
        const double a1 = p1(x) ? 1.0 : 0.0;
        return {a1 * (1.0 - a0), a0 * (1.0 - a1), 0.0};
    };
    out.lower_hinge = [p0, p1](std::span<const double> x) -> CoefTriple {
        const double a0 = p0(x) ? 1.0 : 0.0;
        const double a1 = p1(x) ? 1.0 : 0.0;
        return {a0 - a1, a1 - a0, 0.0};
    };
    out.upper_hinge = [p0, p1](std::span<const double> x) -> CoefTriple {
        const double a0 = p0(x) ? 1.0 : 0.0;
        const double a1 = p1(x) ? 1.0 : 0.0;
        const double s = (a1 - a0) * (a1 - a0);
        return {-s, -s, s};
    };
    out.s = [p0, p1](std::span<const double> x) {
        const double diff = (p1(x) ? 1.0 : 0.0) - (p0(x) ? 1.0 : 0.0);
        return diff * diff;
    };
    return out;
}

} // namespace harmbound
