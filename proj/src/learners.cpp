#include "harmbound/learners.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "harmbound/errors.hpp"
#include "harmbound/mathstats.hpp"
#include "harmbound/parallel.hpp"

namespace harmbound {

PredictFn fit_constant(double value) {
    return [value](std::span<const double>) { return value; };
}

// ---------------------------------------------------------------------------
// Logistic regression (damped Newton, ridge penalty, intercept prepended)
// ---------------------------------------------------------------------------

namespace {

// Solves the symmetric positive-definite system A w = b in place (Cholesky
// with a jitter retry); A is (p x p) row-major.
void spd_solve(std::vector<double> A, std::vector<double> b, int p, std::vector<double>& out) {
    for (int attempt = 0; attempt < 4; ++attempt) {
        std::vector<double> L = A;
        bool ok = true;
        for (int i = 0; i < p && ok; ++i) {
            for (int j = 0; j <= i; ++j) {
                double s = L[i * p + j];
                for (int t = 0; t < j; ++t) s -= L[i * p + t] * L[j * p + t];
                if (i == j) {
                    if (s <= 0.0) {
                        ok = false;
                        break;
                    }
                    L[i * p + i] = std::sqrt(s);
                } else {
                    L[i * p + j] = s / L[j * p + j];
                }
            }
        }
        if (!ok) {
            const double jitter = std::pow(10.0, attempt - 10);
            for (int i = 0; i < p; ++i) A[i * p + i] += jitter;
            continue;
        }
        std::vector<double> z(p);
        for (int i = 0; i < p; ++i) {
            double s = b[i];
            for (int t = 0; t < i; ++t) s -= L[i * p + t] * z[t];
            z[i] = s / L[i * p + i];
        }
        out.assign(p, 0.0);
        for (int i = p - 1; i >= 0; --i) {
            double s = z[i];
            for (int t = i + 1; t < p; ++t) s -= L[t * p + i] * out[t];
            out[i] = s / L[i * p + i];
        }
        return;
    }
    throw internal_error("logistic fit: normal equations not positive definite");
}

double penalized_nll(const double* X, std::int64_t n, int d, const double* y,
                     const std::vector<double>& w, double ridge) {
    double nll = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        double z = w[0];
        const double* row = X + i * d;
        for (int j = 0; j < d; ++j) z += w[j + 1] * row[j];
        // log(1 + exp(-m)) with m = (2y-1) z, computed stably.
        const double m = (y[i] > 0.5 ? z : -z);
        nll += (m > 0.0) ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    }
    nll /= static_cast<double>(n);
    double pen = 0.0;
    for (double wi : w) pen += wi * wi;
    return nll + 0.5 * ridge * pen;
}

} // namespace

PredictFn fit_logistic(const double* X, std::int64_t n, int d, const double* target,
                       double ridge, int max_iter, double grad_tol) {
    if (n < 1 || d < 1) throw config_error("logistic fit: empty training data");
    const int p = d + 1;
    std::vector<double> w(p, 0.0);
    std::vector<double> grad(p), step, z(n), prob(n);

    double cur = penalized_nll(X, n, d, target, w, ridge);
    for (int iter = 0; iter < max_iter; ++iter) {
        for (std::int64_t i = 0; i < n; ++i) {
            double zi = w[0];
            const double* row = X + i * d;
            for (int j = 0; j < d; ++j) zi += w[j + 1] * row[j];
            z[i] = zi;
            prob[i] = sigmoid(zi);
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        std::vector<double> H(static_cast<std::size_t>(p) * p, 0.0);
        for (std::int64_t i = 0; i < n; ++i) {
            const double r = prob[i] - target[i];
            const double wt = std::max(prob[i] * (1.0 - prob[i]), 1e-10);
            const double* row = X + i * d;
            grad[0] += r;
            H[0] += wt;
            for (int j = 0; j < d; ++j) {
                grad[j + 1] += r * row[j];
                H[(j + 1) * p] += wt * row[j];
                for (int t = 0; t <= j; ++t)
                    H[(j + 1) * p + (t + 1)] += wt * row[j] * row[t];
            }
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        double gmax = 0.0;
        for (int j = 0; j < p; ++j) {
            grad[j] = grad[j] * inv_n + ridge * w[j];
            gmax = std::max(gmax, std::abs(grad[j]));
        }
        if (gmax < grad_tol) break;
        for (int j = 0; j < p; ++j) {
            for (int t = 0; t <= j; ++t) {
                double h = H[j * p + t] * inv_n + (j == t ? ridge : 0.0);
                H[j * p + t] = h;
                H[t * p + j] = h;
            }
        }
        spd_solve(std::move(H), grad, p, step);

        // Backtracking: halve the Newton step until the penalized loss drops.
        double scale = 1.0;
        bool moved = false;
        for (int half = 0; half < 40; ++half) {
            std::vector<double> cand(p);
            for (int j = 0; j < p; ++j) cand[j] = w[j] - scale * step[j];
            const double val = penalized_nll(X, n, d, target, cand, ridge);
            if (val <= cur + 1e-15) {
                w = std::move(cand);
                cur = val;
                moved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!moved) break;
    }

    auto weights = std::make_shared<std::vector<double>>(std::move(w));
    const int dim = d;
    return [weights, dim](std::span<const double> x) {
        if (static_cast<int>(x.size()) != dim)
            throw input_error("logistic predict: dimension mismatch");
        double z = (*weights)[0];
        for (int j = 0; j < dim; ++j) z += (*weights)[j + 1] * x[j];
        return sigmoid(z);
    };
}

// ---------------------------------------------------------------------------
// Boosted depth-1 stumps (least squares)
// ---------------------------------------------------------------------------

namespace {

struct Stump {
    int feature;
    double thr;
    double add_left;  // applied where x[feature] <= thr
    double add_right;
};

struct StumpModel {
    int d;
    double base;
    std::vector<Stump> stumps;
};

} // namespace

PredictFn fit_stumps(const double* X, std::int64_t n, int d, const double* target,
                     int rounds, double shrinkage) {
    if (n < 1 || d < 1) throw config_error("stump fit: empty training data");
    if (rounds < 1 || !(shrinkage > 0.0)) throw config_error("stump fit: bad hyperparameters");

    constexpr int kBins = 32;

    // Quantile-based candidate thresholds and per-row bin ids, per feature.
    // bin[i] = index of the first threshold >= x_i, so "x <= thr[c]" is
    // exactly "bin <= c".
    std::vector<std::vector<double>> thresholds(d);
    std::vector<std::vector<int>> bins(d);
    std::vector<double> col(n);
    for (int j = 0; j < d; ++j) {
        for (std::int64_t i = 0; i < n; ++i) col[i] = X[i * d + j];
        std::vector<double> sorted = col;
        std::sort(sorted.begin(), sorted.end());
        sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
        auto& thr = thresholds[j];
        if (static_cast<int>(sorted.size()) <= kBins) {
            thr = sorted;
        } else {
            thr.reserve(kBins);
            for (int b = 0; b < kBins; ++b) {
                const std::size_t pos =
                    static_cast<std::size_t>((b + 1) * (sorted.size() - 1) / (kBins + 1));
                if (thr.empty() || sorted[pos] != thr.back()) thr.push_back(sorted[pos]);
            }
        }
        auto& bn = bins[j];
        bn.resize(n);
        for (std::int64_t i = 0; i < n; ++i) {
            bn[i] = static_cast<int>(std::lower_bound(thr.begin(), thr.end(), col[i]) -
                                     thr.begin());
        }
    }

    StumpModel model;
    model.d = d;
    {
        double s = 0.0;
        for (std::int64_t i = 0; i < n; ++i) s += target[i];
        model.base = s / static_cast<double>(n);
    }
    std::vector<double> fit(n, model.base), resid(n);
    double resid_ss = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        resid[i] = target[i] - fit[i];
        resid_ss += resid[i] * resid[i];
    }

    std::vector<double> sum(kBins + 1);
    std::vector<std::int64_t> cnt(kBins + 1);
    for (int round = 0; round < rounds; ++round) {
        double total = 0.0;
        for (std::int64_t i = 0; i < n; ++i) total += resid[i];
        const double no_split = total * total / static_cast<double>(n);

        int best_j = -1, best_c = -1;
        double best_score = no_split, best_ml = 0.0, best_mr = 0.0;
        for (int j = 0; j < d; ++j) {
            const auto& thr = thresholds[j];
            const int nb = static_cast<int>(thr.size());
            std::fill(sum.begin(), sum.begin() + nb + 1, 0.0);
            std::fill(cnt.begin(), cnt.begin() + nb + 1, 0);
            const auto& bn = bins[j];
            for (std::int64_t i = 0; i < n; ++i) {
                sum[bn[i]] += resid[i];
                cnt[bn[i]] += 1;
            }
            double sl = 0.0;
            std::int64_t nl = 0;
            for (int c = 0; c < nb; ++c) {
                sl += sum[c];
                nl += cnt[c];
                const std::int64_t nr = n - nl;
                if (nl == 0 || nr == 0) continue;
                const double sr = total - sl;
                const double score = sl * sl / static_cast<double>(nl) +
                                     sr * sr / static_cast<double>(nr);
                if (score > best_score + 1e-14 * (1.0 + resid_ss)) {
                    best_score = score;
                    best_j = j;
                    best_c = c;
                    best_ml = sl / static_cast<double>(nl);
                    best_mr = sr / static_cast<double>(nr);
                }
            }
        }
        if (best_j < 0) break; // no split improves the residual fit

        const double thr = thresholds[best_j][best_c];
        const double al = shrinkage * best_ml, ar = shrinkage * best_mr;
        model.stumps.push_back({best_j, thr, al, ar});
        const auto& bn = bins[best_j];
        resid_ss = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            fit[i] += (bn[i] <= best_c) ? al : ar;
            resid[i] = target[i] - fit[i];
            resid_ss += resid[i] * resid[i];
        }
    }

    auto shared = std::make_shared<StumpModel>(std::move(model));
    return [shared](std::span<const double> x) {
        if (static_cast<int>(x.size()) != shared->d)
            throw input_error("stump predict: dimension mismatch");
        double v = shared->base;
        for (const Stump& s : shared->stumps)
            v += (x[s.feature] <= s.thr) ? s.add_left : s.add_right;
        return v;
    };
}

// ---------------------------------------------------------------------------
// k-nearest-neighbor mean
// ---------------------------------------------------------------------------

namespace {

struct KnnModel {
    std::int64_t n;
    int d;
    int k;
    std::vector<double> X;
    std::vector<double> target;
};

} // namespace

PredictFn fit_knn(std::vector<double> X, std::int64_t n, int d,
                  std::vector<double> target, int k) {
    if (n < 1 || d < 1) throw config_error("knn fit: empty training data");
    if (X.size() != static_cast<std::size_t>(n) * d || target.size() != static_cast<std::size_t>(n))
        throw config_error("knn fit: shape mismatch");
    k = static_cast<int>(clip(k, 1, static_cast<double>(n)));

    auto model = std::make_shared<KnnModel>(KnnModel{n, d, k, std::move(X), std::move(target)});
    return [model](std::span<const double> x) {
        if (static_cast<int>(x.size()) != model->d)
            throw input_error("knn predict: dimension mismatch");
        const std::int64_t n = model->n;
        const int d = model->d;
        std::vector<std::pair<double, std::int64_t>> dist(static_cast<std::size_t>(n));
        const double* base = model->X.data();
        for (std::int64_t i = 0; i < n; ++i) {
            const double* row = base + i * d;
            double s = 0.0;
            for (int j = 0; j < d; ++j) {
                const double diff = x[j] - row[j];
                s += diff * diff;
            }
            dist[i] = {s, i};
        }
        const int k = model->k;
        // (distance, index) ordering makes the selected set unique even with
        // tied distances.
        std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
        double s = 0.0;
        for (int t = 0; t < k; ++t) s += model->target[dist[t].second];
        return s / static_cast<double>(k);
    };
}

void predict_batch(const PredictFn& fn, const double* X, std::int64_t n, int d,
                   double* out, bool force_serial) {
    parallel_for(
        n,
        [&](std::int64_t i) {
            out[i] = fn(std::span<const double>(X + i * d, static_cast<std::size_t>(d)));
        },
        force_serial);
}

} // namespace harmbound
