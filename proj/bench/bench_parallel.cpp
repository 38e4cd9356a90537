// Compares the serial reference path with the OpenMP path for the parallel
// kernels: batch prediction, the cross-fitted estimator, and the Monte-Carlo
// truth evaluation.  Results must be bit-identical regardless of thread count
// (every loop index owns its output slot; reductions are ordered pairwise
// sums), so besides timings this doubles as a correctness check and exits
// nonzero on any mismatch.  --quick shrinks the workloads for use as a test.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>
#include <vector>

#include "harmbound/ahe.hpp"
#include "harmbound/estimands.hpp"
#include "harmbound/learners.hpp"
#include "harmbound/nuisance.hpp"
#include "harmbound/oracle.hpp"
#include "harmbound/parallel.hpp"
#include "harmbound/rng.hpp"

using namespace harmbound;

namespace {

using Clock = std::chrono::steady_clock;

template <class F>
double timed(F&& f) {
    const auto t0 = Clock::now();
    f();
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void set_thread_cap(int threads) {
    if (threads > 0)
        ::setenv("HARMBOUND_THREADS", std::to_string(threads).c_str(), 1);
    else
        ::unsetenv("HARMBOUND_THREADS");
}

struct Row {
    std::string name;
    double serial_s = 0.0;
    double parallel_s = 0.0;
    bool identical = false;
};

void print_row(const Row& r) {
    std::printf("%-28s  serial %8.3f s  parallel %8.3f s  speedup %5.2fx  %s\n", r.name.c_str(),
                r.serial_s, r.parallel_s,
                r.parallel_s > 0.0 ? r.serial_s / r.parallel_s : 0.0,
                r.identical ? "bit-identical" : "MISMATCH");
    std::fflush(stdout);
}

} // namespace

int main(int argc, char** argv) {
    bool quick = false;
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--quick") quick = true;

    std::printf("bench: serial reference vs OpenMP path (threads available: %d)%s\n",
                max_threads(), quick ? "  [--quick]" : "");
    std::vector<Row> rows;

    // ---- batch prediction over a boosted-stumps model ---------------------
    {
        const std::int64_t n_train = quick ? 500 : 2000;
        const std::int64_t n_eval = quick ? 20000 : 200000;
        const int d = 6;
        Rng r(42);
        std::vector<double> X(static_cast<std::size_t>(n_train * d));
        std::vector<double> y(static_cast<std::size_t>(n_train));
        for (auto& v : X) v = r.normal();
        for (std::int64_t i = 0; i < n_train; ++i)
            y[static_cast<std::size_t>(i)] =
                X[static_cast<std::size_t>(i * d)] > 0.3 ? 0.9 : 0.1;
        const PredictFn model = fit_stumps(X.data(), n_train, d, y.data(), 200, 0.1);

        std::vector<double> Xe(static_cast<std::size_t>(n_eval * d));
        for (auto& v : Xe) v = r.normal();
        std::vector<double> out_s(static_cast<std::size_t>(n_eval));
        std::vector<double> out_p(static_cast<std::size_t>(n_eval));

        Row row;
        row.name = "predict_batch (stumps)";
        row.serial_s =
            timed([&] { predict_batch(model, Xe.data(), n_eval, d, out_s.data(), true); });
        row.parallel_s =
            timed([&] { predict_batch(model, Xe.data(), n_eval, d, out_p.data(), false); });
        row.identical =
            std::memcmp(out_s.data(), out_p.data(), out_s.size() * sizeof(double)) == 0;
        rows.push_back(row);
        print_row(row);
    }

    // ---- cross-fitted estimate on a synthetic draw ------------------------
    {
        DgpSpec dgp;
        dgp.beta = 3.0;
        dgp.seed = 314;
        const ObservationTable tab = sample(dgp, quick ? 3200 : 12800);
        const AheSpec spec = build_spec(EstimandKind::fna_upper());
        LearnerConfig cfg = default_replicate_config();
        cfg.seed = 7;

        Row row;
        row.name = "estimate (cross-fitted)";
        EstimateReport rep_s, rep_p;
        set_thread_cap(1);
        row.serial_s = timed([&] { rep_s = estimate(tab, spec, cfg, 5, 0.95); });
        set_thread_cap(0);
        row.parallel_s = timed([&] { rep_p = estimate(tab, spec, cfg, 5, 0.95); });
        row.identical = rep_s.to_json().dump() == rep_p.to_json().dump() &&
                        rep_s.point == rep_p.point && rep_s.se == rep_p.se;
        rows.push_back(row);
        print_row(row);
    }

    // ---- Monte-Carlo truth over the synthetic population ------------------
    {
        DgpSpec dgp;
        dgp.beta = 3.0;
        dgp.seed = 2718;
        const std::int64_t draws = quick ? 200000 : 2000000;

        Row row;
        row.name = "true_bounds (Monte Carlo)";
        TrueBounds tb_s, tb_p;
        set_thread_cap(1);
        row.serial_s =
            timed([&] { tb_s = true_bounds(dgp, EstimandKind::fna_lower(), draws); });
        set_thread_cap(0);
        row.parallel_s =
            timed([&] { tb_p = true_bounds(dgp, EstimandKind::fna_lower(), draws); });
        row.identical = tb_s.bounds.lo == tb_p.bounds.lo && tb_s.bounds.hi == tb_p.bounds.hi &&
                        tb_s.se_lo == tb_p.se_lo && tb_s.se_hi == tb_p.se_hi;
        rows.push_back(row);
        print_row(row);
    }

    bool all_ok = true;
    for (const auto& r : rows) all_ok = all_ok && r.identical;
    std::printf("bench: %zu kernels, %s\n", rows.size(),
                all_ok ? "all serial/parallel results bit-identical"
                       : "SERIAL/PARALLEL MISMATCH");
    return all_ok ? 0 : 1;
}
