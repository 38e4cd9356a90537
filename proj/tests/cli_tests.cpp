// Integration tests for the harmbound command-line tool. Each case shells out
// to the built binary (path injected via HARMBOUND_CLI_PATH) and checks exit
// codes, report schemas, numeric sanity, and byte-level determinism.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const std::string& scratch_dir() {
    static const std::string dir = [] {
        fs::path p = fs::temp_directory_path() /
                     ("harmbound_cli_" + std::to_string(static_cast<long>(::getpid())));
        fs::create_directories(p);
        return p.string();
    }();
    return dir;
}

std::string path_in_scratch(const std::string& name) { return scratch_dir() + "/" + name; }

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct RunResult {
    int code = -1;
    std::string out;
    std::string err;
};

// Runs the CLI with the given argument string, capturing exit code and both
// output streams through temp files.
RunResult run_cli(const std::string& args) {
    static int counter = 0;
    const std::string base = path_in_scratch("cap" + std::to_string(counter++));
    const std::string cmd =
        std::string(HARMBOUND_CLI_PATH) + " " + args + " > " + base + ".out 2> " + base + ".err";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.code = (raw >= 0 && WIFEXITED(raw)) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(base + ".out");
    r.err = slurp(base + ".err");
    return r;
}

// A small dataset with binary covariable structure, alternating arms, a known
// propensity column, and not a single event: y = 0 everywhere.
std::string write_zero_outcome_csv(const std::string& name, int n = 80) {
    const std::string path = path_in_scratch(name);
    std::ofstream f(path, std::ios::binary);
    f << "x1,x2,x3,a,y,e\n";
    for (int i = 0; i < n; ++i) {
        f << (i % 7 - 3) << "," << ((i * 3) % 5 - 2) << "," << (i % 2 == 0 ? -0.5 : 0.5) << ","
          << i % 2 << ",0,0.5\n";
    }
    return path;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line))
        if (!line.empty()) lines.push_back(line);
    return lines;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    return fields;
}

} // namespace

TEST_CASE("simulate then estimate round trip") {
    const std::string data = path_in_scratch("roundtrip.csv");
    const RunResult sim = run_cli("simulate --beta 3 --n 400 --seed 9 --out " + data);
    REQUIRE(sim.code == 0);
    CHECK(sim.out.find("wrote 400 rows") != std::string::npos);
    const std::string csv = slurp(data);
    CHECK(csv.rfind("x1,x2,x3,x4,x5,x6,x7,a,y,e\n", 0) == 0);

    const std::string rep_path = path_in_scratch("roundtrip.json");
    const RunResult est = run_cli("estimate --data " + data +
                                  " --estimand fna-lower --propensity known-column --seed 3"
                                  " --out " + rep_path);
    REQUIRE(est.code == 0);
    CHECK(est.out.find("fna-lower") != std::string::npos);
    CHECK(est.out.find("point") != std::string::npos);

    const json j = json::parse(slurp(rep_path));
    CHECK(j.at("estimand") == "fna-lower");
    CHECK(j.at("n") == 400);
    CHECK(j.at("folds") == 5);
    CHECK(j.at("seed") == 3);
    CHECK(j.at("ci_level") == doctest::Approx(0.95));
    REQUIRE(j.at("ci").is_array());
    REQUIRE(j.at("ci").size() == 2);
    const double point = j.at("point").get<double>();
    const double lo = j.at("ci")[0].get<double>();
    const double hi = j.at("ci")[1].get<double>();
    CHECK(lo <= point);
    CHECK(point <= hi);
    CHECK(j.at("se").get<double>() >= 0.0);
    CHECK(j.at("learners").is_object());
    REQUIRE(j.at("per_fold").is_array());
    CHECK(j.at("per_fold").size() == 5);

    // Same seed, same data: the report must be byte-identical across runs.
    const std::string rep2 = path_in_scratch("roundtrip2.json");
    const RunResult est2 = run_cli("estimate --data " + data +
                                   " --estimand fna-lower --propensity known-column --seed 3"
                                   " --out " + rep2);
    REQUIRE(est2.code == 0);
    CHECK(slurp(rep_path) == slurp(rep2));
}

TEST_CASE("simulate output is byte-identical for equal seeds") {
    const std::string a = path_in_scratch("sim_a.csv");
    const std::string b = path_in_scratch("sim_b.csv");
    const std::string c = path_in_scratch("sim_c.csv");
    REQUIRE(run_cli("simulate --beta 2 --n 300 --seed 17 --out " + a).code == 0);
    REQUIRE(run_cli("simulate --beta 2 --n 300 --seed 17 --out " + b).code == 0);
    REQUIRE(run_cli("simulate --beta 2 --n 300 --seed 18 --out " + c).code == 0);
    const std::string sa = slurp(a);
    CHECK(sa == slurp(b));
    CHECK(sa != slurp(c));
    CHECK(split_lines(sa).size() == 301); // header + 300 rows

    // Without --out the rows stream to stdout, identically.
    const RunResult piped = run_cli("simulate --beta 2 --n 300 --seed 17");
    REQUIRE(piped.code == 0);
    CHECK(piped.out == sa);
}

TEST_CASE("estimate reports zero when there are no events at all") {
    const std::string data = write_zero_outcome_csv("zeros.csv");
    const std::string rep_path = path_in_scratch("zeros.json");
    const RunResult est = run_cli(
        "estimate --data " + data +
        " --estimand fna-lower --propensity known-column --outcome k-nearest-mean"
        " --eta-learner k-nearest-mean --out " + rep_path);
    REQUIRE(est.code == 0);
    const json j = json::parse(slurp(rep_path));
    const double point = j.at("point").get<double>();
    const double lo = j.at("ci")[0].get<double>();
    const double hi = j.at("ci")[1].get<double>();
    CHECK(point == 0.0);
    CHECK(lo <= 0.0);
    CHECK(hi >= 0.0);
}

TEST_CASE("estimate recovers the upper bound on a large synthetic draw") {
    const std::string data = path_in_scratch("big.csv");
    REQUIRE(run_cli("simulate --beta 3 --n 12800 --seed 11 --out " + data).code == 0);
    const std::string rep_path = path_in_scratch("big_upper.json");
    const RunResult est = run_cli(
        "estimate --data " + data +
        " --estimand fna-upper --propensity known-column --outcome k-nearest-mean"
        " --eta-learner k-nearest-mean --features signs --eta-k 25 --seed 2 --out " + rep_path);
    REQUIRE(est.code == 0);
    const json j = json::parse(slurp(rep_path));
    const double point = j.at("point").get<double>();
    const double se = j.at("se").get<double>();
    const double truth = 0.2737129; // closed-form upper endpoint at beta = 3
    CHECK(se > 0.0);
    CHECK(se < 0.02);
    CHECK(std::abs(point - truth) <= 3.0 * se + 1e-6);
}

TEST_CASE("policy estimands accept constant and threshold policies") {
    const std::string data = path_in_scratch("policy.csv");
    REQUIRE(run_cli("simulate --beta 3 --n 400 --seed 29 --out " + data).code == 0);
    const std::string rep_path = path_in_scratch("policy.json");
    const RunResult est = run_cli("estimate --data " + data +
                                  " --estimand fna-lower-policy --pi0 constant0"
                                  " --pi1 threshold:1 --propensity known-column --out " +
                                  rep_path);
    REQUIRE(est.code == 0);
    const json j = json::parse(slurp(rep_path));
    CHECK(j.at("estimand") == "fna-lower-policy");
    CHECK(j.at("n") == 400);
    CHECK(std::isfinite(j.at("point").get<double>()));
}

TEST_CASE("cvar composition stays in range and matches across subcommands") {
    const std::string data = path_in_scratch("cvar.csv");
    REQUIRE(run_cli("simulate --beta 3 --n 1600 --seed 21 --out " + data).code == 0);
    const std::string a = path_in_scratch("cvar_a.json");
    const std::string b = path_in_scratch("cvar_b.json");
    const RunResult via_estimate = run_cli("estimate --data " + data +
                                           " --estimand cvar-ite --alpha 0.25"
                                           " --propensity known-column --out " + a);
    REQUIRE(via_estimate.code == 0);
    CHECK(via_estimate.out.find("cvar-ite(alpha=0.25)") != std::string::npos);
    const RunResult via_cvar = run_cli("cvar --data " + data +
                                       " --alpha 0.25 --propensity known-column --out " + b);
    REQUIRE(via_cvar.code == 0);
    CHECK(slurp(a) == slurp(b)); // same composition, same defaults, same bytes

    const json j = json::parse(slurp(a));
    CHECK(j.at("estimand") == "cvar-ite");
    CHECK(j.at("alpha") == doctest::Approx(0.25));
    REQUIRE(j.at("interval").is_array());
    REQUIRE(j.at("interval").size() == 2);
    const double lo = j.at("interval")[0].get<double>();
    const double hi = j.at("interval")[1].get<double>();
    CHECK(lo >= -1.0);
    CHECK(hi <= 1.0);
    CHECK(lo <= hi);
    REQUIRE(j.at("components").is_object());
    for (const char* key : {"fna_lower", "fna_upper", "ate"}) {
        REQUIRE(j.at("components").contains(key));
        CHECK(j.at("components").at(key).at("point").is_number());
    }
}

TEST_CASE("usage and configuration problems exit with code 1") {
    const std::string valid = write_zero_outcome_csv("valid_small.csv", 40);

    SUBCASE("unknown estimand name") {
        const RunResult r = run_cli("estimate --data " + valid + " --estimand bogus");
        CHECK(r.code == 1);
        CHECK(!r.err.empty());
    }
    SUBCASE("missing required flag") {
        const RunResult r = run_cli("estimate --estimand fna-lower");
        CHECK(r.code == 1);
        CHECK(!r.err.empty());
    }
    SUBCASE("policies given for a wholesale estimand") {
        const RunResult r =
            run_cli("estimate --data " + valid + " --estimand fna-lower --pi0 constant0");
        CHECK(r.code == 1);
        CHECK(r.err.find("--pi0") != std::string::npos);
    }
    SUBCASE("policy estimand without policies") {
        const RunResult r = run_cli("estimate --data " + valid + " --estimand fna-lower-policy");
        CHECK(r.code == 1);
        CHECK(r.err.find("--pi0") != std::string::npos);
    }
    SUBCASE("malformed policy spec") {
        const RunResult r = run_cli("estimate --data " + valid +
                                    " --estimand fna-lower-policy --pi0 sometimes"
                                    " --pi1 constant1");
        CHECK(r.code == 1);
        CHECK(r.err.find("constant0") != std::string::npos);
    }
    SUBCASE("replicate rejects the composed estimand") {
        const RunResult r = run_cli("replicate --estimands cvar-ite --ns 100 --reps 2");
        CHECK(r.code == 1);
        CHECK(r.err.find("cvar-ite") != std::string::npos);
    }
    SUBCASE("tail fraction out of range") {
        const RunResult r = run_cli("estimate --data " + valid +
                                    " --estimand cvar-ite --alpha 1.5 --propensity known-column");
        CHECK(r.code == 1);
        CHECK(r.err.find("alpha") != std::string::npos);
    }
    SUBCASE("unknown subcommand") {
        const RunResult r = run_cli("frobnicate");
        CHECK(r.code == 1);
    }
    SUBCASE("no subcommand") {
        const RunResult r = run_cli("");
        CHECK(r.code == 1);
    }
    SUBCASE("help is not an error") {
        const RunResult r = run_cli("--help");
        CHECK(r.code == 0);
        CHECK(r.out.find("estimate") != std::string::npos);
        CHECK(r.out.find("simulate") != std::string::npos);
    }
}

TEST_CASE("I/O and data problems exit with code 2") {
    SUBCASE("missing input file") {
        const RunResult r =
            run_cli("estimate --data " + path_in_scratch("no_such_file.csv") +
                    " --estimand fna-lower");
        CHECK(r.code == 2);
        CHECK(!r.err.empty());
    }
    SUBCASE("malformed CSV names the offending line") {
        const std::string bad = path_in_scratch("bad.csv");
        {
            std::ofstream f(bad, std::ios::binary);
            f << "x1,x2,a,y\n";
            f << "0.1,0.2,1,0\n";
            f << "0.3,0.4,5,1\n"; // arm out of range on line 3
        }
        const RunResult r = run_cli("estimate --data " + bad + " --estimand fna-lower");
        CHECK(r.code == 2);
        CHECK(r.err.find("line 3") != std::string::npos);
    }
    SUBCASE("unwritable output path") {
        const RunResult r = run_cli("simulate --beta 0 --n 10 --out /no_such_dir_zz/out.csv");
        CHECK(r.code == 2);
        CHECK(!r.err.empty());
    }
}

TEST_CASE("oracle-bounds agrees with the brute-force coupling search") {
    const std::string rep_path = path_in_scratch("oracle.json");
    const RunResult r = run_cli("oracle-bounds --instances 50 --seed 4 --out " + rep_path);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("max discrepancy") != std::string::npos);
    const json j = json::parse(slurp(rep_path));
    CHECK(j.at("instances") == 50);
    CHECK(j.at("max_discrepancy").get<double>() <= j.at("h").get<double>());
    CHECK(j.at("identifiability_mismatches") == 0);
}

TEST_CASE("replicate emits a well-formed study table") {
    const std::string out_path = path_in_scratch("study.csv");
    const RunResult r = run_cli(
        "replicate --beta 3 --ns 200,400 --reps 3 --estimands fna-lower,fna-upper"
        " --truth-draws 20000 --seed 5 --out " + out_path);
    REQUIRE(r.code == 0);
    const std::vector<std::string> lines = split_lines(slurp(out_path));
    REQUIRE(lines.size() == 9); // header + 2 sizes x 2 estimands x 2 estimators
    CHECK(lines[0] == "n,estimand,estimator,rmse,coverage,mean_ci_width,reps,seed");
    int saw_ahe = 0, saw_plugin = 0;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto fields = split_fields(lines[i]);
        REQUIRE(fields.size() == 8);
        const long n = std::stol(fields[0]);
        CHECK((n == 200 || n == 400));
        CHECK((fields[1] == "fna-lower" || fields[1] == "fna-upper"));
        if (fields[2] == "ahe") ++saw_ahe;
        if (fields[2] == "plugin") ++saw_plugin;
        CHECK(std::stod(fields[3]) >= 0.0); // rmse
        CHECK(std::stoi(fields[6]) == 3);   // reps
    }
    CHECK(saw_ahe == 4);
    CHECK(saw_plugin == 4);

    // Identical invocation, identical bytes.
    const std::string out2 = path_in_scratch("study2.csv");
    REQUIRE(run_cli("replicate --beta 3 --ns 200,400 --reps 3 --estimands fna-lower,fna-upper"
                    " --truth-draws 20000 --seed 5 --out " + out2).code == 0);
    CHECK(slurp(out_path) == slurp(out2));
}
