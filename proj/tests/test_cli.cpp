// End-to-end command-line checks: spawns the real binary, feeds it CSV and
// JSON files, and verifies exit codes, output schemas, and determinism.

#include <doctest.h>

#include <sae/rng.hpp>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const fs::path kDir = fs::temp_directory_path() / "saesci_cli_work";

int run(const std::string& args, bool quiet = false) {
    std::string cmd = std::string("\"") + SAESCI_BIN + "\" " + args;
    if (quiet) cmd += " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void spit(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) lines.push_back(line);
    return lines;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Deterministic synthetic inputs, written once for the whole suite.
struct Fixtures {
    fs::path area16, area5, unit, classes;

    Fixtures() {
        fs::remove_all(kDir);
        fs::create_directories(kDir);
        area16 = kDir / "area16.csv";
        area5 = kDir / "area5.csv";
        unit = kDir / "unit.csv";
        classes = kDir / "classes.csv";

        spit(area16, area_csv(16, 11));
        spit(area5, area_csv(5, 12));

        sae::RngStream rng(31, 0, 1);
        std::ostringstream u, c;
        u << "area,y,m,w,z1,z2\n";
        c << "area,class,N\n";
        for (int d = 0; d < 10; ++d) {
            const std::string name = "d" + std::to_string(d + 1);
            const double ud = rng.normal();
            for (int j = 0; j < 25; ++j) {
                const int z1 = rng.uniform() < 0.5 ? 1 : 0;
                const int z2 = rng.uniform() < 0.5 ? 1 : 0;
                const double p = logistic(-0.5 + 0.8 * z1 + 0.4 * z2 + 0.5 * ud);
                const int y = rng.uniform() < p ? 1 : 0;
                u << name << "," << y << ",1,4.0," << z1 << "," << z2 << "\n";
            }
            c << name << ",0_0,40\n" << name << ",1_0,30\n"
              << name << ",0_1,20\n" << name << ",1_1,10\n";
        }
        spit(unit, u.str());
        spit(classes, c.str());
    }

    static std::string area_csv(int D, std::uint64_t seed) {
        sae::RngStream rng(seed, 0, 1);
        std::ostringstream out;
        out << "area,y,N,x1,x2\n";
        for (int i = 0; i < D; ++i) {
            const double x1 = rng.uniform() * 2.0 - 1.0;
            const double x2 = rng.uniform() * 2.0 - 1.0;
            const double lambda = std::exp(3.0 + 0.8 * x1 - 0.5 * x2);
            const double w = rng.gamma(2.48, 2.48);
            out << "a" << i + 1 << "," << rng.poisson(lambda * w) << ","
                << 400 + 10 * i << "," << x1 << "," << x2 << "\n";
        }
        return out.str();
    }
};

const Fixtures& fixtures() {
    static Fixtures f;
    return f;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("fit writes a converged parameter file") {
    const auto& f = fixtures();
    const fs::path out = kDir / "fit_run";
    CHECK(run("fit --model area --data " + q(f.area16) + " --out " + q(out)) == 0);
    const std::string j = slurp(out / "fit.json");
    CHECK(j.find("\"converged\": true") != std::string::npos);
    CHECK(j.find("\"beta\"") != std::string::npos);
    CHECK(j.find("\"config_hash\"") != std::string::npos);

    CHECK(run("fit --model unit --data " + q(f.unit) + " --class-sizes " +
              q(f.classes) + " --out " + q(kDir / "fit_unit")) == 0);
    CHECK(slurp(kDir / "fit_unit" / "fit.json").find("\"converged\": true") !=
          std::string::npos);
}

TEST_CASE("usage and validation failures exit with code 1") {
    const auto& f = fixtures();
    const fs::path bad = kDir / "bad.csv";
    spit(bad, "area,y\n a,1\n");
    CHECK(run("fit --model area --data " + q(bad) + " --out " + q(kDir / "x1"), true) == 1);
    CHECK(run("fit --model area --out " + q(kDir / "x2"), true) == 1);
    CHECK(run("fit --model unit --data " + q(f.unit) + " --out " + q(kDir / "x3"), true) == 1);
    CHECK(run("frobnicate", true) == 1);
    CHECK(run("fit --no-such-flag", true) == 1);
    CHECK(run("", true) == 1);
    // Closed-form scales do not exist for the unit model.
    CHECK(run("sci --model unit --data " + q(f.unit) + " --class-sizes " + q(f.classes) +
              " --B1 100 --B2 0 --sigma g1 --out " + q(kDir / "x4"), true) == 1);
    // Paired differences need an even number of areas.
    CHECK(run("test --model area --data " + q(f.area5) +
              " --B1 100 --B2 0 --paired-diff --out " + q(kDir / "x5"), true) == 1);
    // Contrast with the wrong number of columns.
    const fs::path c = kDir / "bad_contrast.csv";
    const fs::path t = kDir / "bad_target.csv";
    spit(c, "1,0,0\n0,1,0\n");
    spit(t, "0\n0\n");
    CHECK(run("test --model area --data " + q(f.area16) + " --B1 100 --B2 0 --contrast " +
              q(c) + " --target " + q(t) + " --out " + q(kDir / "x6"), true) == 1);
    CHECK(run("simulate --scenario /nonexistent.json --out " + q(kDir / "x7"), true) == 1);
    CHECK(run("--help", true) == 0);
    CHECK(run("sci --help", true) == 0);
}

TEST_CASE("interval files are deterministic and carry the quantile bookkeeping") {
    const auto& f = fixtures();
    const std::string flags = "sci --model area --data " + q(f.area16) +
                              " --B1 1000 --B2 0 --alpha 0.05 --sigma g1 --seed 42 --out ";
    CHECK(run(flags + q(kDir / "sci1")) == 0);
    CHECK(run(flags + q(kDir / "sci2")) == 0);

    const std::string csv = slurp(kDir / "sci1" / "intervals.csv");
    const auto lines = lines_of(csv);
    REQUIRE(lines.size() == 18);  // provenance + header + 16 areas
    CHECK(lines[0].rfind("# saesci", 0) == 0);
    CHECK(lines[1] == "area,ebp,prop,sigma,ici_lo,ici_hi,sci_lo,sci_hi");
    CHECK(csv == slurp(kDir / "sci2" / "intervals.csv"));
    CHECK(slurp(kDir / "sci1" / "intervals_prop.csv") ==
          slurp(kDir / "sci2" / "intervals_prop.csv"));
    const auto plines = lines_of(slurp(kDir / "sci1" / "intervals_prop.csv"));
    REQUIRE(plines.size() == 18);
    CHECK(plines[1] == "area,ebp,sigma,ici_lo,ici_hi,sci_lo,sci_hi");

    const std::string meta = slurp(kDir / "sci1" / "sci.json");
    CHECK(meta.find("\"q_index\": 951") != std::string::npos);
    CHECK(meta.find("\"failed_replicates\": 0") != std::string::npos);

    // A different seed must change the replicate draws.
    CHECK(run("sci --model area --data " + q(f.area16) +
              " --B1 1000 --B2 0 --alpha 0.05 --sigma g1 --seed 43 --out " +
              q(kDir / "sci3")) == 0);
    CHECK(slurp(kDir / "sci3" / "intervals.csv") != csv);
}

TEST_CASE("the environment variable provides the seed fallback") {
    const auto& f = fixtures();
    const std::string tail = "sci --model area --data " + q(f.area16) +
                             " --B1 100 --B2 0 --sigma boot --out ";
    CHECK(run(tail + q(kDir / "env1") + " --seed 4242") == 0);
    const int rc = std::system((std::string("SAE_SIMUL_SEED=4242 \"") + SAESCI_BIN +
                                "\" " + tail + q(kDir / "env2"))
                                   .c_str());
    CHECK(WEXITSTATUS(rc) == 0);
    CHECK(slurp(kDir / "env1" / "intervals.csv") == slurp(kDir / "env2" / "intervals.csv"));
}

TEST_CASE("testing the fitted proportions yields a clean non-rejection") {
    const auto& f = fixtures();
    CHECK(run("predict --model area --data " + q(f.area16) + " --out " + q(kDir / "pred")) == 0);
    const auto lines = lines_of(slurp(kDir / "pred" / "predictions.csv"));
    REQUIRE(lines.size() == 18);
    CHECK(lines[1] == "area,ebp,denom,prop,g1");

    // Pull the prop column back out and hypothesize exactly those values.
    std::ostringstream contrast, target;
    for (std::size_t i = 2; i < lines.size(); ++i) {
        std::stringstream ss(lines[i]);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        REQUIRE(cells.size() == 5);
        target << cells[3] << "\n";
        for (int j = 0; j < 16; ++j)
            contrast << (static_cast<std::size_t>(j) == i - 2 ? "1" : "0")
                     << (j + 1 < 16 ? "," : "\n");
    }
    spit(kDir / "eye.csv", contrast.str());
    spit(kDir / "prop.csv", target.str());

    CHECK(run("test --model area --data " + q(f.area16) + " --B1 100 --B2 0 --seed 7" +
              " --contrast " + q(kDir / "eye.csv") + " --target " + q(kDir / "prop.csv") +
              " --out " + q(kDir / "mtp0")) == 0);
    const std::string verdict = slurp(kDir / "mtp0" / "test.json");
    CHECK(verdict.find("\"reject\": false") != std::string::npos);
    // The target came back through 12-digit CSV, so t_max is rounding, not signal.
    const auto pos = verdict.find("\"t_max\": ");
    REQUIRE(pos != std::string::npos);
    CHECK(std::abs(std::strtod(verdict.c_str() + pos + 9, nullptr)) < 1e-6);

    CHECK(run("test --model area --data " + q(f.area16) +
              " --B1 100 --B2 0 --seed 7 --paired-diff --out " + q(kDir / "mtp1")) == 0);
    const std::string paired = slurp(kDir / "mtp1" / "test.json");
    CHECK(paired.find("\"contrasts\": 8") != std::string::npos);
    CHECK(paired.find("\"q_crit\"") != std::string::npos);
}

TEST_CASE("direct estimates tabulate per area and per class") {
    const auto& f = fixtures();
    CHECK(run("direct --data " + q(f.unit) + " --class-sizes " + q(f.classes) +
              " --out " + q(kDir / "direct")) == 0);
    const auto area_lines = lines_of(slurp(kDir / "direct" / "direct.csv"));
    REQUIRE(area_lines.size() == 12);  // provenance + header + 10 areas
    CHECK(area_lines[1] == "area,Yhat,Nhat,prop");
    const auto class_lines = lines_of(slurp(kDir / "direct" / "direct_classes.csv"));
    CHECK(class_lines.size() == 2 + 10 * 4);
}

TEST_CASE("the unit pipeline runs end to end") {
    const auto& f = fixtures();
    CHECK(run("sci --model unit --data " + q(f.unit) + " --class-sizes " + q(f.classes) +
              " --B1 100 --B2 0 --sigma boot --seed 3 --out " + q(kDir / "usci")) == 0);
    const auto lines = lines_of(slurp(kDir / "usci" / "intervals.csv"));
    REQUIRE(lines.size() == 12);
    CHECK(lines[1] == "area,ebp,prop,sigma,ici_lo,ici_hi,sci_lo,sci_hi");
}

TEST_CASE("simulation scenarios produce the reliability tables") {
    const fs::path scn = kDir / "scenario.json";
    spit(scn, R"({
      "model": "area",
      "beta": [3.0, 0.8, -0.5],
      "delta": 2.0,
      "D": 10,
      "K": 3,
      "seed": 99,
      "bootstrap": {"B1": 100, "B2": 1}
    })");
    CHECK(run("simulate --scenario " + q(scn) + " --out " + q(kDir / "sim1")) == 0);
    CHECK(run("simulate --scenario " + q(scn) + " --out " + q(kDir / "sim2")) == 0);
    const std::string report = slurp(kDir / "sim1" / "report.json");
    CHECK(report.find("\"kinds\"") != std::string::npos);
    CHECK(report.find("\"rrmse\"") != std::string::npos);
    CHECK(report == slurp(kDir / "sim2" / "report.json"));
    const auto rel = lines_of(slurp(kDir / "sim1" / "reliability.csv"));
    REQUIRE(rel.size() >= 6);
    CHECK(rel[1] == "metric,B,BC,P,G");
    CHECK_FALSE(fs::exists(kDir / "sim1" / "power.csv"));

    CHECK(run("simulate --scenario " + q(scn) + " --power --out " + q(kDir / "sim3")) == 0);
    const auto power = lines_of(slurp(kDir / "sim3" / "power.csv"));
    REQUIRE(power.size() == 7);  // provenance + header + 5 grid points
    CHECK(power[1] == "delta,reject_rate");
}
