#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sae/bootstrap.hpp"
#include "sae/types.hpp"
#include "sae/unit_model.hpp"

namespace sae {

// Area count of a reliability study relative to the base design: the base
// design as given, a random half of its areas (drawn once per scenario
// seed, without replacement), or the base design plus duplicates of a
// random half (each area present at most twice).
enum class DMode { Original, Half, Extended };

// One reliability-study configuration: a model with its true parameters, a
// fixed design skeleton (responses are regenerated every run), the number
// of simulation runs, and the bootstrap settings applied in each run.
struct Scenario {
  ModelKind model = ModelKind::Area;
  Eigen::VectorXd beta;  // true fixed effects
  double delta = 1.0;    // true variability parameter

  AreaDataset area_design;  // model == Area: y is ignored and regenerated
  UnitDataset unit_design;  // model == Unit: ysum/unit_y are regenerated

  DMode d_mode = DMode::Original;
  int K = 100;              // simulation runs
  BootstrapConfig cfg;      // per-run bootstrap settings
  std::uint64_t seed = 0;   // master seed; per-run seeds are derived from it
  bool use_estimated_N = false;  // unit model: re-estimate class sizes per run
  AgqConfig agq;                 // unit model quadrature settings
};

// Throws InvalidScenario when the fields are inconsistent (K < 1, empty or
// mismatched design, non-positive delta for the area model, ...).
void validate_scenario(const Scenario& scenario);

// One synthetic data realization: the design with freshly drawn responses
// and the realized mixed parameter it was generated from.
struct SimReplicate {
  AreaDataset area;
  UnitDataset unit;
  Eigen::VectorXd truth;       // realized mu_d, count scale
  Eigen::VectorXd truth_prop;  // realized mu_d / N_d
  std::uint64_t run_seed = 0;
};

// Coverage and width metrics of one interval construction over the K runs:
// joint empirical coverage of the simultaneous band, the (always lower)
// joint coverage of the individual intervals, the mean width and the
// between-run width variance, everything on the proportion scale.
struct KindMetrics {
  SigmaKind kind = SigmaKind::MseBoot;
  double ecp = 0.0;      // percent
  double ecp_ici = 0.0;  // percent
  double ws = 0.0;
  double vs = 0.0;
};

struct SimReport {
  ModelKind model = ModelKind::Area;
  int D = 0;
  int K = 0;       // runs requested
  int K_used = 0;  // runs that completed (fit and bootstrap succeeded)
  std::vector<int> skipped_runs;

  std::vector<KindMetrics> kinds;

  // Parameter recovery, entries ordered (beta..., delta).
  Eigen::VectorXd theta_true;
  Eigen::VectorXd rbias;
  Eigen::VectorXd rrmse;

  // Predictor quality on the proportion scale: per-area mean error and mean
  // squared error, plus their across-area averages of absolute values.
  Eigen::VectorXd bias_d;
  Eigen::VectorXd mse_d;
  double bias_avg = 0.0;
  double mse_avg = 0.0;

  bool vs_defined = true;  // false when fewer than two runs survive
};

struct PowerPoint {
  double delta = 0.0;        // hypothesized shift of every proportion
  double reject_rate = 0.0;  // fraction of runs rejecting
};

struct PowerTable {
  std::vector<PowerPoint> points;
  int K = 0;
  int K_used = 0;
  std::vector<int> skipped_runs;
};

// Documented stand-in designs. The area design scales every covariate so
// its contribution to the linear predictor spans about half a log unit
// under the given coefficients, then sizes each population so the expected
// proportion lands in [0.12, 0.30) — counts in the thousands with
// application-sized coefficients. The unit design builds L = 2^(p-1)
// covariate classes from p-1 binary indicators, class population sizes of
// a few dozen, and a per-area sample of at most max_area_sample binary
// units allocated proportionally to the class sizes. Both are
// deterministic in their arguments.
AreaDataset make_area_design(int D, const Eigen::VectorXd& beta, std::uint64_t seed);
UnitDataset make_unit_design(int D, int p, std::uint64_t seed, int max_area_sample = 50);

// Design actually simulated from: the scenario design with d_mode applied
// (deterministic in the scenario seed).
AreaDataset effective_area_design(const Scenario& scenario);
UnitDataset effective_unit_design(const Scenario& scenario);

// Fresh responses for run k. Area model: w_d ~ Gamma(delta, delta),
// y_d ~ Poisson(lambda_d w_d), truth mu_d = lambda_d w_d. Unit model:
// u_d ~ N(0,1), class counts ~ Binomial(msum_dl, p_dl(u_d)), truth
// mu_d = sum_l Npop_dl p_dl(u_d).
SimReplicate generate_replicate(const Scenario& scenario, int k);

// The reliability study: K times simulate, fit, bootstrap, build the bands
// for every scale kind the model supports, and aggregate coverage, width,
// parameter recovery, and predictor bias. Runs whose fit or bootstrap
// throws are skipped and recorded. Parallel over runs; the result is
// identical for any thread count.
SimReport run_reliability(const Scenario& scenario);

// Power of the max-type test of H0: proportions equal their realized truth
// shifted by delta, for each delta in the grid. delta = 0 is the size.
PowerTable run_power(const Scenario& scenario, const std::vector<double>& deltas);

// A delta grid from a single pilot run: multiples of the pilot's mean
// simultaneous half-width on the proportion scale.
std::vector<double> power_delta_grid(const Scenario& scenario,
                                     const std::vector<double>& multiples);

// Scenario files are JSON; see the README for the schema. Unknown keys are
// rejected to catch typos. Throws InvalidScenario on malformed input.
Scenario scenario_from_json(const std::string& text);
Scenario load_scenario(const std::string& path);

// Report serialization: a single JSON document, and CSV tables with one
// column per scale kind (B, BC, P, G) matching the report layout.
std::string report_to_json(const SimReport& report, const PowerTable* power = nullptr);
std::string report_to_csv(const SimReport& report);
std::string power_to_csv(const PowerTable& power);

// Names used in scenario files and CLI flags ("boot", "boot-bc", "plugin",
// "g1") and the short table labels ("B", "BC", "P", "G").
SigmaKind sigma_kind_from_string(const std::string& name);
std::string sigma_kind_name(SigmaKind kind);
std::string sigma_kind_label(SigmaKind kind);

}  // namespace sae
