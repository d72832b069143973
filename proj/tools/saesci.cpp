// saesci: fit small-area models, predict, build simultaneous confidence
// intervals, run max-type hypothesis tests, compute direct estimates, and
// drive reliability simulations — all from the command line.
//
// Exit codes: 0 success, 1 input or validation error, 2 numerical
// non-convergence, 3 bootstrap failure rate exceeded.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <sae/area_model.hpp>
#include <sae/bootstrap.hpp>
#include <sae/dataset.hpp>
#include <sae/direct.hpp>
#include <sae/errors.hpp>
#include <sae/sim.hpp>
#include <sae/unit_model.hpp>
#include <sae/version.hpp>

using nlohmann::json;

namespace {

struct Options {
  std::string command;
  std::string model = "area";
  std::string data, class_sizes, out = ".";
  std::string contrast_path, target_path, scenario_path;
  int B1 = 1000;
  int B2 = 1;
  double alpha = 0.05;
  std::string sigma = "boot";
  std::uint64_t seed = 0;
  int threads = 1;
  bool use_estimated_N = false;
  bool paired_diff = false;
  bool power = false;
  bool seed_given = false;
  bool threads_given = false;
};

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(12) << v;
  return out.str();
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Hash of everything that determines the outputs, recorded in every file.
std::string config_hash(const Options& o) {
  std::ostringstream c;
  c << "cmd=" << o.command << " model=" << o.model << " data=" << o.data
    << " class=" << o.class_sizes << " B1=" << o.B1 << " B2=" << o.B2
    << " alpha=" << fmt(o.alpha) << " sigma=" << o.sigma << " seed=" << o.seed
    << " estN=" << o.use_estimated_N << " paired=" << o.paired_diff
    << " contrast=" << o.contrast_path << " target=" << o.target_path
    << " scenario=" << o.scenario_path << " power=" << o.power;
  std::ostringstream hex;
  hex << std::hex << std::setw(16) << std::setfill('0') << fnv1a(c.str());
  return hex.str();
}

std::string provenance_line(const Options& o) {
  return "# saesci " + std::string(sae::kVersion) + " command=" + o.command +
         " model=" + o.model + " seed=" + std::to_string(o.seed) +
         " config=" + config_hash(o) + "\n";
}

json provenance_json(const Options& o) {
  return json{{"tool", "saesci"},
              {"version", sae::kVersion},
              {"command", o.command},
              {"model", o.model},
              {"seed", o.seed},
              {"config_hash", config_hash(o)}};
}

void write_file(const std::string& dir, const std::string& name,
                const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  const std::string path = (fs::path(dir) / name).string();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sae::ValidationError("cannot write " + path);
  out << content;
  if (!out) throw sae::ValidationError("write failed for " + path);
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// Plain numeric CSV (no header, '#' comments allowed) for contrast matrices
// and target vectors.
Eigen::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw sae::ValidationError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used])))
          ++used;
        if (used != cell.size()) throw std::invalid_argument(cell);
        row.push_back(v);
      } catch (const std::exception&) {
        throw sae::ValidationError(path + ": non-numeric cell \"" + cell + "\"");
      }
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size())
      throw sae::ValidationError(path + ": ragged rows");
    rows.push_back(row);
  }
  if (rows.empty()) throw sae::ValidationError(path + ": no numeric rows");
  Eigen::MatrixXd m(static_cast<long>(rows.size()), static_cast<long>(rows.front().size()));
  for (long i = 0; i < m.rows(); ++i)
    for (long j = 0; j < m.cols(); ++j)
      m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return m;
}

Eigen::VectorXd load_vector_csv(const std::string& path) {
  const Eigen::MatrixXd m = load_matrix_csv(path);
  if (m.rows() == 1) return m.row(0).transpose();
  if (m.cols() == 1) return m.col(0);
  throw sae::ValidationError(path + ": expected a single row or column of numbers");
}

sae::BootstrapConfig bootstrap_config(const Options& o) {
  sae::BootstrapConfig cfg;
  cfg.B1 = o.B1;
  cfg.B2 = o.B2;
  cfg.alpha = o.alpha;
  cfg.seed = o.seed;
  cfg.sigma_kind = sae::sigma_kind_from_string(o.sigma);
  cfg.threads = o.threads;
  return cfg;
}

bool is_area(const Options& o) {
  if (o.model == "area") return true;
  if (o.model == "unit") return false;
  throw sae::ValidationError("--model must be area or unit");
}

sae::AreaDataset load_area(const Options& o) {
  if (o.data.empty()) throw sae::ValidationError("--data is required");
  return sae::load_area_csv(o.data);
}

sae::UnitDataset load_unit(const Options& o) {
  if (o.data.empty()) throw sae::ValidationError("--data is required");
  if (o.class_sizes.empty())
    throw sae::ValidationError("the unit model needs --class-sizes");
  return sae::load_unit_csv(o.data, o.class_sizes);
}

json area_fit_json(const sae::AreaFit& fit) {
  return json{{"beta", to_std(fit.params.beta)},
              {"delta", fit.params.delta},
              {"alpha_dispersion", fit.params.alpha()},
              {"loglik", fit.loglik},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"boundary_dispersion", fit.boundary_dispersion},
              {"score_max", fit.score_max}};
}

json unit_fit_json(const sae::UnitFit& fit) {
  return json{{"beta", to_std(fit.params.beta)},
              {"delta", fit.params.delta},
              {"loglik", fit.loglik},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"score_max", fit.score_max}};
}

int cmd_fit(const Options& o) {
  json j;
  j["provenance"] = provenance_json(o);
  try {
    if (is_area(o)) {
      const sae::AreaFit fit = sae::fit_area_model(load_area(o));
      j["fit"] = area_fit_json(fit);
    } else {
      const sae::UnitFit fit = sae::fit_unit_model(load_unit(o));
      j["fit"] = unit_fit_json(fit);
    }
  } catch (const sae::NonConvergence& e) {
    // Partial diagnostics still go to disk; the exit code reports failure.
    j["fit"] = json{{"converged", false}, {"error", e.what()}};
    write_file(o.out, "fit.json", j.dump(2) + "\n");
    throw;
  }
  write_file(o.out, "fit.json", j.dump(2) + "\n");
  return 0;
}

std::string predictions_csv(const Options& o, const sae::PredictionSet& pred,
                            bool with_g1) {
  std::ostringstream out;
  out << provenance_line(o);
  out << "area,ebp,denom,prop" << (with_g1 ? ",g1" : "") << "\n";
  for (long d = 0; d < pred.mu.size(); ++d) {
    out << pred.area[static_cast<std::size_t>(d)] << "," << fmt(pred.mu[d]) << ","
        << fmt(pred.denom[d]) << "," << fmt(pred.prop[d]);
    if (with_g1) out << "," << fmt(pred.g1[d]);
    out << "\n";
  }
  return out.str();
}

int cmd_predict(const Options& o) {
  json j;
  j["provenance"] = provenance_json(o);
  if (is_area(o)) {
    const sae::AreaDataset data = load_area(o);
    const sae::AreaFit fit = sae::fit_area_model(data);
    j["fit"] = area_fit_json(fit);
    write_file(o.out, "fit.json", j.dump(2) + "\n");
    write_file(o.out, "predictions.csv",
               predictions_csv(o, sae::predict_area(data, fit.params), true));
  } else {
    const sae::UnitDataset data = load_unit(o);
    const sae::UnitFit fit = sae::fit_unit_model(data);
    j["fit"] = unit_fit_json(fit);
    write_file(o.out, "fit.json", j.dump(2) + "\n");
    write_file(o.out, "predictions.csv",
               predictions_csv(o, sae::predict_unit(data, fit.params, {}, o.use_estimated_N),
                               false));
  }
  return 0;
}

int cmd_sci(const Options& o) {
  const sae::BootstrapConfig cfg = bootstrap_config(o);
  sae::PredictionSet pred;
  sae::BootstrapEnsemble ens;
  json jfit;
  if (is_area(o)) {
    const sae::AreaDataset data = load_area(o);
    const sae::AreaFit fit = sae::fit_area_model(data);
    jfit = area_fit_json(fit);
    pred = sae::predict_area(data, fit.params);
    ens = sae::bootstrap_area(data, fit, cfg);
  } else {
    const sae::UnitDataset data = load_unit(o);
    const sae::UnitFit fit = sae::fit_unit_model(data);
    jfit = unit_fit_json(fit);
    pred = sae::predict_unit(data, fit.params, {}, o.use_estimated_N);
    ens = sae::bootstrap_unit(data, fit, cfg, {}, o.use_estimated_N);
  }
  const sae::SimultaneousResult r = sae::sci(ens, pred, cfg);

  std::ostringstream count;
  count << provenance_line(o);
  count << "area,ebp,prop,sigma,ici_lo,ici_hi,sci_lo,sci_hi\n";
  for (long d = 0; d < pred.mu.size(); ++d)
    count << pred.area[static_cast<std::size_t>(d)] << "," << fmt(pred.mu[d]) << ","
          << fmt(pred.prop[d]) << "," << fmt(r.sigma[d]) << "," << fmt(r.ici_lo[d])
          << "," << fmt(r.ici_hi[d]) << "," << fmt(r.sci_lo[d]) << ","
          << fmt(r.sci_hi[d]) << "\n";
  write_file(o.out, "intervals.csv", count.str());

  std::ostringstream prop;
  prop << provenance_line(o);
  prop << "area,ebp,sigma,ici_lo,ici_hi,sci_lo,sci_hi\n";
  for (long d = 0; d < pred.mu.size(); ++d)
    prop << pred.area[static_cast<std::size_t>(d)] << "," << fmt(pred.prop[d]) << ","
         << fmt(r.sigma[d] / pred.denom[d]) << "," << fmt(r.ici_lo_prop[d]) << ","
         << fmt(r.ici_hi_prop[d]) << "," << fmt(r.sci_lo_prop[d]) << ","
         << fmt(r.sci_hi_prop[d]) << "\n";
  write_file(o.out, "intervals_prop.csv", prop.str());

  const int B_used = static_cast<int>(ens.mu_star.rows());
  json j;
  j["provenance"] = provenance_json(o);
  j["fit"] = jfit;
  j["B1"] = o.B1;
  j["B2"] = o.B2;
  j["B_used"] = B_used;
  j["failed_replicates"] = ens.failed;
  j["alpha"] = o.alpha;
  j["sigma"] = sae::sigma_kind_name(cfg.sigma_kind);
  j["q_sci"] = r.q_sci;
  j["q_index"] = sae::order_statistic_index(o.alpha, B_used);
  j["q_ici"] = to_std(r.q_ici);
  write_file(o.out, "sci.json", j.dump(2) + "\n");
  return 0;
}

int cmd_test(const Options& o) {
  const sae::BootstrapConfig cfg = bootstrap_config(o);
  Eigen::MatrixXd contrast;
  Eigen::VectorXd target;
  sae::MtpResult r;
  if (is_area(o)) {
    const sae::AreaDataset data = load_area(o);
    const sae::AreaFit fit = sae::fit_area_model(data);
    if (o.paired_diff) {
      contrast = sae::paired_difference_contrast(data.D());
      target = o.target_path.empty() ? Eigen::VectorXd::Zero(contrast.rows())
                                     : load_vector_csv(o.target_path);
    } else {
      if (o.contrast_path.empty() || o.target_path.empty())
        throw sae::ValidationError("test needs --contrast and --target, or --paired-diff");
      contrast = load_matrix_csv(o.contrast_path);
      target = load_vector_csv(o.target_path);
    }
    r = sae::mtp(data, fit, contrast, target, cfg);
  } else {
    const sae::UnitDataset data = load_unit(o);
    const sae::UnitFit fit = sae::fit_unit_model(data);
    if (o.paired_diff) {
      contrast = sae::paired_difference_contrast(data.D());
      target = o.target_path.empty() ? Eigen::VectorXd::Zero(contrast.rows())
                                     : load_vector_csv(o.target_path);
    } else {
      if (o.contrast_path.empty() || o.target_path.empty())
        throw sae::ValidationError("test needs --contrast and --target, or --paired-diff");
      contrast = load_matrix_csv(o.contrast_path);
      target = load_vector_csv(o.target_path);
    }
    r = sae::mtp(data, fit, contrast, target, cfg);
  }

  json j;
  j["provenance"] = provenance_json(o);
  j["B1"] = o.B1;
  j["alpha"] = o.alpha;
  j["contrasts"] = r.contrast.rows();
  j["target"] = to_std(r.target);
  j["t_stat"] = to_std(r.t_stat);
  j["sigma"] = to_std(r.sigma);
  j["t_max"] = r.t_max;
  j["q_crit"] = r.q_crit;
  j["reject"] = r.reject;
  write_file(o.out, "test.json", j.dump(2) + "\n");
  return 0;
}

int cmd_direct(const Options& o) {
  const sae::UnitDataset data = load_unit(o);
  const sae::DirectEstimates est = sae::direct_estimators(data);

  std::ostringstream by_area;
  by_area << provenance_line(o);
  by_area << "area,Yhat,Nhat,prop\n";
  for (int d = 0; d < data.D(); ++d)
    by_area << data.area[static_cast<std::size_t>(d)] << "," << fmt(est.Yhat[d]) << ","
            << fmt(est.Nhat[d]) << "," << fmt(est.prop[d]) << "\n";
  write_file(o.out, "direct.csv", by_area.str());

  std::ostringstream by_class;
  by_class << provenance_line(o);
  by_class << "area,class,Nhat\n";
  for (int d = 0; d < data.D(); ++d)
    for (int l = 0; l < data.L(); ++l)
      by_class << data.area[static_cast<std::size_t>(d)] << ","
               << data.class_label[static_cast<std::size_t>(l)] << ","
               << fmt(est.Nhat_class(d, l)) << "\n";
  write_file(o.out, "direct_classes.csv", by_class.str());
  return 0;
}

int cmd_simulate(Options o) {
  if (o.scenario_path.empty())
    throw sae::ValidationError("simulate needs --scenario FILE");
  sae::Scenario s = sae::load_scenario(o.scenario_path);
  if (o.seed_given) s.seed = o.seed;
  if (o.threads_given) s.cfg.threads = o.threads;
  o.model = s.model == sae::ModelKind::Area ? "area" : "unit";

  const sae::SimReport report = sae::run_reliability(s);
  sae::PowerTable table;
  const bool with_power = o.power;
  if (with_power) {
    const std::vector<double> grid =
        sae::power_delta_grid(s, {0.0, 0.5, 1.0, 2.0, 4.0});
    table = sae::run_power(s, grid);
  }

  json j = json::parse(sae::report_to_json(report, with_power ? &table : nullptr));
  j["provenance"] = provenance_json(o);
  j["provenance"]["scenario_seed"] = s.seed;
  write_file(o.out, "report.json", j.dump(2) + "\n");
  write_file(o.out, "reliability.csv", provenance_line(o) + sae::report_to_csv(report));
  if (with_power)
    write_file(o.out, "power.csv", provenance_line(o) + sae::power_to_csv(table));
  return 0;
}

void add_common(CLI::App* cmd, Options& o, bool with_bootstrap) {
  cmd->add_option("--model", o.model, "Model: area or unit")
      ->check(CLI::IsMember({"area", "unit"}));
  cmd->add_option("--data", o.data, "Dataset CSV");
  cmd->add_option("--class-sizes", o.class_sizes,
                  "Class-size CSV (unit model)");
  cmd->add_option("--out", o.out, "Output directory (default .)");
  if (with_bootstrap) {
    cmd->add_option("--B1", o.B1, "First-stage bootstrap replicates");
    cmd->add_option("--B2", o.B2, "Second-stage replicates per first-stage one");
    cmd->add_option("--alpha", o.alpha, "Significance level");
    cmd->add_option("--sigma", o.sigma, "Scale kind: g1, plugin, boot, boot-bc")
        ->check(CLI::IsMember({"g1", "plugin", "boot", "boot-bc"}));
    cmd->add_option("--seed", o.seed, "Random seed")->envname("SAE_SIMUL_SEED");
    cmd->add_option("--threads", o.threads, "Worker threads (results identical for any count)");
  }
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"Small-area empirical best prediction with bootstrap simultaneous inference"};
  app.require_subcommand(1);

  CLI::App* fit = app.add_subcommand("fit", "Fit a model and write fit.json");
  add_common(fit, o, false);

  CLI::App* predict = app.add_subcommand("predict", "Fit and write per-area predictions");
  add_common(predict, o, false);
  predict->add_flag("--use-estimated-N", o.use_estimated_N,
                    "Unit model: use survey-weighted class sizes");

  CLI::App* sci = app.add_subcommand(
      "sci", "Simultaneous and individual confidence intervals");
  add_common(sci, o, true);
  sci->add_flag("--use-estimated-N", o.use_estimated_N,
                "Unit model: use survey-weighted class sizes");

  CLI::App* test = app.add_subcommand("test", "Max-type test of H0: contrast * prop = target");
  add_common(test, o, true);
  test->add_option("--contrast", o.contrast_path, "Contrast matrix CSV (no header)");
  test->add_option("--target", o.target_path, "Target vector CSV");
  test->add_flag("--paired-diff", o.paired_diff,
                 "Use the consecutive-pairs difference contrast (target defaults to 0)");

  CLI::App* direct = app.add_subcommand("direct", "Design-based direct estimates (unit data)");
  add_common(direct, o, false);

  CLI::App* simulate = app.add_subcommand("simulate", "Run a reliability study from a scenario file");
  simulate->add_option("--scenario", o.scenario_path, "Scenario JSON")->required();
  simulate->add_option("--out", o.out, "Output directory (default .)");
  simulate->add_option("--seed", o.seed, "Override the scenario seed")
      ->envname("SAE_SIMUL_SEED");
  simulate->add_option("--threads", o.threads, "Override the scenario thread count");
  simulate->add_flag("--power", o.power, "Also trace the test's power curve");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const auto flag_given = [&](const char* name) {
    for (CLI::App* cmd : {fit, predict, sci, test, direct, simulate})
      if (cmd->parsed() && cmd->get_option_no_throw(name) && cmd->count(name) > 0)
        return true;
    return false;
  };
  o.seed_given = flag_given("--seed");
  o.threads_given = flag_given("--threads");

  try {
    if (fit->parsed()) return (o.command = "fit", cmd_fit(o));
    if (predict->parsed()) return (o.command = "predict", cmd_predict(o));
    if (sci->parsed()) return (o.command = "sci", cmd_sci(o));
    if (test->parsed()) return (o.command = "test", cmd_test(o));
    if (direct->parsed()) return (o.command = "direct", cmd_direct(o));
    if (simulate->parsed()) return (o.command = "simulate", cmd_simulate(o));
    return 1;
  } catch (const sae::MissingSecondStage& e) {
    std::fprintf(stderr, "saesci: %s\n", e.what());
    return 1;
  } catch (const sae::ValidationError& e) {
    std::fprintf(stderr, "saesci: %s\n", e.what());
    return 1;
  } catch (const sae::BootstrapFailureRate& e) {
    std::fprintf(stderr, "saesci: %s\n", e.what());
    return 3;
  } catch (const sae::Error& e) {
    std::fprintf(stderr, "saesci: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "saesci: %s\n", e.what());
    return 1;
  }
}
