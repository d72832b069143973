// Reliability-study harness: synthetic stand-in designs, replicate
// generation, coverage/width/recovery metrics, power curves, and the JSON
// scenario and report formats.

#include "sae/sim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sae/area_model.hpp"
#include "sae/dataset.hpp"
#include "sae/errors.hpp"
#include "sae/parallel.hpp"
#include "sae/rng.hpp"

namespace sae {

namespace {

// Stage indices of the scenario-level streams.  Per-run data generation
// uses (run seed, 0, kStageData); bootstrap streams inside a run use
// replicate indices >= 1, so the keys never collide.
constexpr std::uint64_t kStageDesign = 80;
constexpr std::uint64_t kStageDMode = 81;
constexpr std::uint64_t kStageData = 2;

// SplitMix64 finalizer spreading (master seed, run index) into a per-run
// seed, so streams of different runs are as unrelated as different masters.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t k) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Row selection realizing a DMode: all rows, a random half (drawn once per
// scenario seed, without replacement, kept in design order), or all rows
// plus such a half appended as duplicates.
std::vector<int> d_mode_rows(int D, DMode mode, std::uint64_t seed) {
  std::vector<int> all(static_cast<std::size_t>(D));
  std::iota(all.begin(), all.end(), 0);
  if (mode == DMode::Original) return all;

  RngStream rng(seed, 0, kStageDMode);
  std::vector<int> pool = all;
  const int half = D / 2;
  for (int i = 0; i < half; ++i) {
    const int j =
        i + std::min(D - 1 - i, static_cast<int>(rng.uniform() * (D - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  std::vector<int> chosen(pool.begin(), pool.begin() + half);
  std::sort(chosen.begin(), chosen.end());
  if (mode == DMode::Half) return chosen;
  all.insert(all.end(), chosen.begin(), chosen.end());
  return all;
}

// Area labels stay unique when rows repeat: the second copy gets a suffix.
std::vector<std::string> relabel(const std::vector<std::string>& base,
                                 const std::vector<int>& rows) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  out.reserve(rows.size());
  for (const int r : rows) {
    std::string name = base[static_cast<std::size_t>(r)];
    while (seen.count(name)) name += "b";
    seen.insert(name);
    out.push_back(name);
  }
  return out;
}

// One completed simulation run: data, fit, predictions, replicates.
struct RunFit {
  SimReplicate rep;
  PredictionSet pred;
  BootstrapEnsemble ens;
  Eigen::VectorXd theta;  // (beta..., delta)
};

RunFit do_run(const Scenario& s, int k) {
  RunFit r;
  r.rep = generate_replicate(s, k);
  BootstrapConfig cfg = s.cfg;
  cfg.seed = r.rep.run_seed;
  cfg.threads = 1;  // the harness parallelizes over runs instead
  r.theta.resize(s.beta.size() + 1);
  if (s.model == ModelKind::Area) {
    const AreaFit fit = fit_area_model(r.rep.area);
    if (!fit.converged) throw NonConvergence("simulation run: area fit did not converge");
    r.pred = predict_area(r.rep.area, fit.params);
    r.ens = bootstrap_area(r.rep.area, fit, cfg);
    r.theta.head(fit.params.beta.size()) = fit.params.beta;
    r.theta[r.theta.size() - 1] = fit.params.delta;
  } else {
    const UnitFit fit = fit_unit_model(r.rep.unit, s.agq);
    if (!fit.converged) throw NonConvergence("simulation run: unit fit did not converge");
    r.pred = predict_unit(r.rep.unit, fit.params, s.agq, s.use_estimated_N);
    r.ens = bootstrap_unit(r.rep.unit, fit, cfg, s.agq, s.use_estimated_N);
    r.theta.head(fit.params.beta.size()) = fit.params.beta;
    r.theta[r.theta.size() - 1] = fit.params.delta;
  }
  return r;
}

// Scale kinds a reliability study reports, in the table column order
// B, BC, P, G.  The closed-form kinds exist for the area model only and
// the bias-corrected kind needs a second bootstrap stage.
std::vector<SigmaKind> report_kinds(const Scenario& s) {
  std::vector<SigmaKind> kinds = {SigmaKind::MseBoot};
  if (s.cfg.B2 >= 1) kinds.push_back(SigmaKind::MseBootBC);
  if (s.model == ModelKind::Area) {
    kinds.push_back(SigmaKind::MsePlugin);
    kinds.push_back(SigmaKind::G1);
  }
  return kinds;
}

void format_double(std::ostringstream& out, double v) {
  out << std::setprecision(12) << v;
}

std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

void validate_scenario(const Scenario& s) {
  if (s.K < 1) throw InvalidScenario("scenario: K must be at least 1");
  if (s.beta.size() == 0) throw InvalidScenario("scenario: beta is empty");
  if (s.model == ModelKind::Area) {
    if (s.area_design.D() < 2)
      throw InvalidScenario("scenario: area design needs at least 2 areas");
    if (s.area_design.p() != s.beta.size())
      throw InvalidScenario("scenario: beta length does not match the design");
    if (!(s.delta > 0.0))
      throw InvalidScenario("scenario: the area model needs delta > 0");
  } else {
    if (s.unit_design.D() < 2)
      throw InvalidScenario("scenario: unit design needs at least 2 areas");
    if (s.unit_design.p() != s.beta.size())
      throw InvalidScenario("scenario: beta length does not match the design");
    if (s.delta < 0.0)
      throw InvalidScenario("scenario: the unit model needs delta >= 0");
  }
}

AreaDataset make_area_design(int D, const Eigen::VectorXd& beta, std::uint64_t seed) {
  if (D < 2) throw InvalidScenario("area design: D must be at least 2");
  const int p = static_cast<int>(beta.size());
  if (p < 1) throw InvalidScenario("area design: beta is empty");

  AreaDataset d;
  d.X.resize(D, p);
  d.y = Eigen::VectorXd::Zero(D);
  d.N.resize(D);
  d.covariates.assign(static_cast<std::size_t>(p), "");
  d.covariates[0] = "intercept";
  for (int j = 1; j < p; ++j) d.covariates[static_cast<std::size_t>(j)] = "x" + std::to_string(j);

  RngStream rng(seed, 0, kStageDesign);
  for (int i = 0; i < D; ++i) {
    d.area.push_back("a" + std::to_string(i + 1));
    d.X(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) {
      // Half a log unit of spread per covariate keeps the count range
      // moderate whatever the coefficient sizes.
      const double scale = 0.5 / std::max(std::abs(beta[j]), 0.05);
      d.X(i, j) = scale * rng.uniform();
    }
    const double lambda = std::exp(d.X.row(i) * beta);
    const double rate = 0.12 + 0.18 * rng.uniform();  // expected proportion
    d.N[i] = std::max(50.0, std::round(lambda / rate));
  }
  return d;
}

UnitDataset make_unit_design(int D, int p, std::uint64_t seed, int max_area_sample) {
  if (D < 2) throw InvalidScenario("unit design: D must be at least 2");
  if (p < 2 || p > 8)
    throw InvalidScenario("unit design: need 2..8 predictors (intercept plus indicators)");
  if (max_area_sample < 4)
    throw InvalidScenario("unit design: max_area_sample must be at least 4");

  const int L = 1 << (p - 1);  // all on/off patterns of the indicators
  UnitDataset d;
  d.Z.resize(L, p);
  d.covariates.assign(static_cast<std::size_t>(p), "");
  d.covariates[0] = "intercept";
  for (int j = 1; j < p; ++j) d.covariates[static_cast<std::size_t>(j)] = "x" + std::to_string(j);
  for (int l = 0; l < L; ++l) {
    d.Z(l, 0) = 1.0;
    std::string label;
    for (int j = 1; j < p; ++j) {
      const int bit = (l >> (j - 1)) & 1;
      d.Z(l, j) = bit;
      label += (j > 1 ? "_" : "") + std::to_string(bit);
    }
    d.class_label.push_back(label);
  }

  d.Npop = Eigen::MatrixXd::Zero(D, L);
  d.ysum = Eigen::MatrixXd::Zero(D, L);
  d.msum = Eigen::MatrixXd::Zero(D, L);
  d.nsamp = Eigen::MatrixXd::Zero(D, L);

  RngStream rng(seed, 0, kStageDesign);
  std::vector<double> ys, ms, ws;
  for (int a = 0; a < D; ++a) {
    d.area.push_back("a" + std::to_string(a + 1));
    for (int l = 0; l < L; ++l) d.Npop(a, l) = 20.0 + std::floor(rng.uniform() * 101.0);
    const double Nd = d.Npop.row(a).sum();

    const int hi = max_area_sample;
    const int lo = std::max(4, hi / 2);
    const int nd = lo + static_cast<int>(rng.uniform() * (hi - lo + 1));
    const double w = Nd / nd;
    for (int j = 0; j < nd; ++j) {
      // Class membership proportional to the class population sizes.
      double u = rng.uniform() * Nd;
      int l = 0;
      while (l + 1 < L && u >= d.Npop(a, l)) u -= d.Npop(a, l), ++l;
      d.msum(a, l) += 1.0;
      d.nsamp(a, l) += 1.0;
      d.unit_area.push_back(a);
      d.unit_class.push_back(l);
      ys.push_back(0.0);
      ms.push_back(1.0);
      ws.push_back(w);
    }
  }
  d.unit_y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<long>(ys.size()));
  d.unit_m = Eigen::Map<Eigen::VectorXd>(ms.data(), static_cast<long>(ms.size()));
  d.unit_w = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<long>(ws.size()));
  return d;
}

AreaDataset effective_area_design(const Scenario& s) {
  const AreaDataset& base = s.area_design;
  if (s.d_mode == DMode::Original) return base;
  const std::vector<int> rows = d_mode_rows(base.D(), s.d_mode, s.seed);
  AreaDataset out;
  out.covariates = base.covariates;
  out.area = relabel(base.area, rows);
  const int D = static_cast<int>(rows.size());
  out.X.resize(D, base.p());
  out.y.resize(D);
  out.N.resize(D);
  for (int i = 0; i < D; ++i) {
    out.X.row(i) = base.X.row(rows[static_cast<std::size_t>(i)]);
    out.y[i] = base.y[rows[static_cast<std::size_t>(i)]];
    out.N[i] = base.N[rows[static_cast<std::size_t>(i)]];
  }
  return out;
}

UnitDataset effective_unit_design(const Scenario& s) {
  const UnitDataset& base = s.unit_design;
  if (s.d_mode == DMode::Original) return base;
  const std::vector<int> rows = d_mode_rows(base.D(), s.d_mode, s.seed);
  UnitDataset out;
  out.Z = base.Z;
  out.covariates = base.covariates;
  out.class_label = base.class_label;
  out.area = relabel(base.area, rows);
  const int D = static_cast<int>(rows.size());
  const int L = base.L();
  out.Npop.resize(D, L);
  out.ysum = Eigen::MatrixXd::Zero(D, L);
  out.msum.resize(D, L);
  out.nsamp.resize(D, L);
  std::vector<double> ys, ms, ws;
  for (int a = 0; a < D; ++a) {
    const int r = rows[static_cast<std::size_t>(a)];
    out.Npop.row(a) = base.Npop.row(r);
    out.msum.row(a) = base.msum.row(r);
    out.nsamp.row(a) = base.nsamp.row(r);
    // Rebuild the unit records from the class counts (binary units).
    const double w = out.Npop.row(a).sum() / std::max(1.0, out.msum.row(a).sum());
    for (int l = 0; l < L; ++l) {
      const long m = std::lround(out.msum(a, l));
      for (long j = 0; j < m; ++j) {
        out.unit_area.push_back(a);
        out.unit_class.push_back(l);
        ys.push_back(0.0);
        ms.push_back(1.0);
        ws.push_back(w);
      }
    }
  }
  out.unit_y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<long>(ys.size()));
  out.unit_m = Eigen::Map<Eigen::VectorXd>(ms.data(), static_cast<long>(ms.size()));
  out.unit_w = Eigen::Map<Eigen::VectorXd>(ws.data(), static_cast<long>(ws.size()));
  return out;
}

SimReplicate generate_replicate(const Scenario& s, int k) {
  validate_scenario(s);
  SimReplicate rep;
  rep.run_seed = mix_seed(s.seed, static_cast<std::uint64_t>(k));
  RngStream rng(rep.run_seed, 0, kStageData);

  if (s.model == ModelKind::Area) {
    rep.area = effective_area_design(s);
    const int D = rep.area.D();
    const Eigen::VectorXd lambda = (rep.area.X * s.beta).array().exp();
    rep.truth.resize(D);
    for (int d = 0; d < D; ++d) {
      const double w = rng.gamma(s.delta, s.delta);
      const double mu = lambda[d] * w;
      rep.area.y[d] = static_cast<double>(rng.poisson(mu));
      rep.truth[d] = mu;
    }
    rep.truth_prop = rep.truth.cwiseQuotient(rep.area.N);
  } else {
    rep.unit = effective_unit_design(s);
    const int D = rep.unit.D();
    const int L = rep.unit.L();
    const Eigen::VectorXd eta = rep.unit.Z * s.beta;
    rep.truth.resize(D);
    for (int d = 0; d < D; ++d) {
      const double u = rng.normal();
      double mu = 0.0;
      for (int l = 0; l < L; ++l) {
        const double p = logistic(eta[l] + s.delta * u);
        const long m = std::lround(rep.unit.msum(d, l));
        rep.unit.ysum(d, l) = m > 0 ? static_cast<double>(rng.binomial(m, p)) : 0.0;
        mu += rep.unit.Npop(d, l) * p;
      }
      rep.truth[d] = mu;
    }
    rep.truth_prop = rep.truth.cwiseQuotient(rep.unit.N());
  }
  return rep;
}

SimReport run_reliability(const Scenario& s) {
  validate_scenario(s);
  const std::vector<SigmaKind> kinds = report_kinds(s);
  const int nk = static_cast<int>(kinds.size());
  const int D = s.model == ModelKind::Area ? effective_area_design(s).D()
                                           : effective_unit_design(s).D();
  const int np = static_cast<int>(s.beta.size()) + 1;
  const int K = s.K;

  // Per-run slots; the serial reduction below keeps results identical for
  // any thread count.
  std::vector<std::uint8_t> ok(static_cast<std::size_t>(K), 0);
  Eigen::MatrixXd theta_hat = Eigen::MatrixXd::Zero(K, np);
  Eigen::MatrixXd pred_err = Eigen::MatrixXd::Zero(K, D);
  std::vector<Eigen::MatrixXd> widths(
      static_cast<std::size_t>(nk), Eigen::MatrixXd::Zero(K, D));
  Eigen::MatrixXi cover = Eigen::MatrixXi::Zero(K, nk);
  Eigen::MatrixXi icover = Eigen::MatrixXi::Zero(K, nk);

  parallel_for(static_cast<std::size_t>(K), s.cfg.threads, [&](std::size_t k) {
    try {
      const RunFit run = do_run(s, static_cast<int>(k));
      theta_hat.row(static_cast<int>(k)) = run.theta.transpose();
      pred_err.row(static_cast<int>(k)) =
          (run.pred.prop - run.rep.truth_prop).transpose();
      BootstrapConfig cfg = s.cfg;
      cfg.seed = run.rep.run_seed;
      cfg.threads = 1;
      for (int ik = 0; ik < nk; ++ik) {
        cfg.sigma_kind = kinds[static_cast<std::size_t>(ik)];
        const SimultaneousResult r = sci(run.ens, run.pred, cfg);
        const auto& t = run.rep.truth.array();
        cover(static_cast<int>(k), ik) =
            ((t >= r.sci_lo.array()) && (t <= r.sci_hi.array())).all() ? 1 : 0;
        icover(static_cast<int>(k), ik) =
            ((t >= r.ici_lo.array()) && (t <= r.ici_hi.array())).all() ? 1 : 0;
        widths[static_cast<std::size_t>(ik)].row(static_cast<int>(k)) =
            (r.sci_hi_prop - r.sci_lo_prop).transpose();
      }
      ok[k] = 1;
    } catch (const Error&) {
      ok[k] = 0;  // recorded as a skipped run
    }
  });

  SimReport rep;
  rep.model = s.model;
  rep.D = D;
  rep.K = K;
  for (int k = 0; k < K; ++k) {
    if (ok[static_cast<std::size_t>(k)])
      ++rep.K_used;
    else
      rep.skipped_runs.push_back(k);
  }
  const int Ku = rep.K_used;
  if (Ku == 0) {
    rep.vs_defined = false;
    rep.theta_true.resize(np);
    rep.theta_true.head(np - 1) = s.beta;
    rep.theta_true[np - 1] = s.delta;
    rep.rbias = Eigen::VectorXd::Zero(np);
    rep.rrmse = Eigen::VectorXd::Zero(np);
    rep.bias_d = Eigen::VectorXd::Zero(D);
    rep.mse_d = Eigen::VectorXd::Zero(D);
    for (const SigmaKind kind : kinds) rep.kinds.push_back({kind, 0, 0, 0, 0});
    return rep;
  }

  for (int ik = 0; ik < nk; ++ik) {
    KindMetrics m;
    m.kind = kinds[static_cast<std::size_t>(ik)];
    double ws_sum = 0.0, vs_sum = 0.0;
    Eigen::VectorXd su = Eigen::VectorXd::Zero(D), ss = Eigen::VectorXd::Zero(D);
    int covered = 0, icovered = 0;
    for (int k = 0; k < K; ++k) {
      if (!ok[static_cast<std::size_t>(k)]) continue;
      covered += cover(k, ik);
      icovered += icover(k, ik);
      const auto row = widths[static_cast<std::size_t>(ik)].row(k);
      su += row.transpose();
      ss += row.transpose().cwiseAbs2();
    }
    ws_sum = su.sum();
    m.ecp = 100.0 * covered / Ku;
    m.ecp_ici = 100.0 * icovered / Ku;
    m.ws = ws_sum / (static_cast<double>(D) * Ku);
    if (Ku >= 2) {
      const Eigen::VectorXd wbar = su / Ku;
      vs_sum = (ss - Ku * wbar.cwiseAbs2()).sum();
      m.vs = std::max(0.0, vs_sum / (static_cast<double>(D) * (Ku - 1)));
    } else {
      m.vs = 0.0;
      rep.vs_defined = false;
    }
    rep.kinds.push_back(m);
  }

  rep.theta_true.resize(np);
  rep.theta_true.head(np - 1) = s.beta;
  rep.theta_true[np - 1] = s.delta;
  rep.rbias = Eigen::VectorXd::Zero(np);
  rep.rrmse = Eigen::VectorXd::Zero(np);
  for (int j = 0; j < np; ++j) {
    double sum = 0.0, sumsq = 0.0;
    for (int k = 0; k < K; ++k) {
      if (!ok[static_cast<std::size_t>(k)]) continue;
      const double e = theta_hat(k, j) - rep.theta_true[j];
      sum += e;
      sumsq += e * e;
    }
    // A zero true value gets the unscaled summaries.
    const double denom = std::abs(rep.theta_true[j]) > 0.0 ? std::abs(rep.theta_true[j]) : 1.0;
    rep.rbias[j] = (sum / Ku) / denom;
    rep.rrmse[j] = std::sqrt(sumsq / Ku) / denom;
  }

  rep.bias_d = Eigen::VectorXd::Zero(D);
  rep.mse_d = Eigen::VectorXd::Zero(D);
  for (int k = 0; k < K; ++k) {
    if (!ok[static_cast<std::size_t>(k)]) continue;
    rep.bias_d += pred_err.row(k).transpose();
    rep.mse_d += pred_err.row(k).transpose().cwiseAbs2();
  }
  rep.bias_d /= Ku;
  rep.mse_d /= Ku;
  rep.bias_avg = rep.bias_d.cwiseAbs().mean();
  rep.mse_avg = rep.mse_d.cwiseAbs().mean();
  return rep;
}

PowerTable run_power(const Scenario& s, const std::vector<double>& deltas) {
  validate_scenario(s);
  if (deltas.empty()) throw InvalidScenario("power study: empty delta grid");
  const int K = s.K;
  const int nd = static_cast<int>(deltas.size());

  std::vector<std::uint8_t> ok(static_cast<std::size_t>(K), 0);
  Eigen::MatrixXi rejected = Eigen::MatrixXi::Zero(K, nd);

  parallel_for(static_cast<std::size_t>(K), s.cfg.threads, [&](std::size_t k) {
    try {
      const RunFit run = do_run(s, static_cast<int>(k));
      const int D = static_cast<int>(run.rep.truth_prop.size());
      const Eigen::MatrixXd contrast = Eigen::MatrixXd::Identity(D, D);
      BootstrapConfig cfg = s.cfg;
      cfg.seed = run.rep.run_seed;
      cfg.threads = 1;
      for (int j = 0; j < nd; ++j) {
        const Eigen::VectorXd target =
            run.rep.truth_prop.array() + deltas[static_cast<std::size_t>(j)];
        const MtpResult t = mtp_from_ensemble(run.ens, run.pred, contrast, target, cfg);
        rejected(static_cast<int>(k), j) = t.reject ? 1 : 0;
      }
      ok[k] = 1;
    } catch (const Error&) {
      ok[k] = 0;
    }
  });

  PowerTable table;
  table.K = K;
  for (int k = 0; k < K; ++k) {
    if (ok[static_cast<std::size_t>(k)])
      ++table.K_used;
    else
      table.skipped_runs.push_back(k);
  }
  for (int j = 0; j < nd; ++j) {
    PowerPoint pt;
    pt.delta = deltas[static_cast<std::size_t>(j)];
    int count = 0;
    for (int k = 0; k < K; ++k)
      if (ok[static_cast<std::size_t>(k)]) count += rejected(k, j);
    pt.reject_rate = table.K_used > 0 ? static_cast<double>(count) / table.K_used : 0.0;
    table.points.push_back(pt);
  }
  return table;
}

std::vector<double> power_delta_grid(const Scenario& s,
                                     const std::vector<double>& multiples) {
  validate_scenario(s);
  if (multiples.empty()) throw InvalidScenario("power study: empty multiple list");
  // Scale from a single pilot run (the first that fits cleanly).
  const int attempts = std::min(s.K, 10);
  for (int k = 0; k < attempts; ++k) {
    try {
      const RunFit run = do_run(s, k);
      BootstrapConfig cfg = s.cfg;
      cfg.seed = run.rep.run_seed;
      cfg.threads = 1;
      const SimultaneousResult r = sci(run.ens, run.pred, cfg);
      const double half = 0.5 * (r.sci_hi_prop - r.sci_lo_prop).mean();
      std::vector<double> grid;
      grid.reserve(multiples.size());
      for (const double m : multiples) grid.push_back(m * half);
      return grid;
    } catch (const Error&) {
      continue;
    }
  }
  throw NonConvergence("power study: no pilot run produced a usable fit");
}

// ------------------------------------------------------------- serialization

SigmaKind sigma_kind_from_string(const std::string& name) {
  if (name == "boot" || name == "B") return SigmaKind::MseBoot;
  if (name == "boot-bc" || name == "BC") return SigmaKind::MseBootBC;
  if (name == "plugin" || name == "P") return SigmaKind::MsePlugin;
  if (name == "g1" || name == "G") return SigmaKind::G1;
  throw ValidationError("unknown scale kind \"" + name +
                        "\" (expected boot, boot-bc, plugin, or g1)");
}

std::string sigma_kind_name(SigmaKind kind) {
  switch (kind) {
    case SigmaKind::MseBoot: return "boot";
    case SigmaKind::MseBootBC: return "boot-bc";
    case SigmaKind::MsePlugin: return "plugin";
    case SigmaKind::G1: return "g1";
  }
  return "boot";
}

std::string sigma_kind_label(SigmaKind kind) {
  switch (kind) {
    case SigmaKind::MseBoot: return "B";
    case SigmaKind::MseBootBC: return "BC";
    case SigmaKind::MsePlugin: return "P";
    case SigmaKind::G1: return "G";
  }
  return "B";
}

namespace {

DMode d_mode_from_string(const std::string& name) {
  if (name == "original") return DMode::Original;
  if (name == "half") return DMode::Half;
  if (name == "extended") return DMode::Extended;
  throw InvalidScenario("scenario: d_mode must be original, half, or extended");
}

void reject_unknown_keys(const nlohmann::json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& item : obj.items())
    if (!allowed.count(item.key()))
      throw InvalidScenario("scenario: unknown key \"" + item.key() + "\" in " + where);
}

}  // namespace

Scenario scenario_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw InvalidScenario(std::string("scenario: JSON parse failed: ") + e.what());
  }
  try {
    if (!j.is_object()) throw InvalidScenario("scenario: top level must be an object");
    reject_unknown_keys(j, {"model", "beta", "delta", "D", "d_mode", "K", "seed",
                            "bootstrap", "design", "use_estimated_N", "agq"},
                        "the scenario");

    Scenario s;
    const std::string model = j.value("model", std::string());
    if (model == "area")
      s.model = ModelKind::Area;
    else if (model == "unit")
      s.model = ModelKind::Unit;
    else
      throw InvalidScenario("scenario: model must be \"area\" or \"unit\"");

    if (!j.contains("beta") || !j["beta"].is_array() || j["beta"].empty())
      throw InvalidScenario("scenario: beta must be a non-empty array");
    s.beta.resize(static_cast<long>(j["beta"].size()));
    for (long i = 0; i < s.beta.size(); ++i)
      s.beta[i] = j["beta"][static_cast<std::size_t>(i)].get<double>();

    if (!j.contains("delta")) throw InvalidScenario("scenario: delta is required");
    s.delta = j["delta"].get<double>();
    s.K = j.value("K", 100);
    s.seed = j.value("seed", static_cast<std::uint64_t>(0));
    if (j.contains("d_mode")) s.d_mode = d_mode_from_string(j["d_mode"].get<std::string>());
    s.use_estimated_N = j.value("use_estimated_N", false);

    if (j.contains("bootstrap")) {
      const nlohmann::json& b = j["bootstrap"];
      reject_unknown_keys(b, {"B1", "B2", "alpha", "sigma", "threads"}, "bootstrap");
      s.cfg.B1 = b.value("B1", s.cfg.B1);
      s.cfg.B2 = b.value("B2", s.cfg.B2);
      s.cfg.alpha = b.value("alpha", s.cfg.alpha);
      s.cfg.threads = b.value("threads", s.cfg.threads);
      if (b.contains("sigma"))
        s.cfg.sigma_kind = sigma_kind_from_string(b["sigma"].get<std::string>());
    }
    if (j.contains("agq")) {
      const nlohmann::json& a = j["agq"];
      reject_unknown_keys(a, {"q", "mc_draws"}, "agq");
      s.agq.q = a.value("q", s.agq.q);
      s.agq.mc_draws = a.value("mc_draws", s.agq.mc_draws);
    }

    nlohmann::json design = j.value("design", nlohmann::json::object());
    reject_unknown_keys(design, {"type", "seed", "max_area_sample", "data", "class_sizes"},
                        "design");
    const std::string type = design.value("type", std::string("synthetic"));
    if (type == "synthetic") {
      const std::uint64_t dseed = design.value("seed", s.seed);
      if (s.model == ModelKind::Area) {
        const int D = j.value("D", 52);
        s.area_design = make_area_design(D, s.beta, dseed);
      } else {
        const int D = j.value("D", 26);
        const int cap = design.value("max_area_sample", 50);
        s.unit_design = make_unit_design(D, static_cast<int>(s.beta.size()), dseed, cap);
      }
    } else if (type == "file") {
      if (!design.contains("data"))
        throw InvalidScenario("scenario: design type \"file\" needs a data path");
      if (s.model == ModelKind::Area) {
        s.area_design = load_area_csv(design["data"].get<std::string>());
      } else {
        if (!design.contains("class_sizes"))
          throw InvalidScenario("scenario: unit design files need class_sizes");
        s.unit_design = load_unit_csv(design["data"].get<std::string>(),
                                      design["class_sizes"].get<std::string>());
      }
    } else {
      throw InvalidScenario("scenario: design type must be synthetic or file");
    }

    validate_scenario(s);
    return s;
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw InvalidScenario(std::string("scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidScenario("scenario: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json(buf.str());
}

std::string report_to_json(const SimReport& report, const PowerTable* power) {
  nlohmann::json j;
  j["model"] = report.model == ModelKind::Area ? "area" : "unit";
  j["D"] = report.D;
  j["K"] = report.K;
  j["K_used"] = report.K_used;
  j["skipped_runs"] = report.skipped_runs;
  j["vs_defined"] = report.vs_defined;
  j["kinds"] = nlohmann::json::array();
  for (const KindMetrics& m : report.kinds)
    j["kinds"].push_back({{"kind", sigma_kind_label(m.kind)},
                          {"ecp", m.ecp},
                          {"ecp_ici", m.ecp_ici},
                          {"ws", m.ws},
                          {"vs", m.vs}});
  j["theta_true"] = to_std(report.theta_true);
  j["rbias"] = to_std(report.rbias);
  j["rrmse"] = to_std(report.rrmse);
  j["bias_d"] = to_std(report.bias_d);
  j["mse_d"] = to_std(report.mse_d);
  j["bias_avg"] = report.bias_avg;
  j["mse_avg"] = report.mse_avg;
  if (power) {
    nlohmann::json p;
    p["K"] = power->K;
    p["K_used"] = power->K_used;
    p["skipped_runs"] = power->skipped_runs;
    p["delta"] = nlohmann::json::array();
    p["reject_rate"] = nlohmann::json::array();
    for (const PowerPoint& pt : power->points) {
      p["delta"].push_back(pt.delta);
      p["reject_rate"].push_back(pt.reject_rate);
    }
    j["power"] = p;
  }
  return j.dump(2) + "\n";
}

std::string report_to_csv(const SimReport& report) {
  std::ostringstream out;
  out << "metric";
  for (const KindMetrics& m : report.kinds) out << "," << sigma_kind_label(m.kind);
  out << "\n";
  const auto row = [&](const char* name, double KindMetrics::*field) {
    out << name;
    for (const KindMetrics& m : report.kinds) {
      out << ",";
      format_double(out, m.*field);
    }
    out << "\n";
  };
  row("ecp", &KindMetrics::ecp);
  row("ecp_ici", &KindMetrics::ecp_ici);
  row("ws", &KindMetrics::ws);
  row("vs", &KindMetrics::vs);
  return out.str();
}

std::string power_to_csv(const PowerTable& power) {
  std::ostringstream out;
  out << "delta,reject_rate\n";
  for (const PowerPoint& pt : power.points) {
    format_double(out, pt.delta);
    out << ",";
    format_double(out, pt.reject_rate);
    out << "\n";
  }
  return out.str();
}

}  // namespace sae
