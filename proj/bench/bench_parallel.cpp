// Timing comparison of the serial reference path (threads = 1) against the
// OpenMP path for the bootstrap and the reliability study, with a bitwise
// identity check between the two — speed must never change a number.

#include <sae/area_model.hpp>
#include <sae/bootstrap.hpp>
#include <sae/parallel.hpp>
#include <sae/sim.hpp>

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

using namespace sae;
using clock_type = std::chrono::steady_clock;

namespace {

double time_s(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

bool same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           (a.rows() == 0 || (a.array() == b.array()).all());
}

}  // namespace

int main() {
    const int hw = hardware_threads();
    std::vector<int> counts = {1, 2};
    if (hw > 2) counts.push_back(hw);
    std::printf("hardware threads: %d\n\n", hw);

    Eigen::VectorXd beta(3);
    beta << 3.0, 0.8, -0.5;

    Scenario s;
    s.model = ModelKind::Area;
    s.beta = beta;
    s.delta = 2.0;
    s.area_design = make_area_design(40, beta, 4201);
    s.K = 24;
    s.cfg.B1 = 200;
    s.cfg.B2 = 1;
    s.seed = 420;

    // One bootstrap ensemble, increasing thread counts.
    const SimReplicate rep = generate_replicate(s, 0);
    const AreaFit fit = fit_area_model(rep.area);
    BootstrapConfig cfg = s.cfg;
    cfg.B1 = 1000;
    cfg.seed = 7;

    std::printf("bootstrap_area, D=%d, B1=%d, B2=%d\n", rep.area.D(), cfg.B1, cfg.B2);
    cfg.threads = 1;
    auto t0 = clock_type::now();
    const BootstrapEnsemble ref = bootstrap_area(rep.area, fit, cfg);
    const double serial = time_s(t0);
    std::printf("  threads=1   %7.3f s  (reference)\n", serial);
    bool identical = true;
    for (std::size_t i = 1; i < counts.size(); ++i) {
        cfg.threads = counts[i];
        t0 = clock_type::now();
        const BootstrapEnsemble run = bootstrap_area(rep.area, fit, cfg);
        const double secs = time_s(t0);
        const bool eq = same(ref.mu_star, run.mu_star) && same(ref.mu_hat, run.mu_hat) &&
                        same(ref.theta_star, run.theta_star) &&
                        same(ref.inner_sq, run.inner_sq) && same(ref.vcov, run.vcov);
        identical = identical && eq;
        std::printf("  threads=%-2d  %7.3f s  speedup %.2fx  %s\n", counts[i], secs,
                    serial / secs, eq ? "identical" : "DIFFERS");
    }

    // The full reliability loop.
    std::printf("\nrun_reliability, D=%d, K=%d, B1=%d, B2=%d\n", s.area_design.D(), s.K,
                s.cfg.B1, s.cfg.B2);
    s.cfg.threads = 1;
    t0 = clock_type::now();
    const std::string ref_report = report_to_json(run_reliability(s));
    const double serial_rel = time_s(t0);
    std::printf("  threads=1   %7.3f s  (reference)\n", serial_rel);
    for (std::size_t i = 1; i < counts.size(); ++i) {
        s.cfg.threads = counts[i];
        t0 = clock_type::now();
        const std::string report = report_to_json(run_reliability(s));
        const double secs = time_s(t0);
        identical = identical && report == ref_report;
        std::printf("  threads=%-2d  %7.3f s  speedup %.2fx  %s\n", counts[i], secs,
                    serial_rel / secs, report == ref_report ? "identical" : "DIFFERS");
    }

    std::printf("\n%s\n", identical ? "all parallel runs bitwise identical to the serial path"
                                    : "MISMATCH between serial and parallel results");
    return identical ? 0 : 1;
}
