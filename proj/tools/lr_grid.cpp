// Coarse learning-rate grid for the gradient-descent baselines on the analytic
// edit suite. For each method, prints the mean final value of the method's own
// objective after the given number of steps; diverged runs count as infinite.

#include "genie/suite.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <limits>

using namespace genie;

int main(int argc, char** argv) {
  CLI::App app{"learning-rate grid for the GD baselines"};
  std::string cache;
  std::int64_t steps = kDefaultGdSteps;
  std::vector<double> grid{1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1, 0.3, 1.0, 3.0, 10.0};
  app.add_option("--checkpoint", cache, "suite model cache (trained and saved if missing)");
  app.add_option("--steps", steps);
  app.add_option("--grid", grid);
  CLI11_PARSE(app, argc, argv);

  BumpSuiteConfig cfg;
  std::shared_ptr<const Model> model;
  if (!cache.empty() && std::filesystem::exists(cache)) {
    model = std::make_shared<const Model>(load_model(cache));
  } else {
    model = std::make_shared<const Model>(train_bump_suite_model(cfg));
    if (!cache.empty()) save_model(*model, cache);
  }
  const auto tasks = bump_suite_tasks(cfg, model);

  const std::vector<Method> methods{Method::GdSdfLast, Method::GdBsLast, Method::GdBsAll};
  std::printf("method,lr,mean_final_objective,diverged\n");
  for (auto m : methods) {
    double best = std::numeric_limits<double>::infinity(), best_lr = 0.0;
    for (double lr : grid) {
      double sum = 0.0;
      int diverged = 0;
      for (const auto& t : tasks) {
        BaselineRun run;
        if (m == Method::GdSdfLast) run = gd_sdf_last(*model, t.head, t.target_field(t.volume_points), t.volume_points, steps, lr);
        else run = gd_bs(*model, t.head, m == Method::GdBsAll, t.displacement, t.band_points, steps, lr);
        if (run.report.diverged || !std::isfinite(run.report.final_loss)) ++diverged;
        else sum += run.report.final_loss;
      }
      const double mean = diverged ? std::numeric_limits<double>::infinity() : sum / static_cast<double>(tasks.size());
      std::printf("%s,%g,%.6e,%d\n", to_string(m).c_str(), lr, mean, diverged);
      std::fflush(stdout);
      if (mean < best) {
        best = mean;
        best_lr = lr;
      }
    }
    std::printf("# %s best lr %g\n", to_string(m).c_str(), best_lr);
  }
}
