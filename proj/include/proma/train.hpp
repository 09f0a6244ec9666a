#pragma once

#include <string>
#include <vector>

#include "proma/config.hpp"
#include "proma/diagnostics.hpp"

namespace proma {

struct RunArtifacts {
  std::string out_dir;
  std::string metrics_csv;
  std::string config_echo;  // path of the echoed config
  std::vector<std::string> checkpoints;
  std::vector<std::string> plots;  // filled by plot/compare, not by train
  MetricsTable metrics;            // in-memory copy of the CSV rows
};

// Runs the configured training loop, writing metrics.csv, the config echo,
// and checkpoints into out_dir. Deterministic: identical (config, seed) give
// a bitwise-identical CSV on one platform. Throws NumericalError (after
// writing an abort dump) if the gradient or loss goes non-finite.
RunArtifacts train(const RunConfig& cfg, const std::string& out_dir);

// Comparison report of compare(): one row per run.
struct CompareSummary {
  std::string strategy;
  double median_val_reward = 0.0;     // medians over the final 20% of steps
  double median_kl_initial = 0.0;
  double median_entropy = 0.0;
  double median_kl_lagged = 0.0;
};

struct CompareReport {
  std::vector<CompareSummary> summaries;
  std::vector<std::string> plot_files;
  std::string summary_csv;
};

// Trains every config (out_dir/<strategy>), then renders the four aligned
// comparison panels and the median summary. All configs must share the task,
// model, and seed fields and differ in strategy.
CompareReport compare(const std::vector<RunConfig>& cfgs, const std::string& out_dir);

}  // namespace proma
