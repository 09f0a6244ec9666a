#include <algorithm>
#include <filesystem>
#include <fstream>

#include "proma/plot.hpp"
#include "proma/train.hpp"

namespace proma {

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double final_fifth_median(const MetricsTable& t, double MetricsRecord::*field) {
  const std::size_t n = t.rows.size();
  if (n == 0) return 0.0;
  const std::size_t start = n - std::max<std::size_t>(1, n / 5);
  std::vector<double> tail;
  for (std::size_t i = start; i < n; ++i) tail.push_back(t.rows[i].*field);
  return median(std::move(tail));
}

}  // namespace

CompareReport compare(const std::vector<RunConfig>& cfgs, const std::string& out_dir) {
  if (cfgs.size() < 2) throw ConfigError("compare: need at least two configs");
  for (std::size_t i = 1; i < cfgs.size(); ++i) {
    RunConfig a = cfgs[0];
    RunConfig b = cfgs[i];
    // strategies must differ; everything else (task, model, seed) must match
    if (a.strategy == b.strategy) throw ConfigError("compare: runs must differ in strategy");
    a.strategy = b.strategy = "plain";
    if (echo_config(a) != echo_config(b))
      throw ConfigError("compare: configs must share task, model, and seed settings");
  }

  std::filesystem::create_directories(out_dir);

  CompareReport report;
  std::vector<std::string> labels;
  std::vector<std::string> csv_paths;
  std::vector<MetricsTable> tables;
  for (const RunConfig& cfg : cfgs) {
    const RunArtifacts art = train(cfg, out_dir + "/" + cfg.strategy);
    labels.push_back(cfg.strategy);
    csv_paths.push_back(art.metrics_csv);
    tables.push_back(art.metrics);
  }

  report.plot_files = write_metric_panels(out_dir, labels, csv_paths);

  report.summary_csv = out_dir + "/summary.csv";
  std::ofstream summary(report.summary_csv);
  summary << "strategy,median_val_reward,median_kl_initial,median_entropy,median_kl_lagged\n";
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    CompareSummary row;
    row.strategy = labels[i];
    row.median_val_reward = final_fifth_median(tables[i], &MetricsRecord::val_reward);
    row.median_kl_initial = final_fifth_median(tables[i], &MetricsRecord::kl_initial);
    row.median_entropy = final_fifth_median(tables[i], &MetricsRecord::entropy);
    row.median_kl_lagged = final_fifth_median(tables[i], &MetricsRecord::kl_lagged);
    summary << row.strategy << ',' << row.median_val_reward << ',' << row.median_kl_initial << ','
            << row.median_entropy << ',' << row.median_kl_lagged << "\n";
    report.summaries.push_back(row);
  }
  return report;
}

}  // namespace proma
