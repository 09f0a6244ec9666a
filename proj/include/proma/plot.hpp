#pragma once

#include <string>
#include <vector>

namespace proma {

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Self-contained SVG line chart (axes, ticks, legend). Series are drawn in
// order with a fixed palette.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series);

// The four standard panels (val_reward, kl_initial, entropy, kl_lagged) from
// one or more metrics CSVs; returns the written file paths.
std::vector<std::string> write_metric_panels(const std::string& out_dir,
                                             const std::vector<std::string>& run_labels,
                                             const std::vector<std::string>& csv_paths);

}  // namespace proma
