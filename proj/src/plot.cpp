#include "proma/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "proma/diagnostics.hpp"

namespace proma {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 20;
constexpr int kMarginTop = 40;
constexpr int kMarginBottom = 50;

const char* kPalette[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<PlotSeries>& series) {
  double xmin = 0.0, xmax = 1.0, ymin = 0.0, ymax = 1.0;
  bool have_point = false;
  for (const PlotSeries& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!have_point) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        have_point = true;
      } else {
        xmin = std::min(xmin, s.x[i]);
        xmax = std::max(xmax, s.x[i]);
        ymin = std::min(ymin, s.y[i]);
        ymax = std::max(ymax, s.y[i]);
      }
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;
  auto sx = [&](double x) { return kMarginLeft + (x - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double y) { return kMarginTop + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_svg_chart: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"22\" font-family=\"sans-serif\" font-size=\"15\" "
         "text-anchor=\"middle\">"
      << title << "</text>\n";

  // frame and ticks
  out << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\"" << plot_w
      << "\" height=\"" << plot_h << "\" fill=\"none\" stroke=\"#333\"/>\n";
  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fx = xmin + (xmax - xmin) * i / ticks;
    const double fy = ymin + (ymax - ymin) * i / ticks;
    out << "<line x1=\"" << sx(fx) << "\" y1=\"" << kMarginTop + plot_h << "\" x2=\"" << sx(fx)
        << "\" y2=\"" << kMarginTop + plot_h + 5 << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << sx(fx) << "\" y=\"" << kMarginTop + plot_h + 18
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">" << num(fx)
        << "</text>\n";
    out << "<line x1=\"" << kMarginLeft - 5 << "\" y1=\"" << sy(fy) << "\" x2=\"" << kMarginLeft
        << "\" y2=\"" << sy(fy) << "\" stroke=\"#333\"/>\n";
    out << "<text x=\"" << kMarginLeft - 8 << "\" y=\"" << sy(fy) + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" << num(fy)
        << "</text>\n";
  }
  out << "<text x=\"" << kMarginLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << x_label
      << "</text>\n";
  out << "<text x=\"16\" y=\"" << kMarginTop + plot_h / 2
      << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 16 "
      << kMarginTop + plot_h / 2 << ")\">" << y_label << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const char* color = kPalette[si % (sizeof(kPalette) / sizeof(kPalette[0]))];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      out << num(sx(s.x[i])) << "," << num(sy(s.y[i])) << " ";
    out << "\"/>\n";
    // legend
    const double ly = kMarginTop + 14 + 16 * static_cast<double>(si);
    out << "<line x1=\"" << kMarginLeft + 10 << "\" y1=\"" << ly << "\" x2=\""
        << kMarginLeft + 34 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << kMarginLeft + 40 << "\" y=\"" << ly + 4
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write_svg_chart: write failed for " + path);
}

std::vector<std::string> write_metric_panels(const std::string& out_dir,
                                             const std::vector<std::string>& run_labels,
                                             const std::vector<std::string>& csv_paths) {
  if (run_labels.size() != csv_paths.size())
    throw std::invalid_argument("write_metric_panels: label/path count mismatch");

  struct Panel {
    const char* file;
    const char* title;
    const char* y_label;
    double MetricsRecord::*field;
  };
  const Panel panels[] = {
      {"val_reward.svg", "Validation performance", "validation reward",
       &MetricsRecord::val_reward},
      {"kl_initial.svg", "KL vs. initial policy", "KL (nats/token)", &MetricsRecord::kl_initial},
      {"entropy.svg", "Entropy", "entropy (nats/token)", &MetricsRecord::entropy},
      {"kl_lagged.svg", "KL vs. lagged policy", "KL (nats/token)", &MetricsRecord::kl_lagged},
  };

  std::vector<MetricsTable> tables;
  for (const std::string& path : csv_paths) tables.push_back(read_metrics_csv(path));

  std::vector<std::string> written;
  for (const Panel& panel : panels) {
    std::vector<PlotSeries> series;
    for (std::size_t i = 0; i < tables.size(); ++i) {
      PlotSeries s;
      s.label = run_labels[i];
      for (const MetricsRecord& r : tables[i].rows) {
        s.x.push_back(r.step);
        s.y.push_back(r.*panel.field);
      }
      series.push_back(std::move(s));
    }
    const std::string path = out_dir + "/" + panel.file;
    write_svg_chart(path, panel.title, "step", panel.y_label, series);
    written.push_back(path);
  }
  return written;
}

}  // namespace proma
