#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "proma/plot.hpp"
#include "proma/train.hpp"
#include "selftest.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;

std::string default_out_dir(const std::string& fallback) {
  if (const char* env = std::getenv("PROMA_OUT_DIR")) return env;
  return fallback;
}

proma::RunConfig load_config(const std::string& path, const std::string& strategy_override,
                             bool seed_given, std::uint64_t seed) {
  proma::RunConfig cfg;
  if (!path.empty()) cfg = proma::parse_config_file(path);
  if (!strategy_override.empty()) cfg.strategy = strategy_override;
  if (seed_given) cfg.seed = seed;
  proma::validate_config(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"proma: desk-scale policy-gradient training with projected microbatch accumulation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> config_paths;
  std::string out_dir;
  std::string strategy_override;
  std::string strategies_csv;
  std::string plot_in;
  std::uint64_t seed = 0;
  bool seed_given = false;

  CLI::App* train_cmd = app.add_subcommand("train", "run one training configuration");
  train_cmd->add_option("--config", config_path, "config file (defaults apply when omitted)");
  train_cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  train_cmd->add_option("--out", out_dir, "output directory");
  train_cmd->add_option("--strategy", strategy_override,
                        "strategy override (plain|ppo_clip|proma_exact|proma_approx|intra)");

  CLI::App* compare_cmd =
      app.add_subcommand("compare", "train several strategies on one setup and plot the panels");
  compare_cmd->add_option("--config", config_paths, "config file (repeat for several runs)");
  compare_cmd->add_option("--strategies", strategies_csv,
                          "comma-separated strategies applied to the first/default config");
  compare_cmd->add_option("--seed", seed, "seed override")->each([&](const std::string&) {
    seed_given = true;
  });
  compare_cmd->add_option("--out", out_dir, "output directory");

  CLI::App* selftest_cmd = app.add_subcommand("selftest", "run the oracle/property checks");

  CLI::App* plot_cmd = app.add_subcommand("plot", "re-render the four metric panels from a CSV");
  plot_cmd->add_option("--in", plot_in, "metrics.csv produced by train")->required();
  plot_cmd->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return kExitConfig;
  }

  try {
    if (train_cmd->parsed()) {
      const proma::RunConfig cfg = load_config(config_path, strategy_override, seed_given, seed);
      const std::string out = !out_dir.empty()
                                  ? out_dir
                                  : default_out_dir("runs/train-" + cfg.strategy + "-seed" +
                                                    std::to_string(cfg.seed));
      const proma::RunArtifacts art = proma::train(cfg, out);
      std::cout << "wrote " << art.metrics_csv << " (" << art.metrics.rows.size() << " steps), "
                << art.checkpoints.size() << " checkpoints\n";
      return kExitOk;
    }

    if (compare_cmd->parsed()) {
      std::vector<proma::RunConfig> cfgs;
      if (!strategies_csv.empty()) {
        proma::RunConfig base;
        if (config_paths.size() > 1)
          throw proma::ConfigError("compare: --strategies expects at most one --config");
        if (config_paths.size() == 1) base = proma::parse_config_file(config_paths[0]);
        if (seed_given) base.seed = seed;
        std::string token;
        std::istringstream ss(strategies_csv);
        while (std::getline(ss, token, ',')) {
          proma::RunConfig cfg = base;
          cfg.strategy = token;
          proma::validate_config(cfg);
          cfgs.push_back(cfg);
        }
      } else {
        for (const std::string& path : config_paths) {
          proma::RunConfig cfg = proma::parse_config_file(path);
          if (seed_given) cfg.seed = seed;
          proma::validate_config(cfg);
          cfgs.push_back(cfg);
        }
      }
      const std::string out = !out_dir.empty() ? out_dir : default_out_dir("runs/compare");
      const proma::CompareReport report = proma::compare(cfgs, out);
      std::cout << "strategy            val_reward  kl_initial  entropy  kl_lagged (medians, "
                   "final 20%)\n";
      for (const proma::CompareSummary& row : report.summaries) {
        std::printf("%-18s %10.4f %11.4g %8.4f %10.4g\n", row.strategy.c_str(),
                    row.median_val_reward, row.median_kl_initial, row.median_entropy,
                    row.median_kl_lagged);
      }
      std::cout << "panels:";
      for (const std::string& f : report.plot_files) std::cout << " " << f;
      std::cout << "\nsummary: " << report.summary_csv << "\n";
      return kExitOk;
    }

    if (selftest_cmd->parsed()) {
      return proma::run_selftest(std::cout) == 0 ? kExitOk : kExitConfig;
    }

    if (plot_cmd->parsed()) {
      const std::string out = !out_dir.empty() ? out_dir : default_out_dir("runs/plot");
      std::filesystem::create_directories(out);
      const auto files = proma::write_metric_panels(out, {"run"}, {plot_in});
      std::cout << "wrote";
      for (const std::string& f : files) std::cout << " " << f;
      std::cout << "\n";
      return kExitOk;
    }
  } catch (const proma::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const proma::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}
