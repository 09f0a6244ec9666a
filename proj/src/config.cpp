#include "proma/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "proma/accumulate.hpp"
#include "proma/intra.hpp"

namespace proma {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                        (s.front() == '\'' && s.back() == '\'')))
    return s.substr(1, s.size() - 2);
  return s;
}

long long parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (...) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true") return true;
  if (value == "false") return false;
  throw ConfigError("config: key '" + key + "' expects true/false, got '" + value + "'");
}

std::string fmt_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void assign(RunConfig& cfg, const std::string& key, const std::string& value) {
  auto as_int = [&](int& dest) { dest = static_cast<int>(parse_int(key, value)); };
  if (key == "strategy") cfg.strategy = unquote(value);
  else if (key == "n_digits") as_int(cfg.n_digits);
  else if (key == "vocab") as_int(cfg.vocab);
  else if (key == "vocab_answer") as_int(cfg.vocab_answer);
  else if (key == "answer_len") as_int(cfg.answer_len);
  else if (key == "d_emb") as_int(cfg.d_emb);
  else if (key == "d_hid") as_int(cfg.d_hid);
  else if (key == "init_scale") cfg.init_scale = parse_real(key, value);
  else if (key == "group_size") as_int(cfg.group_size);
  else if (key == "prompts_per_microbatch") as_int(cfg.prompts_per_microbatch);
  else if (key == "microbatches_per_step") as_int(cfg.microbatches_per_step);
  else if (key == "total_steps") as_int(cfg.total_steps);
  else if (key == "lr") cfg.lr = parse_real(key, value);
  else if (key == "temperature") cfg.temperature = parse_real(key, value);
  else if (key == "optimizer") cfg.optimizer = unquote(value);
  else if (key == "adam_beta1") cfg.adam_beta1 = parse_real(key, value);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_real(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_real(key, value);
  else if (key == "clamp_fraction") cfg.clamp_fraction = parse_real(key, value);
  else if (key == "clamp_global") cfg.clamp_global = parse_bool(key, value);
  else if (key == "projection_group_size") as_int(cfg.projection_group_size);
  else if (key == "projection_passes") as_int(cfg.projection_passes);
  else if (key == "intra_r") as_int(cfg.intra_r);
  else if (key == "intra_r_a") as_int(cfg.intra_r_a);
  else if (key == "intra_r_g") as_int(cfg.intra_r_g);
  else if (key == "intra_shrinkage") cfg.intra_shrinkage = parse_real(key, value);
  else if (key == "intra_power_iters") as_int(cfg.intra_power_iters);
  else if (key == "intra_variant") cfg.intra_variant = unquote(value);
  else if (key == "clip_eps") cfg.clip_eps = parse_real(key, value);
  else if (key == "advantage_norm") cfg.advantage_norm = unquote(value);
  else if (key == "advantage_eps") cfg.advantage_eps = parse_real(key, value);
  else if (key == "eval_every") as_int(cfg.eval_every);
  else if (key == "lag_window") as_int(cfg.lag_window);
  else if (key == "lagged_mode") cfg.lagged_mode = unquote(value);
  else if (key == "val_instances") as_int(cfg.val_instances);
  else if (key == "entropy_contexts") as_int(cfg.entropy_contexts);
  else if (key == "kl_prompts") as_int(cfg.kl_prompts);
  else if (key == "kl_samples") as_int(cfg.kl_samples);
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(key, value));
  else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: line " + std::to_string(lineno) + " is not 'key = value'");
    assign(cfg, key, value);
  }
  validate_config(cfg);
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string echo_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "strategy = \"" << cfg.strategy << "\"\n";
  out << "n_digits = " << cfg.n_digits << "\n";
  out << "vocab = " << cfg.vocab << "\n";
  out << "vocab_answer = " << cfg.vocab_answer << "\n";
  out << "answer_len = " << cfg.answer_len << "\n";
  out << "d_emb = " << cfg.d_emb << "\n";
  out << "d_hid = " << cfg.d_hid << "\n";
  out << "init_scale = " << fmt_real(cfg.init_scale) << "\n";
  out << "group_size = " << cfg.group_size << "\n";
  out << "prompts_per_microbatch = " << cfg.prompts_per_microbatch << "\n";
  out << "microbatches_per_step = " << cfg.microbatches_per_step << "\n";
  out << "total_steps = " << cfg.total_steps << "\n";
  out << "lr = " << fmt_real(cfg.lr) << "\n";
  out << "temperature = " << fmt_real(cfg.temperature) << "\n";
  out << "optimizer = \"" << cfg.optimizer << "\"\n";
  out << "adam_beta1 = " << fmt_real(cfg.adam_beta1) << "\n";
  out << "adam_beta2 = " << fmt_real(cfg.adam_beta2) << "\n";
  out << "adam_eps = " << fmt_real(cfg.adam_eps) << "\n";
  out << "clamp_fraction = " << fmt_real(cfg.clamp_fraction) << "\n";
  out << "clamp_global = " << (cfg.clamp_global ? "true" : "false") << "\n";
  out << "projection_group_size = " << cfg.projection_group_size << "\n";
  out << "projection_passes = " << cfg.projection_passes << "\n";
  out << "intra_r = " << cfg.intra_r << "\n";
  out << "intra_r_a = " << cfg.intra_r_a << "\n";
  out << "intra_r_g = " << cfg.intra_r_g << "\n";
  out << "intra_shrinkage = " << fmt_real(cfg.intra_shrinkage) << "\n";
  out << "intra_power_iters = " << cfg.intra_power_iters << "\n";
  out << "intra_variant = \"" << cfg.intra_variant << "\"\n";
  out << "clip_eps = " << fmt_real(cfg.clip_eps) << "\n";
  out << "advantage_norm = \"" << cfg.advantage_norm << "\"\n";
  out << "advantage_eps = " << fmt_real(cfg.advantage_eps) << "\n";
  out << "eval_every = " << cfg.eval_every << "\n";
  out << "lag_window = " << cfg.lag_window << "\n";
  out << "lagged_mode = \"" << cfg.lagged_mode << "\"\n";
  out << "val_instances = " << cfg.val_instances << "\n";
  out << "entropy_contexts = " << cfg.entropy_contexts << "\n";
  out << "kl_prompts = " << cfg.kl_prompts << "\n";
  out << "kl_samples = " << cfg.kl_samples << "\n";
  out << "seed = " << cfg.seed << "\n";
  return out.str();
}

void validate_config(const RunConfig& cfg) {
  auto positive = [](const char* name, long long v) {
    if (v < 1) throw ConfigError(std::string("config: ") + name + " must be >= 1");
  };
  try {
    (void)strategy_from_string(cfg.strategy);
    (void)intra_variant_from_string(cfg.intra_variant);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (cfg.optimizer != "sgd" && cfg.optimizer != "adam")
    throw ConfigError("config: optimizer must be sgd or adam");
  if (cfg.advantage_norm != "std" && cfg.advantage_norm != "none")
    throw ConfigError("config: advantage_norm must be std or none");
  if (cfg.lagged_mode != "param_mean" && cfg.lagged_mode != "fixed_lag")
    throw ConfigError("config: lagged_mode must be param_mean or fixed_lag");

  positive("n_digits", cfg.n_digits);
  positive("vocab", cfg.vocab);
  positive("vocab_answer", cfg.vocab_answer);
  positive("answer_len", cfg.answer_len);
  positive("d_emb", cfg.d_emb);
  positive("d_hid", cfg.d_hid);
  positive("group_size", cfg.group_size);
  positive("prompts_per_microbatch", cfg.prompts_per_microbatch);
  positive("microbatches_per_step", cfg.microbatches_per_step);
  positive("eval_every", cfg.eval_every);
  positive("lag_window", cfg.lag_window);
  positive("val_instances", cfg.val_instances);
  positive("entropy_contexts", cfg.entropy_contexts);
  positive("kl_prompts", cfg.kl_prompts);
  positive("kl_samples", cfg.kl_samples);
  positive("intra_r", cfg.intra_r);
  if (cfg.total_steps < 0) throw ConfigError("config: total_steps must be >= 0");
  if (cfg.vocab < 10 || cfg.vocab < cfg.vocab_answer)
    throw ConfigError("config: vocab must be >= 10 and >= vocab_answer");
  if (cfg.temperature <= 0.0) throw ConfigError("config: temperature must be > 0");
  if (cfg.lr < 0.0) throw ConfigError("config: lr must be >= 0");
  if (cfg.clamp_fraction < 0.0) throw ConfigError("config: clamp_fraction must be >= 0");
  if (cfg.projection_group_size < 0)
    throw ConfigError("config: projection_group_size must be >= 0");
  if (cfg.projection_passes < 0) throw ConfigError("config: projection_passes must be >= 0");
  if (cfg.intra_power_iters < 0) throw ConfigError("config: intra_power_iters must be >= 0");
  if (cfg.intra_r_a < 0 || cfg.intra_r_g < 0)
    throw ConfigError("config: intra_r_a/intra_r_g must be >= 0");
  if (cfg.intra_shrinkage < 0.0) throw ConfigError("config: intra_shrinkage must be >= 0");
  if (cfg.clip_eps <= 0.0 || cfg.clip_eps >= 1.0)
    throw ConfigError("config: clip_eps must be in (0, 1)");
  if (cfg.advantage_eps < 0.0) throw ConfigError("config: advantage_eps must be >= 0");
}

}  // namespace proma
