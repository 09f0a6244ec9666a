#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace proma {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Resolved run configuration. Every field has a default; the file format is a
// flat `key = value` text file (TOML-style scalars, # comments). Unknown keys
// are rejected.
struct RunConfig {
  // strategy roster: plain (REINFORCE), ppo_clip (GRPO), proma_exact,
  // proma_approx, intra
  std::string strategy = "proma_approx";

  // task
  int n_digits = 4;
  int vocab = 16;
  int vocab_answer = 10;
  int answer_len = 1;

  // model
  int d_emb = 16;
  int d_hid = 32;
  double init_scale = 0.3;

  // batch geometry
  int group_size = 8;              // G responses per prompt
  int prompts_per_microbatch = 4;
  int microbatches_per_step = 4;
  int total_steps = 400;

  // optimization
  double lr = 0.05;
  double temperature = 1.0;
  std::string optimizer = "sgd";  // sgd | adam (ablation)
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // PROMA accumulation
  double clamp_fraction = 0.5;    // inf disables the clamp
  bool clamp_global = false;      // clamp on concatenated norms instead of per tensor
  int projection_group_size = 8;  // 0 = whole microbatch
  int projection_passes = 2;

  // Intra-PROMA
  int intra_r = 100;
  int intra_r_a = 0;  // 0 = intra_r
  int intra_r_g = 0;
  double intra_shrinkage = 1.0;
  int intra_power_iters = 1;
  std::string intra_variant = "subtract_sandwich";

  // PPO
  double clip_eps = 0.2;

  // advantages
  std::string advantage_norm = "std";  // std | none
  double advantage_eps = 1e-6;

  // evaluation and diagnostics
  int eval_every = 10;
  int lag_window = 80;
  std::string lagged_mode = "param_mean";  // param_mean | fixed_lag
  int val_instances = 200;
  int entropy_contexts = 32;
  int kl_prompts = 16;
  int kl_samples = 2;

  std::uint64_t seed = 1;
};

// Parses `key = value` text; throws ConfigError on unknown keys, malformed
// lines, or invalid values.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

// Canonical serialization: parsing the echo reproduces the config exactly and
// re-echoing is byte-identical.
std::string echo_config(const RunConfig& cfg);

// Range and enum checks shared by parsing and the trainer.
void validate_config(const RunConfig& cfg);

}  // namespace proma
