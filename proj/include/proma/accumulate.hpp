#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proma/linalg.hpp"
#include "proma/policy.hpp"
#include "proma/task.hpp"

namespace proma {

enum class Strategy { kPlain, kPpoClip, kPromaExact, kPromaApprox, kIntra };

Strategy strategy_from_string(const std::string& name);
const char* strategy_name(Strategy s);

struct AccumulatorOptions {
  double clamp_fraction = 0.5;     // infinity disables the clamp
  int projection_group_size = 8;   // 0 = project against the whole microbatch at once
  int projection_passes = 2;       // iterative (approx) projection passes
  bool clamp_global = false;       // clamp against the concatenated norms instead of per tensor
};

// Running accumulation state for one optimizer step (the per-tensor t.grad of
// every layer plus telemetry). accumulate_* calls must be serialized: the
// PROMA update depends on arrival order.
struct AccumulatorState {
  Gradients grad;
  int microbatches_seen = 0;
  Strategy strategy = Strategy::kPlain;
  AccumulatorOptions options;

  // telemetry, reset together with the gradient
  int clamp_hits = 0;
  int zero_policy_grad_layers = 0;
  int skipped_columns = 0;
  double subtracted_norm_sq = 0.0;

  static AccumulatorState make(const PolicyParams& params, Strategy strategy,
                               const AccumulatorOptions& options = {});
  void reset();
};

// Gradients of one microbatch in both representations: the advantage-weighted
// policy gradient and the raw per-sequence log-prob gradients (columns), plus
// the tapes Intra-PROMA consumes.
struct MicrobatchGradients {
  Gradients policy_grad;                    // (1/k) sum_j a_j * grad log pi(s_j), per layer
  std::vector<DenseMatrix> seq_grads;       // per layer, (d_layer, k)
  std::vector<LayerTape> tapes;             // per linear layer, T rows total
  std::vector<double> token_advantages;     // length T, aligned with tape rows
  int k = 0;
};

MicrobatchGradients compute_microbatch_gradients(const PolicyParams& params,
                                                 const std::vector<RewardedGroup>& groups);

// t.grad += policy gradient (REINFORCE accumulation).
void accumulate_plain(AccumulatorState& state, const MicrobatchGradients& mcb);

// p if |p| <= bound, else p rescaled to norm bound.
DenseVector clamp_subtracted(const DenseVector& p, double bound);

// PROMA accumulation: per layer, remove from t.grad the component lying in
// the span of the microbatch's sequence gradients (exact QR projection or the
// iterative deflation when exact = false), clamp the removed component to
// clamp_fraction * |mcb_policy_grad|, then add the microbatch policy
// gradient. With projection_group_size g > 0 the projection runs sequentially
// over column blocks of at most g (the exact path additionally caps blocks at
// the layer dimension, which reduced QR requires).
void accumulate_proma(AccumulatorState& state, const MicrobatchGradients& mcb, bool exact,
                      FlopCounter* flops = nullptr);

// Clipped-surrogate accumulation (the GRPO baseline): per token t with ratio
// rho_t = exp(logpi_new - logpi_old), the gradient of
// min(rho_t * a_t, clip(rho_t, 1 - eps, 1 + eps) * a_t) is accumulated,
// normalized by the sequence count k.
void accumulate_ppo_clip(AccumulatorState& state, const PolicyParams& params,
                         const PolicyParams& rollout_params,
                         const std::vector<RewardedGroup>& groups, double clip_eps = 0.2);

// theta += lr * t.grad / microbatches_seen (gradient ascent on the
// advantage-weighted objective), then reset. Throws NumericalError if the
// accumulated gradient is non-finite.
void apply_update(PolicyParams& params, AccumulatorState& state, double lr);

}  // namespace proma
