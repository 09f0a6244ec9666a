#include "proma/accumulate.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace proma {

Strategy strategy_from_string(const std::string& name) {
  if (name == "plain") return Strategy::kPlain;
  if (name == "ppo_clip") return Strategy::kPpoClip;
  if (name == "proma_exact") return Strategy::kPromaExact;
  if (name == "proma_approx") return Strategy::kPromaApprox;
  if (name == "intra") return Strategy::kIntra;
  throw std::invalid_argument("unknown strategy: " + name);
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kPlain: return "plain";
    case Strategy::kPpoClip: return "ppo_clip";
    case Strategy::kPromaExact: return "proma_exact";
    case Strategy::kPromaApprox: return "proma_approx";
    case Strategy::kIntra: return "intra";
  }
  return "?";
}

AccumulatorState AccumulatorState::make(const PolicyParams& params, Strategy strategy,
                                        const AccumulatorOptions& options) {
  AccumulatorState state;
  state.grad = Gradients::zeros_like(params);
  state.strategy = strategy;
  state.options = options;
  return state;
}

void AccumulatorState::reset() {
  for (auto& layer : grad.layers)
    for (double& x : layer) x = 0.0;
  microbatches_seen = 0;
  clamp_hits = 0;
  zero_policy_grad_layers = 0;
  skipped_columns = 0;
  subtracted_norm_sq = 0.0;
}

MicrobatchGradients compute_microbatch_gradients(const PolicyParams& params,
                                                 const std::vector<RewardedGroup>& groups) {
  int k = 0;
  for (const RewardedGroup& g : groups) k += static_cast<int>(g.samples.size());
  if (k < 1) throw std::invalid_argument("compute_microbatch_gradients: empty microbatch");

  MicrobatchGradients out;
  out.k = k;
  out.policy_grad = Gradients::zeros_like(params);
  out.seq_grads.resize(PolicyParams::kLayerCount);
  for (int l = 0; l < PolicyParams::kLayerCount; ++l)
    out.seq_grads[l] = DenseMatrix(params.layer_size(l), k);

  std::size_t total_tokens = 0;
  for (const RewardedGroup& g : groups)
    for (const SequenceSample& s : g.samples) total_tokens += s.response_tokens.size();
  const ModelConfig& cfg = params.config();
  out.tapes.push_back(LayerTape{PolicyParams::kHiddenW, DenseMatrix(total_tokens, cfg.ctx_dim()),
                                DenseMatrix(total_tokens, cfg.d_hid)});
  out.tapes.push_back(LayerTape{PolicyParams::kOutW, DenseMatrix(total_tokens, cfg.d_hid),
                                DenseMatrix(total_tokens, cfg.vocab)});

  const double inv_k = 1.0 / static_cast<double>(k);
  int col = 0;
  std::size_t row = 0;
  for (const RewardedGroup& group : groups) {
    if (group.samples.size() != group.advantages.size())
      throw std::invalid_argument("compute_microbatch_gradients: group advantage count mismatch");
    for (std::size_t j = 0; j < group.samples.size(); ++j) {
      const SequenceSample& sample = group.samples[j];
      const double adv = group.advantages[j];
      BackwardResult bw = backward_sequence(params, sample);

      for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
        const DenseVector& g = bw.grads.layers[l];
        DenseMatrix& cols = out.seq_grads[l];
        DenseVector& pg = out.policy_grad.layers[l];
        for (std::size_t i = 0; i < g.size(); ++i) {
          cols(i, col) = g[i];
          pg[i] += adv * inv_k * g[i];
        }
      }
      // stack tapes; token advantages broadcast per sequence
      for (const LayerTape& tape : bw.tapes) {
        LayerTape& dest = (tape.layer_id == PolicyParams::kHiddenW) ? out.tapes[0] : out.tapes[1];
        for (std::size_t r = 0; r < tape.act_in.rows(); ++r) {
          for (std::size_t c = 0; c < tape.act_in.cols(); ++c)
            dest.act_in(row + r, c) = tape.act_in(r, c);
          for (std::size_t c = 0; c < tape.grad_out.cols(); ++c)
            dest.grad_out(row + r, c) = tape.grad_out(r, c);
        }
      }
      row += sample.response_tokens.size();
      for (std::size_t t = 0; t < sample.response_tokens.size(); ++t)
        out.token_advantages.push_back(adv);
      ++col;
    }
  }
  return out;
}

void accumulate_plain(AccumulatorState& state, const MicrobatchGradients& mcb) {
  state.grad.add_scaled(mcb.policy_grad, 1.0);
  state.microbatches_seen += 1;
}

DenseVector clamp_subtracted(const DenseVector& p, double bound) {
  if (bound < 0.0) throw std::invalid_argument("clamp_subtracted: bound must be >= 0");
  const double n = norm(p);
  if (n <= bound) return p;
  DenseVector out = p;
  const double scale = (n > 0.0) ? bound / n : 0.0;
  for (double& x : out) x *= scale;
  return out;
}

void accumulate_proma(AccumulatorState& state, const MicrobatchGradients& mcb, bool exact,
                      FlopCounter* flops) {
  const int k = mcb.k;
  const bool clamp_enabled = std::isfinite(state.options.clamp_fraction);

  // Pass 1: per-layer subtracted components.
  std::vector<DenseVector> subtracted(PolicyParams::kLayerCount);
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    const DenseVector& acc = state.grad.layers[l];
    const DenseMatrix& cols = mcb.seq_grads[l];
    const std::size_t d = acc.size();

    DenseVector residual = acc;
    int block_cap = state.options.projection_group_size > 0
                        ? state.options.projection_group_size
                        : k;
    if (exact) block_cap = std::min<int>(block_cap, static_cast<int>(d));

    for (int start = 0; start < k; start += block_cap) {
      const int width = std::min(block_cap, k - start);
      DenseMatrix block(d, width);
      for (std::size_t i = 0; i < d; ++i)
        for (int j = 0; j < width; ++j) block(i, j) = cols(i, start + j);
      if (exact) {
        residual = project_to_complement(residual, block, flops);
      } else {
        DeflationStats stats;
        residual = project_to_complement_iterative(residual, block,
                                                   state.options.projection_passes, flops, &stats);
        state.skipped_columns += stats.skipped_columns;
      }
    }
    DenseVector p(d);
    for (std::size_t i = 0; i < d; ++i) p[i] = acc[i] - residual[i];
    subtracted[l] = std::move(p);
  }

  // Pass 2: clamp. Per tensor by default; the global variant scales every
  // layer by one factor computed from the concatenated norms.
  if (clamp_enabled && state.options.clamp_global) {
    double p_sq = 0.0, g_sq = 0.0;
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      for (double x : subtracted[l]) p_sq += x * x;
      for (double x : mcb.policy_grad.layers[l]) g_sq += x * x;
    }
    const double bound = state.options.clamp_fraction * std::sqrt(g_sq);
    const double p_norm = std::sqrt(p_sq);
    if (std::sqrt(g_sq) == 0.0) state.zero_policy_grad_layers += 1;
    if (p_norm > bound) {
      const double scale = (p_norm > 0.0) ? bound / p_norm : 0.0;
      for (auto& p : subtracted)
        for (double& x : p) x *= scale;
      state.clamp_hits += 1;
    }
  } else if (clamp_enabled) {
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      const double g_norm = norm(mcb.policy_grad.layers[l]);
      if (g_norm == 0.0) state.zero_policy_grad_layers += 1;
      const double bound = state.options.clamp_fraction * g_norm;
      const double p_norm = norm(subtracted[l]);
      if (p_norm > bound) {
        DenseVector clamped = clamp_subtracted(subtracted[l], bound);
        subtracted[l] = std::move(clamped);
        state.clamp_hits += 1;
      }
    }
  }

  // Pass 3: t.grad <- (t.grad - p) + mcb_policy_grad.
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    DenseVector& acc = state.grad.layers[l];
    const DenseVector& p = subtracted[l];
    const DenseVector& pg = mcb.policy_grad.layers[l];
    double p_sq = 0.0;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      acc[i] = (acc[i] - p[i]) + pg[i];
      p_sq += p[i] * p[i];
    }
    state.subtracted_norm_sq += p_sq;
  }
  state.microbatches_seen += 1;
}

void accumulate_ppo_clip(AccumulatorState& state, const PolicyParams& params,
                         const PolicyParams& rollout_params,
                         const std::vector<RewardedGroup>& groups, double clip_eps) {
  (void)rollout_params;  // old log-probs were recorded at rollout time
  int k = 0;
  for (const RewardedGroup& g : groups) k += static_cast<int>(g.samples.size());
  if (k < 1) throw std::invalid_argument("accumulate_ppo_clip: empty microbatch");
  const double inv_k = 1.0 / static_cast<double>(k);

  for (const RewardedGroup& group : groups) {
    for (std::size_t j = 0; j < group.samples.size(); ++j) {
      const SequenceSample& sample = group.samples[j];
      const double adv = group.advantages[j];
      const SequenceSample fresh =
          forward_logprobs(params, sample.prompt_tokens, sample.response_tokens);

      std::vector<double> weights(sample.response_tokens.size(), 0.0);
      for (std::size_t t = 0; t < weights.size(); ++t) {
        const double rho = std::exp(fresh.per_token_logprobs[t] - sample.per_token_logprobs[t]);
        const double clipped = std::min(std::max(rho, 1.0 - clip_eps), 1.0 + clip_eps);
        // gradient of min(rho a, clipped a): the unclipped branch wins on
        // ties, the saturated branch contributes nothing
        weights[t] = (rho * adv <= clipped * adv) ? adv * rho : 0.0;
      }
      const Gradients g =
          backward_weighted(params, sample.prompt_tokens, sample.response_tokens, weights);
      state.grad.add_scaled(g, inv_k);
    }
  }
  state.microbatches_seen += 1;
}

void apply_update(PolicyParams& params, AccumulatorState& state, double lr) {
  if (state.microbatches_seen < 1)
    throw std::logic_error("apply_update: no microbatches accumulated");
  if (!state.grad.all_finite())
    throw NumericalError("apply_update: non-finite accumulated gradient");
  // t.grad holds the advantage-weighted objective gradient (the REINFORCE
  // ascent direction), so the step adds it.
  const double scale = lr / static_cast<double>(state.microbatches_seen);
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    auto values = params.layer(l);
    const DenseVector& g = state.grad.layers[l];
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += scale * g[i];
  }
  state.reset();
}

}  // namespace proma
