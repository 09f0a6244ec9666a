#include "proma/train.hpp"

#include <cmath>
#include <deque>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "proma/accumulate.hpp"
#include "proma/intra.hpp"
#include "proma/plot.hpp"
#include "proma/rng.hpp"

namespace proma {

namespace {

namespace fs = std::filesystem;

// seed-domain tags; train and validation instances live in disjoint domains
enum SeedTag : std::uint64_t {
  kTagInit = 1,
  kTagTrainPrompts = 2,
  kTagRollouts = 3,
  kTagIntra = 4,
  kTagKl = 5,
  kTagEntropy = 6,
  kTagValInstances = 7,
  kTagKlPrompts = 8,
};

struct AdamState {
  Gradients m;
  Gradients v;
  int t = 0;
};

void write_abort_dump(const std::string& out_dir, int step, const AccumulatorState& state,
                      const PolicyParams& params) {
  std::ofstream dump(out_dir + "/abort_dump.txt");
  dump << "non-finite gradient at step " << step << "\n";
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    double g = 0.0;
    bool finite = true;
    for (double x : state.grad.layers[l]) {
      if (!std::isfinite(x)) finite = false;
      g += x * x;
    }
    dump << PolicyParams::layer_name(l) << " grad_norm_sq " << g << " finite "
         << (finite ? "yes" : "no") << " param_finite "
         << (all_finite(params.layer(l)) ? "yes" : "no") << "\n";
  }
}

}  // namespace

RunArtifacts train(const RunConfig& cfg, const std::string& out_dir) {
  validate_config(cfg);
  fs::create_directories(out_dir);

  RunArtifacts artifacts;
  artifacts.out_dir = out_dir;
  artifacts.config_echo = out_dir + "/config.toml";
  {
    std::ofstream echo(artifacts.config_echo);
    if (!echo) throw std::runtime_error("train: cannot write " + artifacts.config_echo);
    echo << echo_config(cfg);
  }

  const ModelConfig model{cfg.vocab, cfg.d_emb, cfg.d_hid};
  const TaskConfig task{cfg.n_digits, cfg.vocab, cfg.vocab_answer, cfg.answer_len};
  const Strategy strategy = strategy_from_string(cfg.strategy);

  AccumulatorOptions acc_opt;
  acc_opt.clamp_fraction = cfg.clamp_fraction;
  acc_opt.projection_group_size = cfg.projection_group_size;
  acc_opt.projection_passes = cfg.projection_passes;
  acc_opt.clamp_global = cfg.clamp_global;

  IntraConfig intra_cfg;
  intra_cfg.r = cfg.intra_r;
  intra_cfg.r_a = cfg.intra_r_a;
  intra_cfg.r_g = cfg.intra_r_g;
  intra_cfg.shrinkage = cfg.intra_shrinkage;
  intra_cfg.power_iters = cfg.intra_power_iters;
  intra_cfg.variant = intra_variant_from_string(cfg.intra_variant);

  const AdvantageNorm adv_norm =
      cfg.advantage_norm == "std" ? AdvantageNorm::kStd : AdvantageNorm::kNone;

  PolicyParams params =
      PolicyParams::random_init(model, cfg.init_scale, rng::derive(cfg.seed, kTagInit));
  const PolicyParams initial = params;

  const std::string init_ckpt = out_dir + "/checkpoint_initial.txt";
  save_checkpoint(params, init_ckpt);
  artifacts.checkpoints.push_back(init_ckpt);

  const std::vector<TaskInstance> val_set =
      make_instances(task, cfg.val_instances, rng::derive(cfg.seed, kTagValInstances));
  std::vector<std::vector<int>> kl_prompts;
  for (const TaskInstance& inst :
       make_instances(task, cfg.kl_prompts, rng::derive(cfg.seed, kTagKlPrompts)))
    kl_prompts.push_back(inst.prompt_tokens);

  SnapshotRing ring(static_cast<std::size_t>(cfg.lag_window));
  std::deque<double> lag_kl_raws;  // fixed_lag mode: running mean window

  artifacts.metrics_csv = out_dir + "/metrics.csv";
  std::ofstream csv(artifacts.metrics_csv);
  if (!csv) throw std::runtime_error("train: cannot write " + artifacts.metrics_csv);
  csv << metrics_csv_header() << "\n";

  AccumulatorState state = AccumulatorState::make(params, strategy, acc_opt);
  AdamState adam;
  if (cfg.optimizer == "adam") {
    adam.m = Gradients::zeros_like(params);
    adam.v = Gradients::zeros_like(params);
  }

  double last_val = validation_reward(params, val_set, 1, 0);
  const int prompts_per_step = cfg.prompts_per_microbatch * cfg.microbatches_per_step;

  for (int step = 1; step <= cfg.total_steps; ++step) {
    ring.push(params, step - 1);
    const std::uint64_t rollout_checksum = params.checksum();

    // ---- rollout (strictly on-policy) ----
    const std::vector<TaskInstance> instances = make_instances(
        task, prompts_per_step, rng::derive(rng::derive(cfg.seed, kTagTrainPrompts), step));
    const std::uint64_t roll_seed = rng::derive(rng::derive(cfg.seed, kTagRollouts), step);
    std::vector<RewardedGroup> groups;
    double reward_sum = 0.0;
    for (int p = 0; p < prompts_per_step; ++p) {
      RewardedGroup g;
      g.instance = instances[p];
      for (int j = 0; j < cfg.group_size; ++j) {
        SequenceSample s =
            sample_response(params, g.instance.prompt_tokens, cfg.answer_len, cfg.temperature,
                            rng::derive(roll_seed, static_cast<std::uint64_t>(p) * 1000 + j));
        const double r = reward(s, g.instance);
        reward_sum += r;
        g.rewards.push_back(r);
        g.samples.push_back(std::move(s));
      }
      g.advantages = group_advantages(g.rewards, cfg.advantage_eps, adv_norm);
      groups.push_back(std::move(g));
    }
    const double train_reward =
        reward_sum / static_cast<double>(prompts_per_step * cfg.group_size);

    if (params.checksum() != rollout_checksum)
      throw std::logic_error("train: params changed between rollout and accumulation");

    // ---- accumulate over microbatches (serialized; PROMA is order-dependent) ----
    std::vector<std::vector<DenseMatrix>> step_seq_grads;
    for (int m = 0; m < cfg.microbatches_per_step; ++m) {
      const std::vector<RewardedGroup> mcb_groups(
          groups.begin() + static_cast<std::ptrdiff_t>(m) * cfg.prompts_per_microbatch,
          groups.begin() + static_cast<std::ptrdiff_t>(m + 1) * cfg.prompts_per_microbatch);
      MicrobatchGradients mcb = compute_microbatch_gradients(params, mcb_groups);
      switch (strategy) {
        case Strategy::kPlain:
          accumulate_plain(state, mcb);
          break;
        case Strategy::kPpoClip:
          accumulate_ppo_clip(state, params, params, mcb_groups, cfg.clip_eps);
          break;
        case Strategy::kPromaExact:
          accumulate_proma(state, mcb, true);
          break;
        case Strategy::kPromaApprox:
          accumulate_proma(state, mcb, false);
          break;
        case Strategy::kIntra: {
          const std::uint64_t s = rng::derive(rng::derive(cfg.seed, kTagIntra),
                                              static_cast<std::uint64_t>(step) * 1000 + m);
          state.grad.add_scaled(intra_proma_step(mcb, intra_cfg, s), 1.0);
          state.microbatches_seen += 1;
          break;
        }
      }
      step_seq_grads.push_back(std::move(mcb.seq_grads));
    }

    // ---- update ----
    const double subtracted_norm = std::sqrt(state.subtracted_norm_sq);
    const int clamp_hits = state.clamp_hits;
    Gradients avg = state.grad;
    avg.scale(1.0 / static_cast<double>(state.microbatches_seen));
    const double grad_norm = avg.norm();

    Gradients delta = Gradients::zeros_like(params);  // actual parameter change
    if (cfg.optimizer == "sgd") {
      for (int l = 0; l < PolicyParams::kLayerCount; ++l)
        for (std::size_t i = 0; i < delta.layers[l].size(); ++i)
          delta.layers[l][i] = cfg.lr * avg.layers[l][i];
      if (!state.grad.all_finite()) {
        write_abort_dump(out_dir, step, state, params);
        throw NumericalError("train: non-finite gradient at step " + std::to_string(step));
      }
      apply_update(params, state, cfg.lr);
    } else {
      if (!state.grad.all_finite()) {
        write_abort_dump(out_dir, step, state, params);
        throw NumericalError("train: non-finite gradient at step " + std::to_string(step));
      }
      adam.t += 1;
      const double bc1 = 1.0 - std::pow(cfg.adam_beta1, adam.t);
      const double bc2 = 1.0 - std::pow(cfg.adam_beta2, adam.t);
      for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
        auto values = params.layer(l);
        for (std::size_t i = 0; i < values.size(); ++i) {
          const double g = avg.layers[l][i];
          adam.m.layers[l][i] = cfg.adam_beta1 * adam.m.layers[l][i] + (1.0 - cfg.adam_beta1) * g;
          adam.v.layers[l][i] =
              cfg.adam_beta2 * adam.v.layers[l][i] + (1.0 - cfg.adam_beta2) * g * g;
          const double mhat = adam.m.layers[l][i] / bc1;
          const double vhat = adam.v.layers[l][i] / bc2;
          const double d = cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
          delta.layers[l][i] = d;
          values[i] += d;
        }
      }
      state.reset();
    }
    if (!params.all_finite()) {
      write_abort_dump(out_dir, step, state, params);
      throw NumericalError("train: non-finite parameters at step " + std::to_string(step));
    }

    // ---- diagnostics ----
    // local KL surrogate of the applied update against this step's sequences
    std::vector<DenseMatrix> merged(PolicyParams::kLayerCount);
    {
      std::size_t k_total = 0;
      for (const auto& sg : step_seq_grads) k_total += sg.front().cols();
      for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
        merged[l] = DenseMatrix(params.layer_size(l), k_total);
        std::size_t col = 0;
        for (const auto& sg : step_seq_grads) {
          for (std::size_t j = 0; j < sg[l].cols(); ++j, ++col)
            for (std::size_t i = 0; i < sg[l].rows(); ++i) merged[l](i, col) = sg[l](i, j);
        }
      }
    }
    const double local_kl = local_kl_surrogate(delta, merged);

    std::vector<Context> entropy_ctxs;
    {
      const std::uint64_t ent_seed = rng::derive(rng::derive(cfg.seed, kTagEntropy), step);
      const std::vector<TaskInstance> ent_instances =
          make_instances(task, cfg.entropy_contexts, rng::derive(ent_seed, 0));
      for (int i = 0; i < cfg.entropy_contexts; ++i) {
        const SequenceSample s =
            sample_response(params, ent_instances[i].prompt_tokens, cfg.answer_len,
                            cfg.temperature, rng::derive(ent_seed, 1 + i));
        for (int t = 0; t < cfg.answer_len; ++t)
          entropy_ctxs.push_back(Context{
              ent_instances[i].prompt_tokens,
              {s.response_tokens.begin(), s.response_tokens.begin() + t}});
      }
    }

    const std::uint64_t kl_seed = rng::derive(rng::derive(cfg.seed, kTagKl), step);
    const double kl_initial =
        kl_divergence(params, initial, kl_prompts, cfg.kl_samples, kl_seed, cfg.answer_len);
    double kl_lagged = 0.0;
    if (cfg.lagged_mode == "param_mean") {
      const PolicyParams ref = lagged_reference(ring, cfg.lag_window);
      kl_lagged = kl_divergence(params, ref, kl_prompts, cfg.kl_samples,
                                rng::derive(kl_seed, 1), cfg.answer_len);
    } else {
      const double raw = kl_divergence(params, ring.oldest(), kl_prompts, cfg.kl_samples,
                                       rng::derive(kl_seed, 1), cfg.answer_len);
      lag_kl_raws.push_back(raw);
      while (lag_kl_raws.size() > static_cast<std::size_t>(cfg.lag_window))
        lag_kl_raws.pop_front();
      double s = 0.0;
      for (double v : lag_kl_raws) s += v;
      kl_lagged = s / static_cast<double>(lag_kl_raws.size());
    }

    if (step % cfg.eval_every == 0 || step == cfg.total_steps) {
      last_val = validation_reward(params, val_set, 1, 0);
      const std::string ckpt = out_dir + "/checkpoint_step" + std::to_string(step) + ".txt";
      save_checkpoint(params, ckpt);
      artifacts.checkpoints.push_back(ckpt);
    }

    MetricsRecord rec;
    rec.step = step;
    rec.train_reward = train_reward;
    rec.val_reward = last_val;
    rec.entropy = entropy(params, entropy_ctxs);
    rec.kl_initial = kl_initial;
    rec.kl_lagged = kl_lagged;
    rec.local_kl_surrogate = local_kl;
    rec.grad_norm = grad_norm;
    rec.subtracted_norm = subtracted_norm;
    rec.clamp_hits = clamp_hits;
    const double fields[] = {rec.train_reward, rec.val_reward,  rec.entropy,
                             rec.kl_initial,   rec.kl_lagged,   rec.local_kl_surrogate,
                             rec.grad_norm,    rec.subtracted_norm};
    for (double f : fields)
      if (!std::isfinite(f)) {
        write_abort_dump(out_dir, step, state, params);
        throw NumericalError("train: non-finite metric at step " + std::to_string(step));
      }
    csv << metrics_csv_row(rec) << "\n";
    if (!csv) throw std::runtime_error("train: metrics write failed");
    artifacts.metrics.rows.push_back(rec);
  }

  const std::string final_ckpt = out_dir + "/checkpoint_final.txt";
  save_checkpoint(params, final_ckpt);
  artifacts.checkpoints.push_back(final_ckpt);
  csv.close();
  return artifacts;
}

}  // namespace proma
