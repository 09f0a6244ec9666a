#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "proma/policy.hpp"
#include "proma/task.hpp"

namespace proma {

// Ring of recent policy snapshots (single writer: the training loop).
class SnapshotRing {
 public:
  explicit SnapshotRing(std::size_t capacity) : capacity_(capacity) {}

  void push(const PolicyParams& params, int step);
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const PolicyParams& newest() const { return entries_.back().params; }
  const PolicyParams& oldest() const { return entries_.front().params; }

  // Parameter-wise mean of the stored snapshots.
  PolicyParams mean() const { return mean_last(entries_.size()); }
  // Mean of the newest min(n, size) snapshots.
  PolicyParams mean_last(std::size_t n) const;

 private:
  struct Entry {
    int step;
    PolicyParams params;
  };
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

// Arithmetic mean of the last `window` snapshots (fewer if history is
// shorter). Errors on an empty history.
PolicyParams lagged_reference(const SnapshotRing& history, int window = 80);

// Exact per-position KL(p || q) in nats/token: the inner sum over the
// vocabulary is computed exactly; positions come from n_samples responses of
// length response_len sampled from p on each eval prompt.
double kl_divergence(const PolicyParams& p_params, const PolicyParams& q_params,
                     const std::vector<std::vector<int>>& eval_prompts, int n_samples,
                     std::uint64_t rng_seed, int response_len);

// Mean over sequences s of (sum_layers update_l . seqgrad_l(s))^2 — the local
// KL surrogate E_s[(d_theta . grad log pi(s))^2] evaluated with the full
// cross-layer dot product.
double local_kl_surrogate(const Gradients& update, const std::vector<DenseMatrix>& seq_grads);

// Mean reward of greedy decodes over the validation instances. Deterministic
// given params (greedy decoding ignores the seed).
double validation_reward(const PolicyParams& params, const std::vector<TaskInstance>& instances,
                         int samples_per_instance, std::uint64_t rng_seed);

struct MetricsRecord {
  int step = 0;
  double train_reward = 0.0;
  double val_reward = 0.0;
  double entropy = 0.0;
  double kl_initial = 0.0;
  double kl_lagged = 0.0;
  double local_kl_surrogate = 0.0;
  double grad_norm = 0.0;
  double subtracted_norm = 0.0;
  int clamp_hits = 0;
};

// Fixed CSV schema (header mandatory, one row per completed step).
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& rec);

struct MetricsTable {
  std::vector<MetricsRecord> rows;
};
MetricsTable read_metrics_csv(const std::string& path);

}  // namespace proma
