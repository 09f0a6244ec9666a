#include "proma/diagnostics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "proma/rng.hpp"

namespace proma {

void SnapshotRing::push(const PolicyParams& params, int step) {
  entries_.push_back(Entry{step, params});
  while (entries_.size() > capacity_) entries_.pop_front();
}

PolicyParams SnapshotRing::mean_last(std::size_t n) const {
  if (entries_.empty()) throw std::logic_error("SnapshotRing::mean_last: empty history");
  n = std::min(n, entries_.size());
  const std::size_t first = entries_.size() - n;
  PolicyParams out = entries_[first].params;
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    auto dest = out.layer(l);
    for (std::size_t e = first + 1; e < entries_.size(); ++e) {
      const auto src = entries_[e].params.layer(l);
      for (std::size_t i = 0; i < dest.size(); ++i) dest[i] += src[i];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (double& x : dest) x *= inv;
  }
  return out;
}

PolicyParams lagged_reference(const SnapshotRing& history, int window) {
  if (history.empty()) throw std::invalid_argument("lagged_reference: empty history");
  if (window < 1) throw std::invalid_argument("lagged_reference: window must be >= 1");
  return history.mean_last(static_cast<std::size_t>(window));
}

double kl_divergence(const PolicyParams& p_params, const PolicyParams& q_params,
                     const std::vector<std::vector<int>>& eval_prompts, int n_samples,
                     std::uint64_t rng_seed, int response_len) {
  if (eval_prompts.empty()) throw std::invalid_argument("kl_divergence: no eval prompts");
  if (n_samples < 1) throw std::invalid_argument("kl_divergence: n_samples must be >= 1");

  double total = 0.0;
  std::size_t positions = 0;
  for (std::size_t pi = 0; pi < eval_prompts.size(); ++pi) {
    const std::vector<int>& prompt = eval_prompts[pi];
    for (int s = 0; s < n_samples; ++s) {
      const SequenceSample sample = sample_response(
          p_params, prompt, response_len, 1.0, rng::derive(rng_seed, pi * 1000 + s));
      Context ctx{prompt, {}};
      for (int t = 0; t < response_len; ++t) {
        ctx.response_prefix.assign(sample.response_tokens.begin(),
                                   sample.response_tokens.begin() + t);
        const DenseVector lp = context_logprobs(p_params, ctx);
        const DenseVector lq = context_logprobs(q_params, ctx);
        double kl = 0.0;
        for (std::size_t v = 0; v < lp.size(); ++v) kl += std::exp(lp[v]) * (lp[v] - lq[v]);
        total += kl;
        positions += 1;
      }
    }
  }
  return total / static_cast<double>(positions);
}

double local_kl_surrogate(const Gradients& update, const std::vector<DenseMatrix>& seq_grads) {
  if (seq_grads.size() != PolicyParams::kLayerCount)
    throw std::invalid_argument("local_kl_surrogate: need one gradient matrix per layer");
  const std::size_t k = seq_grads.front().cols();
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double overlap = 0.0;
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      const DenseVector& u = update.layers[l];
      const DenseMatrix& cols = seq_grads[l];
      if (cols.rows() != u.size() || cols.cols() != k)
        throw std::invalid_argument("local_kl_surrogate: layer shape mismatch");
      for (std::size_t i = 0; i < u.size(); ++i) overlap += u[i] * cols(i, j);
    }
    total += overlap * overlap;
  }
  return total / static_cast<double>(k);
}

double validation_reward(const PolicyParams& params, const std::vector<TaskInstance>& instances,
                         int samples_per_instance, std::uint64_t rng_seed) {
  if (instances.empty()) throw std::invalid_argument("validation_reward: no instances");
  (void)samples_per_instance;  // greedy decodes repeat identically
  (void)rng_seed;
  double total = 0.0;
  for (const TaskInstance& inst : instances) {
    const SequenceSample s = sample_response(
        params, inst.prompt_tokens, static_cast<int>(inst.target_tokens.size()), 0.0, 0);
    total += reward(s, inst);
  }
  return total / static_cast<double>(instances.size());
}

std::string metrics_csv_header() {
  return "step,train_reward,val_reward,entropy,kl_initial,kl_lagged,local_kl_surrogate,"
         "grad_norm,subtracted_norm,clamp_hits";
}

namespace {
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace

std::string metrics_csv_row(const MetricsRecord& r) {
  std::ostringstream out;
  out << r.step << ',' << fmt(r.train_reward) << ',' << fmt(r.val_reward) << ','
      << fmt(r.entropy) << ',' << fmt(r.kl_initial) << ',' << fmt(r.kl_lagged) << ','
      << fmt(r.local_kl_surrogate) << ',' << fmt(r.grad_norm) << ',' << fmt(r.subtracted_norm)
      << ',' << r.clamp_hits;
  return out.str();
}

MetricsTable read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_metrics_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_metrics_csv: empty file " + path);
  if (line != metrics_csv_header())
    throw std::runtime_error("read_metrics_csv: unexpected header in " + path);
  MetricsTable table;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    MetricsRecord r;
    char comma;
    ss >> r.step >> comma >> r.train_reward >> comma >> r.val_reward >> comma >> r.entropy >>
        comma >> r.kl_initial >> comma >> r.kl_lagged >> comma >> r.local_kl_surrogate >> comma >>
        r.grad_norm >> comma >> r.subtracted_norm >> comma >> r.clamp_hits;
    if (ss.fail()) throw std::runtime_error("read_metrics_csv: malformed row in " + path);
    table.rows.push_back(r);
  }
  return table;
}

}  // namespace proma
