#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "proma/linalg.hpp"

namespace proma {

// Thrown when a computation produces non-finite values that make the run
// unsalvageable (maps to CLI exit code 2).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int vocab = 16;
  int d_emb = 16;
  int d_hid = 32;
  // The context fed to the hidden layer is the mean-pooled prompt embedding
  // concatenated with the previous-token embedding.
  int ctx_dim() const { return 2 * d_emb; }
};

// Parameter tensors of the policy:
//   embed    (vocab, d_emb)
//   hidden_w (2*d_emb, d_hid), hidden_b (d_hid)   y = tanh(x W + b)
//   out_w    (d_hid, vocab),   out_b (vocab)      logits = h W + b
// Layer order is fixed; the accumulation engine and checkpoints iterate it by
// index.
class PolicyParams {
 public:
  static constexpr int kLayerCount = 5;
  enum LayerId { kEmbed = 0, kHiddenW = 1, kHiddenB = 2, kOutW = 3, kOutB = 4 };

  PolicyParams() = default;
  explicit PolicyParams(const ModelConfig& cfg);
  static PolicyParams random_init(const ModelConfig& cfg, double scale, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  DenseMatrix embed;     // (vocab, d_emb)
  DenseMatrix hidden_w;  // (2*d_emb, d_hid)
  DenseVector hidden_b;  // (d_hid)
  DenseMatrix out_w;     // (d_hid, vocab)
  DenseVector out_b;     // (vocab)

  std::span<double> layer(int id);
  std::span<const double> layer(int id) const;
  std::size_t layer_size(int id) const;
  static const char* layer_name(int id);
  std::size_t total_size() const;

  bool all_finite() const;
  // Order-stable digest of every parameter byte; used for the on-policy check.
  std::uint64_t checksum() const;

 private:
  ModelConfig cfg_;
};

// Per-layer flattened gradients, aligned with PolicyParams layer order.
struct Gradients {
  std::array<DenseVector, PolicyParams::kLayerCount> layers;

  static Gradients zeros_like(const PolicyParams& params);
  void add_scaled(const Gradients& other, double c);
  void scale(double c);
  double norm() const;
  double dot_with(const Gradients& other) const;
  bool all_finite() const;
};

struct SequenceSample {
  std::vector<int> prompt_tokens;
  std::vector<int> response_tokens;
  std::vector<double> per_token_logprobs;  // log pi at temperature 1
  double logprob_sum = 0.0;
};

// Per-layer capture for one or more response positions: act_in holds the
// layer's (post-nonlinearity) input row, grad_out the gradient of the summed
// log-prob with respect to the layer's pre-activation output. Advantages do
// not enter grad_out; they are applied in the policy-gradient contraction.
struct LayerTape {
  int layer_id = -1;       // PolicyParams layer index (kHiddenW or kOutW)
  DenseMatrix act_in;      // (T, d_in)
  DenseMatrix grad_out;    // (T, d_out)
};

struct BackwardResult {
  Gradients grads;                 // d logprob_sum / d theta
  std::vector<LayerTape> tapes;    // one per linear layer, T = response length
};

// A position whose next-token distribution is being queried.
struct Context {
  std::vector<int> prompt;
  std::vector<int> response_prefix;
};

SequenceSample forward_logprobs(const PolicyParams& params, std::span<const int> prompt,
                                std::span<const int> response);

// Autoregressive sampling at the given temperature. temperature <= 0 selects
// greedy (argmax) decoding. per_token_logprobs always records temperature-1
// policy log-probs of the chosen tokens.
SequenceSample sample_response(const PolicyParams& params, std::span<const int> prompt,
                               int max_len, double temperature, std::uint64_t rng_seed);

BackwardResult backward_sequence(const PolicyParams& params, const SequenceSample& sample);

// Gradient of sum_t w_t * log pi(response_t); used by the clipped-surrogate
// path where each token carries its own weight.
Gradients backward_weighted(const PolicyParams& params, std::span<const int> prompt,
                            std::span<const int> response,
                            std::span<const double> token_weights);

// Mean next-token entropy (nats) over the given contexts.
double entropy(const PolicyParams& params, const std::vector<Context>& contexts);

// Next-token log-prob vector at one context (temperature 1).
DenseVector context_logprobs(const PolicyParams& params, const Context& ctx);

// ---- checkpoint io ----
// Text format, hexfloat payload; layout documented in the README. Stable
// across runs on one platform.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

}  // namespace proma
