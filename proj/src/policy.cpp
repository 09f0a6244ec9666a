#include "proma/policy.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "proma/rng.hpp"

namespace proma {

namespace {

void check_tokens(std::span<const int> tokens, int vocab, const char* what) {
  for (int t : tokens)
    if (t < 0 || t >= vocab)
      throw std::invalid_argument(std::string(what) + ": token id out of range");
}

// Forward state of a single response position.
struct PositionForward {
  DenseVector ctx;      // (2*d_emb)
  DenseVector h;        // (d_hid), tanh output
  DenseVector logits;   // (vocab)
  DenseVector logprobs; // (vocab)
};

DenseVector mean_prompt_embedding(const PolicyParams& params, std::span<const int> prompt) {
  const int e = params.config().d_emb;
  DenseVector pool(e, 0.0);
  if (prompt.empty()) return pool;
  for (int tok : prompt)
    for (int j = 0; j < e; ++j) pool[j] += params.embed(tok, j);
  const double inv = 1.0 / static_cast<double>(prompt.size());
  for (double& x : pool) x *= inv;
  return pool;
}

int previous_token(std::span<const int> prompt, std::span<const int> response, std::size_t t) {
  if (t > 0) return response[t - 1];
  return prompt.empty() ? 0 : prompt.back();
}

void log_softmax(const DenseVector& logits, DenseVector& out) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double logz = std::log(z);
  out.resize(logits.size());
  for (std::size_t v = 0; v < logits.size(); ++v) out[v] = logits[v] - mx - logz;
}

PositionForward forward_position(const PolicyParams& params, const DenseVector& pool,
                                 int prev_token) {
  const ModelConfig& cfg = params.config();
  const int e = cfg.d_emb;
  PositionForward pf;
  pf.ctx.resize(cfg.ctx_dim());
  for (int j = 0; j < e; ++j) {
    pf.ctx[j] = pool[j];
    pf.ctx[e + j] = params.embed(prev_token, j);
  }
  pf.h.resize(cfg.d_hid);
  for (int j = 0; j < cfg.d_hid; ++j) {
    double s = params.hidden_b[j];
    for (int i = 0; i < cfg.ctx_dim(); ++i) s += pf.ctx[i] * params.hidden_w(i, j);
    pf.h[j] = std::tanh(s);
  }
  pf.logits.resize(cfg.vocab);
  for (int v = 0; v < cfg.vocab; ++v) {
    double s = params.out_b[v];
    for (int j = 0; j < cfg.d_hid; ++j) s += pf.h[j] * params.out_w(j, v);
    pf.logits[v] = s;
  }
  log_softmax(pf.logits, pf.logprobs);
  return pf;
}

}  // namespace

PolicyParams::PolicyParams(const ModelConfig& cfg)
    : embed(cfg.vocab, cfg.d_emb),
      hidden_w(cfg.ctx_dim(), cfg.d_hid),
      hidden_b(cfg.d_hid, 0.0),
      out_w(cfg.d_hid, cfg.vocab),
      out_b(cfg.vocab, 0.0),
      cfg_(cfg) {}

PolicyParams PolicyParams::random_init(const ModelConfig& cfg, double scale, std::uint64_t seed) {
  PolicyParams p(cfg);
  rng::Stream s(seed);
  for (double& x : p.embed.data()) x = scale * s.gaussian();
  for (double& x : p.hidden_w.data()) x = scale * s.gaussian();
  for (double& x : p.out_w.data()) x = scale * s.gaussian();
  // biases start at zero
  return p;
}

std::span<double> PolicyParams::layer(int id) {
  switch (id) {
    case kEmbed: return embed.data();
    case kHiddenW: return hidden_w.data();
    case kHiddenB: return hidden_b;
    case kOutW: return out_w.data();
    case kOutB: return out_b;
    default: throw std::invalid_argument("PolicyParams::layer: bad layer id");
  }
}

std::span<const double> PolicyParams::layer(int id) const {
  switch (id) {
    case kEmbed: return embed.data();
    case kHiddenW: return hidden_w.data();
    case kHiddenB: return hidden_b;
    case kOutW: return out_w.data();
    case kOutB: return out_b;
    default: throw std::invalid_argument("PolicyParams::layer: bad layer id");
  }
}

std::size_t PolicyParams::layer_size(int id) const { return layer(id).size(); }

const char* PolicyParams::layer_name(int id) {
  static constexpr std::array<const char*, kLayerCount> names = {"embed", "hidden_w", "hidden_b",
                                                                 "out_w", "out_b"};
  return names.at(id);
}

std::size_t PolicyParams::total_size() const {
  std::size_t n = 0;
  for (int l = 0; l < kLayerCount; ++l) n += layer_size(l);
  return n;
}

bool PolicyParams::all_finite() const {
  for (int l = 0; l < kLayerCount; ++l)
    if (!proma::all_finite(layer(l))) return false;
  return true;
}

std::uint64_t PolicyParams::checksum() const {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a over raw bytes
  for (int l = 0; l < kLayerCount; ++l) {
    for (double x : layer(l)) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof(bits));
      for (int b = 0; b < 8; ++b) {
        h ^= (bits >> (8 * b)) & 0xFFu;
        h *= 0x100000001B3ull;
      }
    }
  }
  return h;
}

Gradients Gradients::zeros_like(const PolicyParams& params) {
  Gradients g;
  for (int l = 0; l < PolicyParams::kLayerCount; ++l)
    g.layers[l].assign(params.layer_size(l), 0.0);
  return g;
}

void Gradients::add_scaled(const Gradients& other, double c) {
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    if (layers[l].size() != other.layers[l].size())
      throw std::invalid_argument("Gradients::add_scaled: layer size mismatch");
    for (std::size_t i = 0; i < layers[l].size(); ++i) layers[l][i] += c * other.layers[l][i];
  }
}

void Gradients::scale(double c) {
  for (auto& layer : layers)
    for (double& x : layer) x *= c;
}

double Gradients::norm() const {
  double s = 0.0;
  for (const auto& layer : layers)
    for (double x : layer) s += x * x;
  return std::sqrt(s);
}

double Gradients::dot_with(const Gradients& other) const {
  double s = 0.0;
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    if (layers[l].size() != other.layers[l].size())
      throw std::invalid_argument("Gradients::dot_with: layer size mismatch");
    for (std::size_t i = 0; i < layers[l].size(); ++i) s += layers[l][i] * other.layers[l][i];
  }
  return s;
}

bool Gradients::all_finite() const {
  for (const auto& layer : layers)
    if (!proma::all_finite(layer)) return false;
  return true;
}

SequenceSample forward_logprobs(const PolicyParams& params, std::span<const int> prompt,
                                std::span<const int> response) {
  const ModelConfig& cfg = params.config();
  check_tokens(prompt, cfg.vocab, "forward_logprobs");
  check_tokens(response, cfg.vocab, "forward_logprobs");

  SequenceSample sample;
  sample.prompt_tokens.assign(prompt.begin(), prompt.end());
  sample.response_tokens.assign(response.begin(), response.end());

  const DenseVector pool = mean_prompt_embedding(params, prompt);
  for (std::size_t t = 0; t < response.size(); ++t) {
    const PositionForward pf =
        forward_position(params, pool, previous_token(prompt, response, t));
    const double lp = pf.logprobs[response[t]];
    sample.per_token_logprobs.push_back(lp);
    sample.logprob_sum += lp;
  }
  return sample;
}

SequenceSample sample_response(const PolicyParams& params, std::span<const int> prompt,
                               int max_len, double temperature, std::uint64_t rng_seed) {
  const ModelConfig& cfg = params.config();
  check_tokens(prompt, cfg.vocab, "sample_response");

  rng::Stream stream(rng_seed);
  const DenseVector pool = mean_prompt_embedding(params, prompt);
  std::vector<int> response;
  std::vector<double> logprobs;
  double total = 0.0;

  for (int t = 0; t < max_len; ++t) {
    const PositionForward pf = forward_position(params, pool, previous_token(prompt, response, t));
    int chosen = 0;
    if (temperature <= 0.0) {
      for (int v = 1; v < cfg.vocab; ++v)
        if (pf.logits[v] > pf.logits[chosen]) chosen = v;
    } else {
      DenseVector scaled = pf.logits;
      for (double& x : scaled) x /= temperature;
      DenseVector lp;
      log_softmax(scaled, lp);
      const double u = stream.uniform();
      double cum = 0.0;
      chosen = cfg.vocab - 1;
      for (int v = 0; v < cfg.vocab; ++v) {
        cum += std::exp(lp[v]);
        if (u < cum) {
          chosen = v;
          break;
        }
      }
    }
    response.push_back(chosen);
    logprobs.push_back(pf.logprobs[chosen]);  // temperature-1 policy logprob
    total += pf.logprobs[chosen];
  }

  SequenceSample sample;
  sample.prompt_tokens.assign(prompt.begin(), prompt.end());
  sample.response_tokens = std::move(response);
  sample.per_token_logprobs = std::move(logprobs);
  sample.logprob_sum = total;
  return sample;
}

namespace {

// Shared reverse pass: gradient of sum_t weights[t] * log pi(response[t]),
// optionally recording the per-position tapes (with unweighted grad_out).
BackwardResult backward_core(const PolicyParams& params, std::span<const int> prompt,
                             std::span<const int> response, std::span<const double> weights,
                             bool record_tapes) {
  const ModelConfig& cfg = params.config();
  check_tokens(prompt, cfg.vocab, "backward");
  check_tokens(response, cfg.vocab, "backward");

  BackwardResult out;
  out.grads = Gradients::zeros_like(params);
  const std::size_t len = response.size();
  LayerTape hidden_tape{PolicyParams::kHiddenW, DenseMatrix(len, cfg.ctx_dim()),
                        DenseMatrix(len, cfg.d_hid)};
  LayerTape out_tape{PolicyParams::kOutW, DenseMatrix(len, cfg.d_hid),
                     DenseMatrix(len, cfg.vocab)};

  DenseVector& g_embed = out.grads.layers[PolicyParams::kEmbed];
  DenseVector& g_hw = out.grads.layers[PolicyParams::kHiddenW];
  DenseVector& g_hb = out.grads.layers[PolicyParams::kHiddenB];
  DenseVector& g_ow = out.grads.layers[PolicyParams::kOutW];
  DenseVector& g_ob = out.grads.layers[PolicyParams::kOutB];

  const int e = cfg.d_emb;
  const DenseVector pool = mean_prompt_embedding(params, prompt);
  const double inv_prompt =
      prompt.empty() ? 0.0 : 1.0 / static_cast<double>(prompt.size());

  for (std::size_t t = 0; t < len; ++t) {
    const int prev = previous_token(prompt, response, t);
    const PositionForward pf = forward_position(params, pool, prev);
    const double w = weights.empty() ? 1.0 : weights[t];

    // d logprob_sum / d logits = onehot(y) - softmax(logits)
    DenseVector d_logits(cfg.vocab);
    for (int v = 0; v < cfg.vocab; ++v) d_logits[v] = -std::exp(pf.logprobs[v]);
    d_logits[response[t]] += 1.0;

    // out layer
    for (int v = 0; v < cfg.vocab; ++v) {
      const double gv = w * d_logits[v];
      g_ob[v] += gv;
      for (int j = 0; j < cfg.d_hid; ++j) g_ow[j * cfg.vocab + v] += gv * pf.h[j];
    }
    // back through tanh
    DenseVector d_hpre(cfg.d_hid);
    for (int j = 0; j < cfg.d_hid; ++j) {
      double s = 0.0;
      for (int v = 0; v < cfg.vocab; ++v) s += params.out_w(j, v) * d_logits[v];
      d_hpre[j] = s * (1.0 - pf.h[j] * pf.h[j]);
    }
    // hidden layer
    for (int j = 0; j < cfg.d_hid; ++j) {
      const double gj = w * d_hpre[j];
      g_hb[j] += gj;
      for (int i = 0; i < cfg.ctx_dim(); ++i) g_hw[i * cfg.d_hid + j] += gj * pf.ctx[i];
    }
    // embeddings via the context gradient
    DenseVector d_ctx(cfg.ctx_dim(), 0.0);
    for (int i = 0; i < cfg.ctx_dim(); ++i) {
      double s = 0.0;
      for (int j = 0; j < cfg.d_hid; ++j) s += params.hidden_w(i, j) * d_hpre[j];
      d_ctx[i] = w * s;
    }
    for (int tok : prompt)
      for (int j = 0; j < e; ++j) g_embed[tok * e + j] += d_ctx[j] * inv_prompt;
    for (int j = 0; j < e; ++j) g_embed[prev * e + j] += d_ctx[e + j];

    if (record_tapes) {
      for (int i = 0; i < cfg.ctx_dim(); ++i) hidden_tape.act_in(t, i) = pf.ctx[i];
      for (int j = 0; j < cfg.d_hid; ++j) {
        hidden_tape.grad_out(t, j) = d_hpre[j];
        out_tape.act_in(t, j) = pf.h[j];
      }
      for (int v = 0; v < cfg.vocab; ++v) out_tape.grad_out(t, v) = d_logits[v];
    }
  }

  if (record_tapes) {
    out.tapes.push_back(std::move(hidden_tape));
    out.tapes.push_back(std::move(out_tape));
  }
  return out;
}

}  // namespace

BackwardResult backward_sequence(const PolicyParams& params, const SequenceSample& sample) {
  return backward_core(params, sample.prompt_tokens, sample.response_tokens, {}, true);
}

Gradients backward_weighted(const PolicyParams& params, std::span<const int> prompt,
                            std::span<const int> response,
                            std::span<const double> token_weights) {
  if (token_weights.size() != response.size())
    throw std::invalid_argument("backward_weighted: weights/response length mismatch");
  return backward_core(params, prompt, response, token_weights, false).grads;
}

double entropy(const PolicyParams& params, const std::vector<Context>& contexts) {
  if (contexts.empty()) throw std::invalid_argument("entropy: need at least one context");
  double total = 0.0;
  for (const Context& ctx : contexts) {
    const DenseVector lp = context_logprobs(params, ctx);
    double h = 0.0;
    for (double v : lp) h -= std::exp(v) * v;
    total += h;
  }
  return total / static_cast<double>(contexts.size());
}

DenseVector context_logprobs(const PolicyParams& params, const Context& ctx) {
  const ModelConfig& cfg = params.config();
  check_tokens(ctx.prompt, cfg.vocab, "context_logprobs");
  check_tokens(ctx.response_prefix, cfg.vocab, "context_logprobs");
  const DenseVector pool = mean_prompt_embedding(params, ctx.prompt);
  const int prev = previous_token(ctx.prompt, ctx.response_prefix, ctx.response_prefix.size());
  return forward_position(params, pool, prev).logprobs;
}

// ---- checkpoint io ----

namespace {
constexpr const char* kCheckpointMagic = "proma-checkpoint";
constexpr int kCheckpointVersion = 1;
}  // namespace

void save_checkpoint(const PolicyParams& params, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  const ModelConfig& cfg = params.config();
  out << kCheckpointMagic << " " << kCheckpointVersion << "\n";
  out << "model " << cfg.vocab << " " << cfg.d_emb << " " << cfg.d_hid << "\n";
  char buf[40];
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    const auto values = params.layer(l);
    out << "layer " << PolicyParams::layer_name(l) << " " << values.size() << "\n";
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%a", values[i]);
      out << buf << ((i + 1) % 8 == 0 || i + 1 == values.size() ? "\n" : " ");
    }
  }
  out << "end\n";
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

PolicyParams load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kCheckpointMagic || version != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: bad header in " + path);
  std::string key;
  ModelConfig cfg;
  in >> key >> cfg.vocab >> cfg.d_emb >> cfg.d_hid;
  if (key != "model") throw std::runtime_error("load_checkpoint: missing model line");
  PolicyParams params(cfg);
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    std::string name;
    std::size_t n = 0;
    in >> key >> name >> n;
    if (key != "layer" || name != PolicyParams::layer_name(l) || n != params.layer_size(l))
      throw std::runtime_error("load_checkpoint: unexpected layer record");
    auto values = params.layer(l);
    std::string tok;
    for (std::size_t i = 0; i < n; ++i) {
      in >> tok;
      values[i] = std::strtod(tok.c_str(), nullptr);
    }
  }
  in >> key;
  if (key != "end" || !in) throw std::runtime_error("load_checkpoint: truncated file");
  return params;
}

}  // namespace proma
