#include "proma/intra.hpp"

#include <algorithm>
#include <stdexcept>

#include "proma/rng.hpp"

namespace proma {

IntraVariant intra_variant_from_string(const std::string& name) {
  if (name == "subtract_sandwich") return IntraVariant::kSubtractSandwich;
  if (name == "double_sandwich") return IntraVariant::kDoubleSandwich;
  throw std::invalid_argument("unknown intra variant: " + name);
}

const char* intra_variant_name(IntraVariant v) {
  return v == IntraVariant::kSubtractSandwich ? "subtract_sandwich" : "double_sandwich";
}

namespace {

// policy_grad = (token_advantages * grad_outᵀ) act_in / T, shape (d_out, d_in)
DenseMatrix weighted_policy_grad(std::span<const double> adv, const LayerTape& tape) {
  const std::size_t t_count = tape.act_in.rows();
  DenseMatrix weighted(t_count, tape.grad_out.cols());
  for (std::size_t t = 0; t < t_count; ++t)
    for (std::size_t o = 0; o < tape.grad_out.cols(); ++o)
      weighted(t, o) = adv[t] * tape.grad_out(t, o);
  DenseMatrix pg = matmul_at_b(weighted, tape.act_in);  // (d_out, d_in)
  const double inv = 1.0 / static_cast<double>(t_count);
  for (double& x : pg.data()) x *= inv;
  return pg;
}

std::pair<int, int> clamped_ranks(const LayerTape& tape, const IntraConfig& cfg) {
  const int t_count = static_cast<int>(tape.act_in.rows());
  const int d_in = static_cast<int>(tape.act_in.cols());
  const int d_out = static_cast<int>(tape.grad_out.cols());
  // the listing's clamp: r = min(r, T, d_in, d_out), applied to each factor
  const int cap = std::min({t_count, d_in, d_out});
  const int r_a = std::min(cfg.r_a > 0 ? cfg.r_a : cfg.r, cap);
  const int r_g = std::min(cfg.r_g > 0 ? cfg.r_g : cfg.r, cap);
  return {r_a, r_g};
}

}  // namespace

std::pair<DenseMatrix, DenseMatrix> intra_bases(const LayerTape& tape, const IntraConfig& cfg,
                                                std::uint64_t rng_seed) {
  const auto [r_a, r_g] = clamped_ranks(tape, cfg);
  DenseMatrix q_a =
      approx_rank_r_basis(tape.act_in, r_a, cfg.power_iters, rng::derive(rng_seed, 0xA));
  DenseMatrix q_g =
      approx_rank_r_basis(tape.grad_out, r_g, cfg.power_iters, rng::derive(rng_seed, 0x6));
  return {std::move(q_a), std::move(q_g)};
}

DenseMatrix proma_intra_with_bases(std::span<const double> token_advantages,
                                   const LayerTape& tape, const IntraConfig& cfg,
                                   const DenseMatrix& q_a, const DenseMatrix& q_g) {
  const std::size_t t_count = tape.act_in.rows();
  const std::size_t d_in = tape.act_in.cols();
  const std::size_t d_out = tape.grad_out.cols();
  if (tape.grad_out.rows() != t_count)
    throw std::invalid_argument("proma_intra: act_in/grad_out row mismatch");
  if (t_count == 0) return DenseMatrix(d_out, d_in);
  if (token_advantages.size() != t_count)
    throw std::invalid_argument("proma_intra: token_advantages length mismatch");
  if (q_a.rows() != d_in || q_g.rows() != d_out)
    throw std::invalid_argument("proma_intra: basis shape mismatch");

  const DenseMatrix pg = weighted_policy_grad(token_advantages, tape);
  DenseMatrix out = pg;
  if (cfg.variant == IntraVariant::kSubtractSandwich) {
    const DenseMatrix sandwich = sandwich_project(pg, q_g, q_a);
    for (std::size_t i = 0; i < out.data().size(); ++i)
      out.data()[i] -= cfg.shrinkage * sandwich.data()[i];
  } else {
    // (I - Q_g Q_gᵀ) pg (I - Q_a Q_aᵀ), without forming either projector
    const DenseMatrix left = matmul(q_g, matmul_at_b(q_g, pg));
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= left.data()[i];
    const DenseMatrix right = matmul_a_bt(matmul(out, q_a), q_a);
    for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= right.data()[i];
  }
  return out;
}

DenseMatrix proma_intra(std::span<const double> token_advantages, const LayerTape& tape,
                        const IntraConfig& cfg, std::uint64_t rng_seed) {
  if (tape.act_in.rows() == 0)
    return DenseMatrix(tape.grad_out.cols(), tape.act_in.cols());
  const auto [q_a, q_g] = intra_bases(tape, cfg, rng_seed);
  return proma_intra_with_bases(token_advantages, tape, cfg, q_a, q_g);
}

Gradients intra_proma_step(const PolicyParams& params, const std::vector<RewardedGroup>& groups,
                           const IntraConfig& cfg, std::uint64_t rng_seed) {
  return intra_proma_step(compute_microbatch_gradients(params, groups), cfg, rng_seed);
}

Gradients intra_proma_step(const MicrobatchGradients& mcb, const IntraConfig& cfg,
                           std::uint64_t rng_seed) {
  Gradients out = mcb.policy_grad;  // embedding and biases keep the plain gradient
  for (const LayerTape& tape : mcb.tapes) {
    const DenseMatrix g =
        proma_intra(mcb.token_advantages, tape, cfg, rng::derive(rng_seed, tape.layer_id));
    // (d_out, d_in) back into the layer's (d_in, d_out) row-major layout
    DenseVector& dest = out.layers[tape.layer_id];
    const std::size_t d_in = g.cols();
    const std::size_t d_out = g.rows();
    if (dest.size() != d_in * d_out)
      throw std::invalid_argument("intra_proma_step: layer size mismatch");
    for (std::size_t i = 0; i < d_in; ++i)
      for (std::size_t o = 0; o < d_out; ++o) dest[i * d_out + o] = g(o, i);
  }
  return out;
}

}  // namespace proma
