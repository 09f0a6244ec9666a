#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "proma/accumulate.hpp"
#include "proma/linalg.hpp"
#include "proma/policy.hpp"

namespace proma {

enum class IntraVariant { kSubtractSandwich, kDoubleSandwich };

struct IntraConfig {
  int r = 100;  // clamped per layer to min(r, T, d_in, d_out)
  int r_a = 0;  // 0 = use r; separate ranks for the activation/grad factors
  int r_g = 0;
  double shrinkage = 1.0;
  int power_iters = 1;
  IntraVariant variant = IntraVariant::kSubtractSandwich;
};

IntraVariant intra_variant_from_string(const std::string& name);
const char* intra_variant_name(IntraVariant v);

// Randomized bases (Q_a over act_in rows, Q_g over grad_out rows) for one
// tape, with the per-factor seeds derived from rng_seed. Exposed so oracle
// checks can reproduce the exact factors proma_intra used.
std::pair<DenseMatrix, DenseMatrix> intra_bases(const LayerTape& tape, const IntraConfig& cfg,
                                                std::uint64_t rng_seed);

// Within-microbatch factored projection for one linear layer. Returns the
// (d_out, d_in) gradient of the advantage-weighted per-token objective:
//   policy_grad = (token_advantages * grad_outᵀ) act_in / T
// minus, for kSubtractSandwich, shrinkage times its sandwich component
// Q_g (Q_gᵀ policy_grad Q_a) Q_aᵀ; the kDoubleSandwich ablation instead
// returns (I - Q_g Q_gᵀ) policy_grad (I - Q_a Q_aᵀ). T = 0 yields zeros.
DenseMatrix proma_intra(std::span<const double> token_advantages, const LayerTape& tape,
                        const IntraConfig& cfg, std::uint64_t rng_seed);

// Variant that takes externally supplied orthonormal factors (used by tests
// with dense-SVD oracle bases); proma_intra delegates here.
DenseMatrix proma_intra_with_bases(std::span<const double> token_advantages,
                                   const LayerTape& tape, const IntraConfig& cfg,
                                   const DenseMatrix& q_a, const DenseMatrix& q_g);

// One microbatch processed with Intra-PROMA: linear layers get proma_intra on
// their tape (transposed back into parameter layout); non-factorizable
// parameters (embedding, biases) keep the plain policy gradient. Stateless
// across microbatches.
Gradients intra_proma_step(const PolicyParams& params, const std::vector<RewardedGroup>& groups,
                           const IntraConfig& cfg, std::uint64_t rng_seed);

// Same, starting from already-computed microbatch gradients.
Gradients intra_proma_step(const MicrobatchGradients& mcb, const IntraConfig& cfg,
                           std::uint64_t rng_seed);

}  // namespace proma
