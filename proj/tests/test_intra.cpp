#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracle/oracles.hpp"
#include "proma/intra.hpp"
#include "proma/rng.hpp"

using namespace proma;

namespace {

double fro(const DenseMatrix& m) {
  double s = 0.0;
  for (double x : m.data()) s += x * x;
  return std::sqrt(s);
}

LayerTape random_tape(std::size_t t_count, std::size_t d_in, std::size_t d_out,
                      std::uint64_t seed) {
  LayerTape tape;
  tape.layer_id = PolicyParams::kHiddenW;
  tape.act_in = oracle::random_gaussian_matrix(t_count, d_in, rng::derive(seed, 1));
  tape.grad_out = oracle::random_gaussian_matrix(t_count, d_out, rng::derive(seed, 2));
  return tape;
}

std::vector<double> random_advantages(std::size_t t_count, std::uint64_t seed) {
  rng::Stream s(seed);
  std::vector<double> adv(t_count);
  for (double& a : adv) a = s.gaussian();
  return adv;
}

// the listing's contraction, written independently: pg[o][i] = sum_t a_t g[t][o] x[t][i] / T
DenseMatrix oracle_policy_grad(const std::vector<double>& adv, const LayerTape& tape) {
  DenseMatrix pg(tape.grad_out.cols(), tape.act_in.cols());
  const std::size_t t_count = tape.act_in.rows();
  for (std::size_t o = 0; o < pg.rows(); ++o)
    for (std::size_t i = 0; i < pg.cols(); ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < t_count; ++t)
        s += adv[t] * tape.grad_out(t, o) * tape.act_in(t, i);
      pg(o, i) = s / static_cast<double>(t_count);
    }
  return pg;
}

}  // namespace

TEST_SUITE("proma_intra") {
  TEST_CASE("shrinkage zero returns the unmodified policy gradient") {
    const LayerTape tape = random_tape(10, 6, 5, 7);
    const auto adv = random_advantages(10, 8);
    IntraConfig cfg;
    cfg.shrinkage = 0.0;
    cfg.r = 3;
    const DenseMatrix out = proma_intra(adv, tape, cfg, 42);
    const DenseMatrix expected = oracle_policy_grad(adv, tape);
    for (std::size_t i = 0; i < out.data().size(); ++i)
      CHECK(std::fabs(out.data()[i] - expected.data()[i]) <= 1e-12);
  }

  TEST_CASE("full-rank oracle bases at shrinkage one annihilate the gradient") {
    // T=3 < d_in, d_out: the policy gradient's row and column spaces live in
    // the rank-3 tape subspaces, so the full-rank sandwich removes everything.
    const LayerTape tape = random_tape(3, 6, 5, 9);
    const auto adv = random_advantages(3, 10);
    IntraConfig cfg;  // r = 100 clamps to 3
    const auto svd_a = oracle::jacobi_svd(tape.act_in);
    const auto svd_g = oracle::jacobi_svd(tape.grad_out);
    DenseMatrix q_a(6, 3), q_g(5, 3);
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 3; ++j) q_a(i, j) = svd_a.v(i, j);
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 3; ++j) q_g(i, j) = svd_g.v(i, j);
    const DenseMatrix out = proma_intra_with_bases(adv, tape, cfg, q_a, q_g);
    const DenseMatrix pg = oracle_policy_grad(adv, tape);
    CHECK(fro(out) <= 1e-8 * fro(pg));
  }

  TEST_CASE("matches the explicit-projector oracle with the same seeded bases") {
    const LayerTape tape = random_tape(12, 6, 5, 11);
    const auto adv = random_advantages(12, 12);
    IntraConfig cfg;
    cfg.r = 2;
    const std::uint64_t seed = 77;
    const DenseMatrix ours = proma_intra(adv, tape, cfg, seed);

    const auto [q_a, q_g] = intra_bases(tape, cfg, seed);
    const DenseMatrix pg = oracle_policy_grad(adv, tape);
    const DenseMatrix p_left = matmul_a_bt(q_g, q_g);   // (d_out, d_out)
    const DenseMatrix p_right = matmul_a_bt(q_a, q_a);  // (d_in, d_in)
    const DenseMatrix sandwich = matmul(p_left, matmul(pg, p_right));
    for (std::size_t i = 0; i < ours.data().size(); ++i)
      CHECK(std::fabs(ours.data()[i] - (pg.data()[i] - sandwich.data()[i])) <= 1e-10);
  }

  TEST_CASE("shrinkage linearity for fixed seeded bases") {
    const LayerTape tape = random_tape(9, 5, 4, 13);
    const auto adv = random_advantages(9, 14);
    IntraConfig cfg;
    cfg.r = 2;
    const std::uint64_t seed = 5;
    IntraConfig cfg1 = cfg;
    cfg1.shrinkage = 1.0;
    const DenseMatrix at_one = proma_intra(adv, tape, cfg1, seed);
    const DenseMatrix pg = oracle_policy_grad(adv, tape);
    for (double s : {0.25, 0.6, 1.5}) {
      IntraConfig cfgs = cfg;
      cfgs.shrinkage = s;
      const DenseMatrix at_s = proma_intra(adv, tape, cfgs, seed);
      for (std::size_t i = 0; i < at_s.data().size(); ++i) {
        const double expected = pg.data()[i] - s * (pg.data()[i] - at_one.data()[i]);
        CHECK(std::fabs(at_s.data()[i] - expected) <= 1e-10);
      }
    }
  }

  TEST_CASE("norm reduction at shrinkage one") {
    for (int rep = 0; rep < 10; ++rep) {
      const LayerTape tape = random_tape(8, 6, 5, rng::derive(900, rep));
      const auto adv = random_advantages(8, rng::derive(901, rep));
      IntraConfig cfg;
      cfg.r = 2;
      const DenseMatrix out = proma_intra(adv, tape, cfg, rng::derive(902, rep));
      const DenseMatrix pg = oracle_policy_grad(adv, tape);
      CHECK(fro(out) <= fro(pg) * (1.0 + 1e-12));
    }
  }

  TEST_CASE("double sandwich output is annihilated by both factors") {
    const LayerTape tape = random_tape(10, 6, 5, 15);
    const auto adv = random_advantages(10, 16);
    IntraConfig cfg;
    cfg.r = 2;
    cfg.variant = IntraVariant::kDoubleSandwich;
    const std::uint64_t seed = 3;
    const DenseMatrix out = proma_intra(adv, tape, cfg, seed);
    const auto [q_a, q_g] = intra_bases(tape, cfg, seed);
    const DenseMatrix left = matmul_at_b(q_g, out);  // Q_gᵀ result
    for (double x : left.data()) CHECK(std::fabs(x) <= 1e-8);
    const DenseMatrix right = matmul(out, q_a);  // result Q_a
    for (double x : right.data()) CHECK(std::fabs(x) <= 1e-8);
  }

  TEST_CASE("fixed seed is bitwise reproducible") {
    const LayerTape tape = random_tape(7, 4, 6, 17);
    const auto adv = random_advantages(7, 18);
    IntraConfig cfg;
    cfg.r = 3;
    const DenseMatrix a = proma_intra(adv, tape, cfg, 123);
    const DenseMatrix b = proma_intra(adv, tape, cfg, 123);
    CHECK(a.data() == b.data());
  }

  TEST_CASE("empty tape yields a zero matrix") {
    LayerTape tape;
    tape.layer_id = PolicyParams::kOutW;
    tape.act_in = DenseMatrix(0, 4);
    tape.grad_out = DenseMatrix(0, 3);
    const DenseMatrix out = proma_intra({}, tape, IntraConfig{}, 1);
    CHECK(out.rows() == 3);
    CHECK(out.cols() == 4);
    CHECK(fro(out) == 0.0);
  }
}

TEST_SUITE("intra_proma_step") {
  namespace {
  std::vector<RewardedGroup> make_groups(const PolicyParams& params, int n_prompts, int group,
                                         std::uint64_t seed) {
    TaskConfig task;
    task.n_digits = 2;
    task.vocab = params.config().vocab;
    std::vector<RewardedGroup> groups;
    const auto instances = make_instances(task, n_prompts, rng::derive(seed, 1));
    for (int p = 0; p < n_prompts; ++p) {
      RewardedGroup g;
      g.instance = instances[p];
      for (int j = 0; j < group; ++j) {
        SequenceSample s = sample_response(params, g.instance.prompt_tokens, task.answer_len, 1.0,
                                           rng::derive(seed, 50 + p * group + j));
        g.rewards.push_back(reward(s, g.instance));
        g.samples.push_back(std::move(s));
      }
      g.advantages = group_advantages(g.rewards);
      groups.push_back(std::move(g));
    }
    return groups;
  }
  }  // namespace

  TEST_CASE("shrinkage zero matches the microbatch policy gradient on linear layers") {
    // answer_len = 1 makes T = k, so the per-token and per-sequence
    // normalizations coincide.
    const PolicyParams params = PolicyParams::random_init(ModelConfig{12, 4, 6}, 0.5, 21);
    const auto groups = make_groups(params, 3, 2, 22);
    IntraConfig cfg;
    cfg.shrinkage = 0.0;
    const Gradients intra = intra_proma_step(params, groups, cfg, 9);
    const MicrobatchGradients mcb = compute_microbatch_gradients(params, groups);
    for (int l : {PolicyParams::kHiddenW, PolicyParams::kOutW})
      for (std::size_t i = 0; i < intra.layers[l].size(); ++i)
        CHECK(std::fabs(intra.layers[l][i] - mcb.policy_grad.layers[l][i]) <= 1e-10);
  }

  TEST_CASE("non-factorizable layers keep the plain policy gradient") {
    const PolicyParams params = PolicyParams::random_init(ModelConfig{12, 4, 6}, 0.5, 23);
    const auto groups = make_groups(params, 2, 3, 24);
    IntraConfig cfg;
    cfg.r = 2;
    const Gradients intra = intra_proma_step(params, groups, cfg, 10);
    const MicrobatchGradients mcb = compute_microbatch_gradients(params, groups);
    for (int l : {PolicyParams::kEmbed, PolicyParams::kHiddenB, PolicyParams::kOutB})
      for (std::size_t i = 0; i < intra.layers[l].size(); ++i)
        CHECK(intra.layers[l][i] == mcb.policy_grad.layers[l][i]);
  }

  TEST_CASE("stateless across microbatches: order of processing is irrelevant") {
    const PolicyParams params = PolicyParams::random_init(ModelConfig{12, 4, 6}, 0.5, 25);
    const auto g1 = make_groups(params, 2, 2, 26);
    const auto g2 = make_groups(params, 2, 2, 27);
    IntraConfig cfg;
    cfg.r = 2;
    Gradients sum_a = intra_proma_step(params, g1, cfg, 11);
    sum_a.add_scaled(intra_proma_step(params, g2, cfg, 12), 1.0);
    Gradients sum_b = intra_proma_step(params, g2, cfg, 12);
    sum_b.add_scaled(intra_proma_step(params, g1, cfg, 11), 1.0);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l)
      for (std::size_t i = 0; i < sum_a.layers[l].size(); ++i)
        CHECK(sum_a.layers[l][i] == doctest::Approx(sum_b.layers[l][i]).epsilon(1e-12));
  }

  TEST_CASE("linear layer output equals proma_intra on the recorded tape") {
    const PolicyParams params = PolicyParams::random_init(ModelConfig{12, 4, 6}, 0.5, 28);
    const auto groups = make_groups(params, 4, 2, 29);  // T = 8 tokens
    IntraConfig cfg;
    cfg.r = 3;
    const std::uint64_t seed = 13;
    const Gradients step = intra_proma_step(params, groups, cfg, seed);
    const MicrobatchGradients mcb = compute_microbatch_gradients(params, groups);
    for (const LayerTape& tape : mcb.tapes) {
      const DenseMatrix g =
          proma_intra(mcb.token_advantages, tape, cfg, rng::derive(seed, tape.layer_id));
      const DenseVector& flat = step.layers[tape.layer_id];
      for (std::size_t i = 0; i < g.cols(); ++i)
        for (std::size_t o = 0; o < g.rows(); ++o)
          CHECK(flat[i * g.rows() + o] == g(o, i));
    }
  }
}
