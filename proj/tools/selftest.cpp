#include "selftest.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "oracle/oracles.hpp"
#include "proma/accumulate.hpp"
#include "proma/diagnostics.hpp"
#include "proma/intra.hpp"
#include "proma/rng.hpp"
#include "proma/train.hpp"

namespace proma {

namespace {

double vec_distance(const DenseVector& a, const DenseVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool check_exact_projection() {
  for (int rep = 0; rep < 20; ++rep) {
    rng::Stream s(rng::derive(0xA1, rep));
    const std::size_t d = 8 + s.next_u64() % 56;
    const std::size_t k = 1 + s.next_u64() % std::min<std::size_t>(8, d);
    const DenseMatrix vecs = oracle::random_gaussian_matrix(d, k, rng::derive(0xA2, rep));
    const DenseVector acc = oracle::random_gaussian_vector(d, rng::derive(0xA3, rep));
    const DenseVector ours = project_to_complement(acc, vecs);
    const DenseVector ref = oracle::project_complement_pseudoinverse(acc, vecs);
    if (vec_distance(ours, ref) > 1e-8 * std::max(1.0, norm(acc))) return false;
    const DenseVector twice = project_to_complement(ours, vecs);
    if (vec_distance(twice, ours) > 1e-10 * std::max(1.0, norm(ours))) return false;
    const double lhs = norm(acc) * norm(acc);
    DenseVector removed(d);
    for (std::size_t i = 0; i < d; ++i) removed[i] = acc[i] - ours[i];
    const double rhs = norm(ours) * norm(ours) + norm(removed) * norm(removed);
    if (std::fabs(lhs - rhs) > 1e-8 * lhs) return false;
  }
  return true;
}

bool check_iterative_projection() {
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t d = 1024, k = 8;
    const DenseMatrix vecs = oracle::random_gaussian_matrix(d, k, rng::derive(0xB1, rep));
    const DenseVector acc = oracle::random_gaussian_vector(d, rng::derive(0xB2, rep));
    const DenseVector out = project_to_complement_iterative(acc, vecs, 2);
    for (std::size_t j = 0; j < k; ++j) {
      DenseVector u = vecs.col(j);
      const double un = norm(u);
      for (double& x : u) x /= un;
      if (std::fabs(dot(out, u)) > 1e-3 * norm(acc)) return false;
    }
  }
  return true;
}

bool check_randomized_basis() {
  for (int rep = 0; rep < 5; ++rep) {
    const DenseMatrix x =
        oracle::matrix_with_spectrum(28, 20, {45, 30, 18, 1.2, 0.8}, rng::derive(0xC1, rep));
    const DenseMatrix q = approx_rank_r_basis(x, 3, 1, rng::derive(0xC2, rep));
    const DenseMatrix proj = matmul(x, matmul_a_bt(q, q));
    double captured = 0.0;
    for (double v : proj.data()) captured += v * v;
    const double top = 45.0 * 45 + 30.0 * 30 + 18.0 * 18;
    if (std::sqrt(captured) < 0.99 * std::sqrt(top)) return false;
  }
  return true;
}

bool check_sandwich() {
  const DenseMatrix g = oracle::random_gaussian_matrix(7, 5, 0xD1);
  const DenseMatrix ql = oracle::gram_schmidt_twice(oracle::random_gaussian_matrix(7, 2, 0xD2));
  const DenseMatrix qr = oracle::gram_schmidt_twice(oracle::random_gaussian_matrix(5, 2, 0xD3));
  const DenseMatrix ours = sandwich_project(g, ql, qr);
  const DenseMatrix ref = matmul(matmul_a_bt(ql, ql), matmul(g, matmul_a_bt(qr, qr)));
  for (std::size_t i = 0; i < ours.data().size(); ++i)
    if (std::fabs(ours.data()[i] - ref.data()[i]) > 1e-10) return false;
  return true;
}

bool check_policy_gradients() {
  const ModelConfig cfg{8, 4, 8};
  for (int rep = 0; rep < 2; ++rep) {
    PolicyParams params = PolicyParams::random_init(cfg, 0.5, rng::derive(0xE1, rep));
    rng::Stream ts(rng::derive(0xE2, rep));
    std::vector<int> prompt(3), response(3);
    for (int& t : prompt) t = static_cast<int>(ts.next_u64() % cfg.vocab);
    for (int& t : response) t = static_cast<int>(ts.next_u64() % cfg.vocab);
    const SequenceSample sample = forward_logprobs(params, prompt, response);
    const BackwardResult bw = backward_sequence(params, sample);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      auto values = params.layer(l);
      std::vector<double> flat(values.begin(), values.end());
      auto f = [&]() {
        std::copy(flat.begin(), flat.end(), values.begin());
        return forward_logprobs(params, prompt, response).logprob_sum;
      };
      const std::vector<double> fd = oracle::central_differences(flat, f, 1e-5);
      std::copy(flat.begin(), flat.end(), values.begin());
      double scale = 1e-3;
      for (double g : bw.grads.layers[l]) scale = std::max(scale, std::fabs(g));
      for (std::size_t i = 0; i < fd.size(); ++i)
        if (std::fabs(fd[i] - bw.grads.layers[l][i]) > 1e-4 * scale) return false;
    }
    // tape identity for the linear layers
    for (const LayerTape& tape : bw.tapes) {
      const DenseMatrix got = matmul_at_b(tape.grad_out, tape.act_in);
      const DenseVector& g = bw.grads.layers[tape.layer_id];
      for (std::size_t o = 0; o < got.rows(); ++o)
        for (std::size_t i = 0; i < got.cols(); ++i)
          if (std::fabs(got(o, i) - g[i * got.rows() + o]) > 1e-10) return false;
    }
  }
  return true;
}

bool check_proma_mechanism() {
  const PolicyParams shape(ModelConfig{12, 4, 6});
  AccumulatorOptions opt;
  opt.clamp_fraction = std::numeric_limits<double>::infinity();
  opt.projection_group_size = 0;
  for (int rep = 0; rep < 5; ++rep) {
    AccumulatorState state = AccumulatorState::make(shape, Strategy::kPromaExact, opt);
    MicrobatchGradients mcb;
    mcb.k = 4;
    mcb.policy_grad = Gradients::zeros_like(shape);
    mcb.seq_grads.resize(PolicyParams::kLayerCount);
    rng::Stream s(rng::derive(0xF1, rep));
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      const std::size_t d = shape.layer_size(l);
      mcb.seq_grads[l] = oracle::random_gaussian_matrix(d, mcb.k, rng::derive(0xF2, rep * 8 + l));
      for (double& x : mcb.policy_grad.layers[l]) x = 0.1 * s.gaussian();
      state.grad.layers[l] = oracle::random_gaussian_vector(d, rng::derive(0xF3, rep * 8 + l));
    }
    accumulate_proma(state, mcb, true);
    Gradients carried = state.grad;
    carried.add_scaled(mcb.policy_grad, -1.0);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l)
      for (int j = 0; j < mcb.k; ++j) {
        const DenseVector col = mcb.seq_grads[l].col(j);
        if (std::fabs(dot(carried.layers[l], col)) >
            1e-8 * std::max(1.0, norm(carried.layers[l]) * norm(col)))
          return false;
      }
    if (local_kl_surrogate(carried, mcb.seq_grads) > 1e-8) return false;
  }
  // first microbatch from a zero state is exactly plain
  AccumulatorState fresh = AccumulatorState::make(shape, Strategy::kPromaExact, opt);
  MicrobatchGradients mcb;
  mcb.k = 2;
  mcb.policy_grad = Gradients::zeros_like(shape);
  mcb.seq_grads.resize(PolicyParams::kLayerCount);
  for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
    mcb.seq_grads[l] = oracle::random_gaussian_matrix(shape.layer_size(l), 2, 0xF4 + l);
    mcb.policy_grad.layers[l] = oracle::random_gaussian_vector(shape.layer_size(l), 0xF5 + l);
  }
  accumulate_proma(fresh, mcb, true);
  for (int l = 0; l < PolicyParams::kLayerCount; ++l)
    if (vec_distance(fresh.grad.layers[l], mcb.policy_grad.layers[l]) != 0.0) return false;
  return true;
}

bool check_ppo_equals_plain() {
  const ModelConfig cfg{12, 4, 6};
  const PolicyParams params = PolicyParams::random_init(cfg, 0.5, 0x11);
  TaskConfig task;
  task.n_digits = 2;
  task.vocab = 12;
  std::vector<RewardedGroup> groups;
  for (const TaskInstance& inst : make_instances(task, 3, 0x12)) {
    RewardedGroup g;
    g.instance = inst;
    for (int j = 0; j < 3; ++j) {
      SequenceSample s = sample_response(params, inst.prompt_tokens, 1, 1.0,
                                         rng::derive(0x13, groups.size() * 10 + j));
      g.rewards.push_back(reward(s, inst));
      g.samples.push_back(std::move(s));
    }
    g.advantages = group_advantages(g.rewards);
    groups.push_back(std::move(g));
  }
  AccumulatorState ppo = AccumulatorState::make(params, Strategy::kPpoClip);
  accumulate_ppo_clip(ppo, params, params, groups, 0.2);
  AccumulatorState plain = AccumulatorState::make(params, Strategy::kPlain);
  accumulate_plain(plain, compute_microbatch_gradients(params, groups));
  Gradients diff = ppo.grad;
  diff.add_scaled(plain.grad, -1.0);
  return diff.norm() <= 1e-12 * std::max(1.0, plain.grad.norm());
}

bool check_clamp_and_advantages() {
  const DenseVector p{0.0, 2.0};
  if (std::fabs(norm(clamp_subtracted(p, 0.5)) - 0.5) > 1e-12) return false;
  if (norm(clamp_subtracted(p, 0.0)) != 0.0) return false;
  const auto adv = group_advantages({0.0, 1.0}, 0.0);
  if (std::fabs(adv[0] + 1.0) > 1e-12 || std::fabs(adv[1] - 1.0) > 1e-12) return false;
  const auto flat = group_advantages({1.0, 1.0, 1.0});
  for (double a : flat)
    if (a != 0.0) return false;
  return true;
}

bool check_kl() {
  ModelConfig cfg{2, 2, 1};
  const PolicyParams p(cfg);
  PolicyParams q(cfg);
  q.out_b[1] = std::log(3.0);
  const std::vector<std::vector<int>> prompts{{0}};
  const double kl = kl_divergence(p, q, prompts, 1, 1, 1);
  const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  if (std::fabs(kl - expected) > 1e-12) return false;
  if (kl_divergence(p, p, prompts, 1, 1, 1) != 0.0) return false;
  return true;
}

bool check_intra() {
  LayerTape tape;
  tape.layer_id = PolicyParams::kHiddenW;
  tape.act_in = oracle::random_gaussian_matrix(3, 6, 0x21);
  tape.grad_out = oracle::random_gaussian_matrix(3, 5, 0x22);
  std::vector<double> adv{0.5, -1.0, 0.25};
  IntraConfig cfg;  // full rank after clamping
  const auto svd_a = oracle::jacobi_svd(tape.act_in);
  const auto svd_g = oracle::jacobi_svd(tape.grad_out);
  DenseMatrix q_a(6, 3), q_g(5, 3);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 3; ++j) q_a(i, j) = svd_a.v(i, j);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) q_g(i, j) = svd_g.v(i, j);
  const DenseMatrix out = proma_intra_with_bases(adv, tape, cfg, q_a, q_g);
  double out_n = 0.0, pg_n = 0.0;
  DenseMatrix pg(5, 6);
  for (std::size_t o = 0; o < 5; ++o)
    for (std::size_t i = 0; i < 6; ++i) {
      double s = 0.0;
      for (std::size_t t = 0; t < 3; ++t) s += adv[t] * tape.grad_out(t, o) * tape.act_in(t, i);
      pg(o, i) = s / 3.0;
      pg_n += pg(o, i) * pg(o, i);
    }
  for (double x : out.data()) out_n += x * x;
  return std::sqrt(out_n) <= 1e-8 * std::sqrt(pg_n);
}

bool check_determinism() {
  RunConfig cfg;
  cfg.total_steps = 3;
  cfg.group_size = 4;
  cfg.prompts_per_microbatch = 2;
  cfg.microbatches_per_step = 2;
  cfg.val_instances = 16;
  cfg.entropy_contexts = 4;
  cfg.kl_prompts = 4;
  cfg.kl_samples = 1;
  cfg.eval_every = 1;
  namespace fs = std::filesystem;
  const std::string base = "selftest_runs";
  const RunArtifacts a = train(cfg, base + "/a");
  const RunArtifacts b = train(cfg, base + "/b");
  const bool same = slurp(a.metrics_csv) == slurp(b.metrics_csv) &&
                    !slurp(a.metrics_csv).empty();
  fs::remove_all(base);
  return same;
}

}  // namespace

int run_selftest(std::ostream& out) {
  struct Check {
    const char* name;
    std::function<bool()> fn;
  };
  const Check checks[] = {
      {"exact projection vs pseudoinverse oracle", check_exact_projection},
      {"iterative projection residual bound", check_iterative_projection},
      {"randomized basis captured energy", check_randomized_basis},
      {"sandwich projection vs explicit projectors", check_sandwich},
      {"policy gradients vs finite differences", check_policy_gradients},
      {"PROMA orthogonality and first-microbatch identity", check_proma_mechanism},
      {"ppo_clip equals plain on-policy", check_ppo_equals_plain},
      {"norm clamp and group advantages", check_clamp_and_advantages},
      {"exact KL closed form", check_kl},
      {"intra full-rank annihilation", check_intra},
      {"trainer determinism", check_determinism},
  };
  int failures = 0;
  for (const Check& c : checks) {
    bool ok = false;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      out << "[FAIL] " << c.name << " (exception: " << e.what() << ")\n";
      ++failures;
      continue;
    }
    out << (ok ? "[ok]   " : "[FAIL] ") << c.name << "\n";
    if (!ok) ++failures;
  }
  out << (failures == 0 ? "selftest: all checks passed\n"
                        : "selftest: " + std::to_string(failures) + " check(s) failed\n");
  return failures;
}

}  // namespace proma
