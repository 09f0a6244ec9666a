#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracle/oracles.hpp"
#include "proma/accumulate.hpp"
#include "proma/diagnostics.hpp"
#include "proma/rng.hpp"

using namespace proma;

namespace {

ModelConfig tiny_cfg() { return ModelConfig{12, 4, 6}; }

std::vector<std::vector<int>> some_prompts(int n, std::uint64_t seed) {
  TaskConfig task;
  task.n_digits = 3;
  task.vocab = 12;
  std::vector<std::vector<int>> prompts;
  for (const auto& inst : make_instances(task, n, seed)) prompts.push_back(inst.prompt_tokens);
  return prompts;
}

}  // namespace

TEST_SUITE("kl_divergence") {
  TEST_CASE("identical policies have exactly zero KL") {
    const PolicyParams p = PolicyParams::random_init(tiny_cfg(), 0.6, 1);
    CHECK(kl_divergence(p, p, some_prompts(4, 2), 2, 7, 2) == 0.0);
  }

  TEST_CASE("closed-form two-token case") {
    // p = (0.5, 0.5), q = (0.25, 0.75) -> KL = 0.1438 nats
    ModelConfig cfg{2, 2, 1};
    const PolicyParams p(cfg);  // uniform
    PolicyParams q(cfg);
    q.out_b[1] = std::log(3.0);
    const std::vector<std::vector<int>> prompts{{0}};
    const double kl = kl_divergence(p, q, prompts, 1, 3, 1);
    CHECK(kl == doctest::Approx(0.1438).epsilon(1e-3));
    const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
    CHECK(kl == doctest::Approx(expected).epsilon(1e-12));
  }

  TEST_CASE("non-negativity over random pairs (Gibbs)") {
    const auto prompts = some_prompts(3, 5);
    for (int rep = 0; rep < 100; ++rep) {
      const PolicyParams p = PolicyParams::random_init(tiny_cfg(), 0.5, rng::derive(100, rep));
      const PolicyParams q = PolicyParams::random_init(tiny_cfg(), 0.5, rng::derive(200, rep));
      CHECK(kl_divergence(p, q, prompts, 1, rep, 1) >= -1e-12);
    }
  }
}

TEST_SUITE("lagged_reference") {
  TEST_CASE("single snapshot is returned as-is") {
    const PolicyParams p = PolicyParams::random_init(tiny_cfg(), 0.4, 11);
    SnapshotRing ring(80);
    ring.push(p, 0);
    const PolicyParams ref = lagged_reference(ring, 80);
    CHECK(ref.checksum() == p.checksum());
  }

  TEST_CASE("mean of two snapshots theta and theta + 2 delta is theta + delta") {
    PolicyParams a = PolicyParams::random_init(tiny_cfg(), 0.4, 12);
    PolicyParams b = a;
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      auto vb = b.layer(l);
      for (double& x : vb) x += 0.5;  // delta = 0.25 each way
    }
    SnapshotRing ring(80);
    ring.push(a, 0);
    ring.push(b, 1);
    const PolicyParams mid = lagged_reference(ring, 80);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      const auto va = a.layer(l);
      const auto vm = mid.layer(l);
      for (std::size_t i = 0; i < va.size(); ++i)
        CHECK(vm[i] == doctest::Approx(va[i] + 0.25).epsilon(1e-14));
    }
  }

  TEST_CASE("constant history gives constant output; window caps the span") {
    const PolicyParams p = PolicyParams::random_init(tiny_cfg(), 0.4, 13);
    SnapshotRing ring(10);
    for (int s = 0; s < 7; ++s) ring.push(p, s);
    for (int window : {3, 100}) {
      const PolicyParams ref = lagged_reference(ring, window);
      for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
        const auto a = p.layer(l);
        const auto b = ref.layer(l);
        for (std::size_t i = 0; i < a.size(); ++i)
          CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-14));
      }
    }
    CHECK_THROWS_AS(lagged_reference(SnapshotRing(5), 5), std::invalid_argument);
  }

  TEST_CASE("translation equivariance") {
    SnapshotRing ring(8);
    SnapshotRing shifted(8);
    const double delta = 1.25;
    for (int s = 0; s < 5; ++s) {
      PolicyParams p = PolicyParams::random_init(tiny_cfg(), 0.4, rng::derive(50, s));
      ring.push(p, s);
      for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
        auto v = p.layer(l);
        for (double& x : v) x += delta;
      }
      shifted.push(p, s);
    }
    const PolicyParams m1 = lagged_reference(ring, 8);
    const PolicyParams m2 = lagged_reference(shifted, 8);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      const auto a = m1.layer(l);
      const auto b = m2.layer(l);
      for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(b[i] == doctest::Approx(a[i] + delta).epsilon(1e-12));
    }
  }
}

TEST_SUITE("local_kl_surrogate") {
  namespace {
  std::vector<DenseMatrix> random_seq_grads(const PolicyParams& params, int k,
                                            std::uint64_t seed) {
    std::vector<DenseMatrix> out(PolicyParams::kLayerCount);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l)
      out[l] = oracle::random_gaussian_matrix(params.layer_size(l), k, rng::derive(seed, l));
    return out;
  }
  }  // namespace

  TEST_CASE("orthogonal update scores zero") {
    const PolicyParams params(ModelConfig{10, 2, 4});
    const int k = 2;
    std::vector<DenseMatrix> grads(PolicyParams::kLayerCount);
    Gradients update = Gradients::zeros_like(params);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      const std::size_t d = params.layer_size(l);
      grads[l] = DenseMatrix(d, k);
      grads[l](0, 0) = 1.0;
      grads[l](1, 1) = 2.0;
      update.layers[l][d - 1] = 3.0;  // touches only untouched coordinates
    }
    CHECK(local_kl_surrogate(update, grads) <= 1e-10);
  }

  TEST_CASE("single sequence, update = c * gradient gives c^2 |g|^4") {
    const PolicyParams params(ModelConfig{10, 2, 4});
    const auto grads = random_seq_grads(params, 1, 21);
    Gradients update = Gradients::zeros_like(params);
    double g_sq = 0.0;
    const double c = 0.7;
    for (int l = 0; l < PolicyParams::kLayerCount; ++l)
      for (std::size_t i = 0; i < update.layers[l].size(); ++i) {
        update.layers[l][i] = c * grads[l](i, 0);
        g_sq += grads[l](i, 0) * grads[l](i, 0);
      }
    const double expected = c * c * g_sq * g_sq;
    CHECK(local_kl_surrogate(update, grads) == doctest::Approx(expected).epsilon(1e-10));
  }

  TEST_CASE("matches the flatten-and-dot brute-force oracle") {
    const PolicyParams params(ModelConfig{10, 2, 4});
    const int k = 5;
    const auto grads = random_seq_grads(params, k, 22);
    Gradients update = Gradients::zeros_like(params);
    rng::Stream s(23);
    for (auto& layer : update.layers)
      for (double& x : layer) x = s.gaussian();

    // oracle: flatten everything into single vectors, then dot
    double expected = 0.0;
    for (int j = 0; j < k; ++j) {
      std::vector<double> flat_g, flat_u;
      for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
        for (std::size_t i = 0; i < update.layers[l].size(); ++i) {
          flat_g.push_back(grads[l](i, j));
          flat_u.push_back(update.layers[l][i]);
        }
      }
      double d = 0.0;
      for (std::size_t i = 0; i < flat_g.size(); ++i) d += flat_g[i] * flat_u[i];
      expected += d * d;
    }
    expected /= k;
    CHECK(local_kl_surrogate(update, grads) == doctest::Approx(expected).epsilon(1e-10));
  }

  TEST_CASE("quadratic scaling in the update") {
    const PolicyParams params(ModelConfig{10, 2, 4});
    const auto grads = random_seq_grads(params, 3, 24);
    Gradients update = Gradients::zeros_like(params);
    rng::Stream s(25);
    for (auto& layer : update.layers)
      for (double& x : layer) x = s.gaussian();
    const double base = local_kl_surrogate(update, grads);
    Gradients scaled = update;
    scaled.scale(3.0);
    CHECK(local_kl_surrogate(scaled, grads) == doctest::Approx(9.0 * base).epsilon(1e-8));
  }

  TEST_CASE("PROMA mechanism: carried component contributes zero surrogate") {
    // After an exact-projection accumulation with the clamp off, the
    // component carried over from before is orthogonal to every sequence
    // gradient of the current microbatch, so its local KL surrogate vanishes.
    const PolicyParams params = PolicyParams::random_init(tiny_cfg(), 0.4, 26);
    AccumulatorOptions opt;
    opt.clamp_fraction = std::numeric_limits<double>::infinity();
    opt.projection_group_size = 0;
    AccumulatorState state = AccumulatorState::make(params, Strategy::kPromaExact, opt);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      const std::size_t d = params.layer_size(l);
      const DenseVector v = oracle::random_gaussian_vector(d, rng::derive(27, l));
      for (std::size_t i = 0; i < d; ++i) state.grad.layers[l][i] = v[i];
    }

    const int k = 4;
    MicrobatchGradients mcb;
    mcb.k = k;
    mcb.policy_grad = Gradients::zeros_like(params);
    mcb.seq_grads.resize(PolicyParams::kLayerCount);
    rng::Stream s(28);
    for (int l = 0; l < PolicyParams::kLayerCount; ++l) {
      mcb.seq_grads[l] =
          oracle::random_gaussian_matrix(params.layer_size(l), k, rng::derive(29, l));
      for (double& x : mcb.policy_grad.layers[l]) x = 0.1 * s.gaussian();
    }
    accumulate_proma(state, mcb, true);

    Gradients carried = state.grad;
    carried.add_scaled(mcb.policy_grad, -1.0);
    CHECK(local_kl_surrogate(carried, mcb.seq_grads) <= 1e-8);
  }
}

TEST_SUITE("validation_reward") {
  TEST_CASE("zero params guess at the uniform baseline") {
    TaskConfig task;
    task.n_digits = 3;
    task.vocab = 16;
    const ModelConfig cfg{16, 4, 6};
    const PolicyParams params(cfg);
    const auto instances = make_instances(task, 1000, 31);
    const double r = validation_reward(params, instances, 1, 0);
    // greedy decode of the all-zero model picks token 0 at every prompt, so
    // the hit rate is the frequency of target 0: 0.1 +- binomial 3 sigma
    const double sigma = std::sqrt(0.1 * 0.9 / 1000.0);
    CHECK(std::fabs(r - 0.1) <= 3.0 * sigma);
  }

  TEST_CASE("an oracle policy scores 1.0") {
    // memorize single-digit sums: prompt (d) -> answer d; embed row d has a
    // giant logit on token d via a handcrafted output head
    TaskConfig task;
    task.n_digits = 1;
    task.vocab = 12;
    ModelConfig cfg{12, 12, 12};
    PolicyParams params(cfg);
    // hidden: identity-ish passthrough of the pooled prompt embedding
    for (int d = 0; d < 12; ++d) params.embed(d, d % cfg.d_emb) = 3.0;
    for (int i = 0; i < cfg.d_emb; ++i) params.hidden_w(i, i) = 2.0;
    for (int j = 0; j < cfg.d_hid; ++j) params.out_w(j, j) = 50.0;
    const auto instances = make_instances(task, 50, 32);
    CHECK(validation_reward(params, instances, 1, 0) == 1.0);
  }

  TEST_CASE("deterministic across calls") {
    const PolicyParams params = PolicyParams::random_init(tiny_cfg(), 0.7, 33);
    TaskConfig task;
    task.n_digits = 2;
    task.vocab = 12;
    const auto instances = make_instances(task, 64, 34);
    CHECK(validation_reward(params, instances, 1, 1) ==
          validation_reward(params, instances, 1, 2));
  }
}

TEST_SUITE("metrics csv") {
  TEST_CASE("write/read round trip preserves every field") {
    MetricsRecord r;
    r.step = 7;
    r.train_reward = 0.375;
    r.val_reward = 0.25;
    r.entropy = 2.0794415416798357;
    r.kl_initial = 1e-9;
    r.kl_lagged = 0.001953125;
    r.local_kl_surrogate = 3.5e-7;
    r.grad_norm = 12.5;
    r.subtracted_norm = 0.0625;
    r.clamp_hits = 3;

    const std::string path = "test_metrics_tmp.csv";
    {
      std::ofstream out(path);
      out << metrics_csv_header() << "\n" << metrics_csv_row(r) << "\n";
    }
    const MetricsTable table = read_metrics_csv(path);
    REQUIRE(table.rows.size() == 1);
    const MetricsRecord& b = table.rows[0];
    CHECK(b.step == r.step);
    CHECK(b.train_reward == r.train_reward);
    CHECK(b.val_reward == r.val_reward);
    CHECK(b.entropy == r.entropy);
    CHECK(b.kl_initial == r.kl_initial);
    CHECK(b.kl_lagged == r.kl_lagged);
    CHECK(b.local_kl_surrogate == r.local_kl_surrogate);
    CHECK(b.grad_norm == r.grad_norm);
    CHECK(b.subtracted_norm == r.subtracted_norm);
    CHECK(b.clamp_hits == r.clamp_hits);
    std::filesystem::remove(path);
  }

  TEST_CASE("bad header is rejected") {
    const std::string path = "test_metrics_bad.csv";
    {
      std::ofstream out(path);
      out << "step,reward\n1,0.5\n";
    }
    CHECK_THROWS(read_metrics_csv(path));
    std::filesystem::remove(path);
  }
}
