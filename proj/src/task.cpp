#include "proma/task.hpp"

#include <cmath>
#include <stdexcept>

#include "proma/rng.hpp"

namespace proma {

std::vector<TaskInstance> make_instances(const TaskConfig& cfg, int count,
                                         std::uint64_t rng_seed) {
  if (cfg.n_digits < 1) throw std::invalid_argument("make_instances: n_digits must be >= 1");
  if (cfg.answer_len < 1) throw std::invalid_argument("make_instances: answer_len must be >= 1");
  if (cfg.vocab < 10 || cfg.vocab < cfg.vocab_answer)
    throw std::invalid_argument("make_instances: vocab must cover digits and answer tokens");

  rng::Stream stream(rng_seed);
  std::vector<TaskInstance> out;
  out.reserve(count);
  long long modulus = 1;
  for (int i = 0; i < cfg.answer_len; ++i) modulus *= cfg.vocab_answer;

  for (int n = 0; n < count; ++n) {
    TaskInstance inst;
    long long sum = 0;
    inst.prompt_tokens.reserve(cfg.n_digits);
    for (int i = 0; i < cfg.n_digits; ++i) {
      const int digit = static_cast<int>(stream.next_u64() % 10);
      inst.prompt_tokens.push_back(digit);
      sum += digit;
    }
    long long value = sum % modulus;
    inst.target_tokens.assign(cfg.answer_len, 0);
    for (int i = cfg.answer_len - 1; i >= 0; --i) {
      inst.target_tokens[i] = static_cast<int>(value % cfg.vocab_answer);
      value /= cfg.vocab_answer;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

double reward(const SequenceSample& sample, const TaskInstance& instance) {
  if (sample.response_tokens.size() < instance.target_tokens.size()) return 0.0;
  for (std::size_t i = 0; i < instance.target_tokens.size(); ++i)
    if (sample.response_tokens[i] != instance.target_tokens[i]) return 0.0;
  return 1.0;
}

std::vector<double> group_advantages(const std::vector<double>& rewards, double eps,
                                     AdvantageNorm norm) {
  if (rewards.empty()) throw std::invalid_argument("group_advantages: empty group");
  const double g = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= g;

  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = rewards[i] - mean;
  if (norm == AdvantageNorm::kStd) {
    double var = 0.0;
    for (double a : adv) var += a * a;
    const double std_pop = std::sqrt(var / g);
    const double inv = 1.0 / (std_pop + eps);
    for (double& a : adv) a *= inv;
  }
  return adv;
}

}  // namespace proma
