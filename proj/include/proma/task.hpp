#pragma once

#include <cstdint>
#include <vector>

#include "proma/policy.hpp"

namespace proma {

// Synthetic verifiable task: the prompt is n_digits random digits (tokens
// 0..9) and the answer is the base-vocab_answer digits of their sum, most
// significant first (for answer_len = 1 this is sum mod vocab_answer).
struct TaskConfig {
  int n_digits = 4;
  int vocab = 16;         // model vocabulary; must be >= 10 and >= vocab_answer
  int vocab_answer = 10;  // answer tokens live in [0, vocab_answer)
  int answer_len = 1;     // fixed response length
};

struct TaskInstance {
  std::vector<int> prompt_tokens;
  std::vector<int> target_tokens;  // length answer_len
};

enum class AdvantageNorm { kStd, kNone };

struct RewardedGroup {
  TaskInstance instance;
  std::vector<SequenceSample> samples;
  std::vector<double> rewards;
  std::vector<double> advantages;
};

std::vector<TaskInstance> make_instances(const TaskConfig& cfg, int count, std::uint64_t rng_seed);

// 1.0 iff the answer positions decode to the target, else 0.0. Only the first
// answer_len response positions matter.
double reward(const SequenceSample& sample, const TaskInstance& instance);

// Group-relative advantages: a_i = (r_i - mean) / (std_pop + eps), or just
// mean-centered when norm = kNone. Every response token of sequence i later
// receives a_i.
std::vector<double> group_advantages(const std::vector<double>& rewards, double eps = 1e-6,
                                     AdvantageNorm norm = AdvantageNorm::kStd);

}  // namespace proma
