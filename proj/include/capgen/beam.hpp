#pragma once

#include <functional>
#include <vector>

#include "capgen/errors.hpp"

namespace capgen {

struct DecodeConfig {
  std::size_t beam_size = 4;
  double length_penalty = 1.1;
  std::size_t no_repeat_ngram = 3;
  std::size_t max_length = 128;
  int bos_id = 1;
  int eos_id = 2;
  int pad_id = 0;

  void validate() const {
    if (beam_size < 1) throw ConfigError("beam_size must be >= 1");
    if (max_length < 2) throw ConfigError("max_length must be >= 2");
  }
};

struct Hypothesis {
  std::vector<int> ids;  // starts with BOS
  double logprob = 0.0;
  bool finished = false;

  // Generated length: excludes BOS, includes EOS.
  std::size_t length() const { return ids.size() - 1; }
};

// Log-probabilities over the vocabulary for the next token given a prefix.
using StepFn = std::function<std::vector<double>(const std::vector<int>& prefix)>;

// Sets -inf on every token that would complete an n-gram already present in
// prefix; no-op while the prefix is shorter than n-1.
void block_repeat_ngrams(const std::vector<int>& prefix, std::size_t n,
                         std::vector<double>& logprobs);

// Length-penalized score: logprob / length^lp.
double final_score(const Hypothesis& h, double lp);

struct BeamResult {
  Hypothesis best;
  std::vector<Hypothesis> finished;  // score-sorted, best first
};

BeamResult beam_search(const StepFn& step, const DecodeConfig& cfg);

// Brute-force argmax over every reachable sequence; guard refuses state
// spaces above 1e6 sequences.
Hypothesis exhaustive_decode(const StepFn& step, std::size_t vocab, const DecodeConfig& cfg);

}  // namespace capgen
