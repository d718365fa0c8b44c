#include "capgen/beam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace capgen {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool better(double sa, const std::vector<int>& ia, double sb, const std::vector<int>& ib) {
  if (sa != sb) return sa > sb;
  return ia < ib;  // deterministic lexicographic tie-break
}

void mask_specials(std::vector<double>& lp, const DecodeConfig& cfg) {
  if (cfg.pad_id >= 0 && static_cast<std::size_t>(cfg.pad_id) < lp.size())
    lp[static_cast<std::size_t>(cfg.pad_id)] = kNegInf;
  if (cfg.bos_id >= 0 && static_cast<std::size_t>(cfg.bos_id) < lp.size())
    lp[static_cast<std::size_t>(cfg.bos_id)] = kNegInf;
}

}  // namespace

void block_repeat_ngrams(const std::vector<int>& prefix, std::size_t n,
                         std::vector<double>& logprobs) {
  if (n == 0) throw ContractError("no_repeat_ngram size must be >= 1");
  std::size_t len = prefix.size();
  if (len + 1 < n) return;  // prefix shorter than n-1 completed tokens
  // Tail of n-1 tokens; any historical n-gram starting with it bans its
  // final token.
  std::size_t tail = n - 1;
  for (std::size_t i = 0; i + n <= len; ++i) {
    bool match = true;
    for (std::size_t j = 0; j < tail; ++j) {
      if (prefix[i + j] != prefix[len - tail + j]) {
        match = false;
        break;
      }
    }
    if (match) {
      int banned = prefix[i + tail];
      if (banned >= 0 && static_cast<std::size_t>(banned) < logprobs.size())
        logprobs[static_cast<std::size_t>(banned)] = kNegInf;
    }
  }
}

double final_score(const Hypothesis& h, double lp) {
  if (h.length() < 1) throw ContractError("final_score: empty hypothesis");
  return h.logprob / std::pow(static_cast<double>(h.length()), lp);
}

BeamResult beam_search(const StepFn& step, const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<Hypothesis> live{Hypothesis{{cfg.bos_id}, 0.0, false}};
  std::vector<Hypothesis> finished;

  auto keep_best_finished = [&]() {
    std::sort(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
      return better(final_score(a, cfg.length_penalty), a.ids, final_score(b, cfg.length_penalty),
                    b.ids);
    });
    if (finished.size() > cfg.beam_size) finished.resize(cfg.beam_size);
  };

  while (!live.empty()) {
    struct Cand {
      std::vector<int> ids;
      double logprob;
    };
    std::vector<Cand> cands;
    for (const Hypothesis& h : live) {
      std::vector<double> lp = step(h.ids);
      mask_specials(lp, cfg);
      block_repeat_ngrams(h.ids, cfg.no_repeat_ngram, lp);
      for (std::size_t v = 0; v < lp.size(); ++v) {
        if (lp[v] == kNegInf) continue;
        Cand c{h.ids, h.logprob + lp[v]};
        c.ids.push_back(static_cast<int>(v));
        cands.push_back(std::move(c));
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return better(a.logprob, a.ids, b.logprob, b.ids);
    });

    // Shrinking-beam rule: only the top beam_size candidates survive a step;
    // ended ones retire to the finished pool. beam_size=1 is exactly greedy.
    std::vector<Hypothesis> next;
    std::size_t taken = 0;
    for (Cand& c : cands) {
      if (taken == cfg.beam_size) break;
      bool ended = c.ids.back() == cfg.eos_id || c.ids.size() - 1 >= cfg.max_length;
      if (ended) {
        finished.push_back(Hypothesis{std::move(c.ids), c.logprob, true});
      } else {
        next.push_back(Hypothesis{std::move(c.ids), c.logprob, false});
      }
      ++taken;
    }
    keep_best_finished();
    live = std::move(next);

    // Admissible stop: logprobs never increase and length^lp >= 1 is
    // maximized at max_length, so a live hypothesis can never beat
    // logprob / max_length^lp.
    if (!finished.empty() && !live.empty()) {
      double best_fin = final_score(finished.front(), cfg.length_penalty);
      double denom = std::pow(static_cast<double>(cfg.max_length), cfg.length_penalty);
      double best_live_bound = kNegInf;
      for (const Hypothesis& h : live)
        best_live_bound = std::max(best_live_bound, h.logprob / denom);
      if (best_fin >= best_live_bound) break;
    }
  }

  if (finished.empty()) throw NumericError("beam_search produced no finished hypothesis");
  return BeamResult{finished.front(), finished};
}

Hypothesis exhaustive_decode(const StepFn& step, std::size_t vocab, const DecodeConfig& cfg) {
  cfg.validate();
  double space = 0.0, layer = 1.0;
  for (std::size_t l = 0; l < cfg.max_length; ++l) {
    layer *= static_cast<double>(vocab);
    space += layer;
    if (space > 1e6) {
      throw ContractError("exhaustive_decode: state space exceeds 1e6 sequences (V=" +
                          std::to_string(vocab) + ", T=" + std::to_string(cfg.max_length) + ")");
    }
  }

  Hypothesis best;
  double best_score = kNegInf;
  bool found = false;

  std::function<void(std::vector<int>&, double)> dfs = [&](std::vector<int>& prefix,
                                                           double logprob) {
    std::vector<double> lp = step(prefix);
    mask_specials(lp, cfg);
    block_repeat_ngrams(prefix, cfg.no_repeat_ngram, lp);
    for (std::size_t v = 0; v < lp.size(); ++v) {
      if (lp[v] == kNegInf) continue;
      prefix.push_back(static_cast<int>(v));
      double cum = logprob + lp[v];
      bool ended = static_cast<int>(v) == cfg.eos_id || prefix.size() - 1 >= cfg.max_length;
      if (ended) {
        Hypothesis h{prefix, cum, true};
        double s = final_score(h, cfg.length_penalty);
        if (!found || better(s, h.ids, best_score, best.ids)) {
          best = std::move(h);
          best_score = s;
          found = true;
        }
      } else {
        dfs(prefix, cum);
      }
      prefix.pop_back();
    }
  };

  std::vector<int> prefix{cfg.bos_id};
  dfs(prefix, 0.0);
  if (!found) throw NumericError("exhaustive_decode found no finished sequence");
  return best;
}

}  // namespace capgen
