#include "capgen/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace capgen {

std::vector<std::string> normalize_caption(const std::string& text) {
  std::string flat;
  flat.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      flat.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flat.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < flat.size()) {
    while (i < flat.size() && flat[i] == ' ') ++i;
    std::size_t j = i;
    while (j < flat.size() && flat[j] != ' ') ++j;
    if (j > i) tokens.push_back(flat.substr(i, j - i));
    i = j;
  }
  return tokens;
}

EvalPair make_eval_pair(const std::string& hyp_text, const std::string& ref_text,
                        const std::string& modality) {
  EvalPair p;
  p.hyp = normalize_caption(hyp_text);
  p.ref = normalize_caption(ref_text);
  p.modality = canonical_modality(modality);
  return p;
}

std::string canonical_modality(const std::string& tag, std::vector<std::string>* warnings) {
  std::string up;
  for (unsigned char c : tag) up.push_back(static_cast<char>(std::toupper(c)));
  if (up == "CT" || up == "MRI" || up == "XRAY" || up == "OTHER") return up;
  if (up == "X-RAY") return "XRAY";
  if (warnings) warnings->push_back("unknown modality '" + tag + "' mapped to OTHER");
  return "OTHER";
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[std::vector<std::string>(tokens.begin() + static_cast<long>(i),
                                    tokens.begin() + static_cast<long>(i + n))]++;
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<EvalPair>& pairs, std::size_t max_n) {
  if (pairs.empty()) throw DataError("bleu: empty corpus");
  if (max_n == 0) throw ContractError("bleu: max_n must be >= 1");

  double log_prec_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::size_t matched = 0, total = 0;
    for (const EvalPair& p : pairs) {
      NgramCounts hyp = ngram_counts(p.hyp, n);
      NgramCounts ref = ngram_counts(p.ref, n);
      for (const auto& [gram, count] : hyp) {
        auto it = ref.find(gram);
        std::size_t clipped = it == ref.end() ? 0 : std::min(count, it->second);
        matched += clipped;
        total += count;
      }
    }
    double num = static_cast<double>(matched);
    double den = static_cast<double>(total);
    if (n >= 2) {  // add-1 smoothing keeps short toy captions nonzero
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0 || den == 0.0) return 0.0;
    log_prec_sum += std::log(num / den);
  }

  std::size_t hyp_len = 0, ref_len = 0;
  for (const EvalPair& p : pairs) {
    hyp_len += p.hyp.size();
    ref_len += p.ref.size();
  }
  if (hyp_len == 0) return 0.0;
  double bp = hyp_len >= ref_len
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_prec_sum / static_cast<double>(max_n));
}

double rouge_l(const std::vector<EvalPair>& pairs) {
  if (pairs.empty()) throw DataError("rouge_l: empty corpus");
  double total = 0.0;
  for (const EvalPair& p : pairs) {
    if (p.hyp.empty() || p.ref.empty()) continue;  // scores 0
    double l = static_cast<double>(lcs_length(p.hyp, p.ref));
    if (l == 0.0) continue;
    double prec = l / static_cast<double>(p.hyp.size());
    double rec = l / static_cast<double>(p.ref.size());
    total += 2.0 * prec * rec / (prec + rec);
  }
  return total / static_cast<double>(pairs.size());
}

double cider(const std::vector<EvalPair>& pairs, std::vector<std::string>* warnings) {
  if (pairs.size() < 2) {
    if (pairs.empty()) throw DataError("cider: empty corpus");
    if (warnings) warnings->push_back("cider: single-document corpus, idf degenerates to 0");
  }
  constexpr double kSigma = 6.0;
  constexpr std::size_t kMaxN = 4;
  double corpus = static_cast<double>(pairs.size());

  double total = 0.0;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    // Document frequencies over the reference corpus.
    std::map<std::vector<std::string>, std::size_t> df;
    for (const EvalPair& p : pairs)
      for (const auto& [gram, count] : ngram_counts(p.ref, n)) df[gram]++;

    double level = 0.0;
    for (const EvalPair& p : pairs) {
      NgramCounts hyp = ngram_counts(p.hyp, n);
      NgramCounts ref = ngram_counts(p.ref, n);
      double dot = 0.0, nh = 0.0, nr = 0.0;
      for (const auto& [gram, count] : hyp) {
        auto d = df.find(gram);
        double idf = std::log(corpus / static_cast<double>(d == df.end() ? corpus : d->second));
        if (d == df.end()) idf = std::log(corpus);  // unseen in any reference
        double gh = static_cast<double>(count) * idf;
        nh += gh * gh;
        auto r = ref.find(gram);
        if (r != ref.end()) {
          double clipped = static_cast<double>(std::min(count, r->second)) * idf;
          dot += clipped * static_cast<double>(r->second) * idf;
        }
      }
      for (const auto& [gram, count] : ref) {
        double idf = std::log(corpus / static_cast<double>(df.at(gram)));
        nr += count * idf * (count * idf);
      }
      if (nh > 0.0 && nr > 0.0) {
        double dl = static_cast<double>(p.hyp.size()) - static_cast<double>(p.ref.size());
        double penalty = std::exp(-dl * dl / (2.0 * kSigma * kSigma));
        level += penalty * dot / (std::sqrt(nh) * std::sqrt(nr));
      }
    }
    total += 10.0 * level / corpus;
  }
  return total / static_cast<double>(kMaxN);
}

double meteor_lite(const std::vector<EvalPair>& pairs,
                   const std::map<std::string, std::string>* synonyms) {
  if (pairs.empty()) throw DataError("meteor: empty corpus");
  auto canon = [&](const std::string& t) {
    if (!synonyms) return t;
    auto it = synonyms->find(t);
    return it == synonyms->end() ? t : it->second;
  };

  double total = 0.0;
  for (const EvalPair& p : pairs) {
    if (p.hyp.empty() || p.ref.empty()) continue;
    // Greedy alignment: each hypothesis token takes the leftmost unmatched
    // identical reference token.
    std::vector<bool> used(p.ref.size(), false);
    std::vector<long> match_pos(p.hyp.size(), -1);
    std::size_t m = 0;
    for (std::size_t i = 0; i < p.hyp.size(); ++i) {
      for (std::size_t j = 0; j < p.ref.size(); ++j) {
        if (!used[j] && canon(p.hyp[i]) == canon(p.ref[j])) {
          used[j] = true;
          match_pos[i] = static_cast<long>(j);
          ++m;
          break;
        }
      }
    }
    if (m == 0) continue;
    std::size_t chunks = 0;
    long prev = -2;
    for (std::size_t i = 0; i < p.hyp.size(); ++i) {
      if (match_pos[i] < 0) {
        prev = -2;
        continue;
      }
      if (match_pos[i] != prev + 1) ++chunks;
      prev = match_pos[i];
    }
    double prec = static_cast<double>(m) / static_cast<double>(p.hyp.size());
    double rec = static_cast<double>(m) / static_cast<double>(p.ref.size());
    double fmean = 10.0 * prec * rec / (rec + 9.0 * prec);
    double frag = static_cast<double>(chunks) / static_cast<double>(m);
    total += fmean * (1.0 - 0.5 * frag * frag * frag);
  }
  return total / static_cast<double>(pairs.size());
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ShapeError("embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

double embed_score(const std::vector<EvalPair>& pairs, const EmbeddingDict& dict,
                   std::vector<std::string>* warnings) {
  if (pairs.empty()) throw DataError("embed_score: empty corpus");
  if (dict.empty()) throw DataError("embed_score: empty embedding table");
  std::size_t dim = dict.begin()->second.size();
  std::vector<double> zero(dim, 0.0);
  auto lookup = [&](const std::string& t) -> const std::vector<double>& {
    auto it = dict.find(t);
    if (it != dict.end()) return it->second;
    if (warnings) warnings->push_back("embed_score: OOV token '" + t + "'");
    return zero;
  };

  double total = 0.0;
  for (const EvalPair& p : pairs) {
    if (p.hyp.empty() || p.ref.empty()) {
      if (warnings) warnings->push_back("embed_score: empty side, pair scored 0");
      continue;
    }
    auto side = [&](const std::vector<std::string>& from, const std::vector<std::string>& to) {
      double s = 0.0;
      for (const std::string& ft : from) {
        double best = -1.0;
        for (const std::string& tt : to) best = std::max(best, cosine(lookup(ft), lookup(tt)));
        s += best;
      }
      return s / static_cast<double>(from.size());
    };
    double prec = side(p.hyp, p.ref);
    double rec = side(p.ref, p.hyp);
    if (prec + rec > 0.0) total += 2.0 * prec * rec / (prec + rec);
  }
  return total / static_cast<double>(pairs.size());
}

std::vector<StratumReport> stratify(const std::vector<EvalPair>& pairs,
                                    std::vector<std::string>* warnings) {
  std::map<std::string, std::vector<EvalPair>> buckets;
  for (const EvalPair& p : pairs) buckets[canonical_modality(p.modality, warnings)].push_back(p);

  std::vector<StratumReport> out;
  for (const char* name : {"CT", "MRI", "XRAY", "OTHER"}) {
    auto it = buckets.find(name);
    if (it == buckets.end() || it->second.empty()) continue;
    StratumReport r;
    r.modality = name;
    r.count = it->second.size();
    r.bleu = bleu(it->second);
    r.rouge_l = rouge_l(it->second);
    r.cider = cider(it->second, warnings);
    r.meteor = meteor_lite(it->second);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace capgen
