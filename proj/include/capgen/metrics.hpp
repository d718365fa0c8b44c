#pragma once

#include <map>
#include <string>
#include <vector>

#include "capgen/errors.hpp"

namespace capgen {

// One documented normalization everywhere: lowercase, punctuation to
// whitespace, collapse runs of whitespace, split on spaces.
std::vector<std::string> normalize_caption(const std::string& text);

struct EvalPair {
  std::vector<std::string> hyp;
  std::vector<std::string> ref;
  std::string modality = "OTHER";
};

EvalPair make_eval_pair(const std::string& hyp_text, const std::string& ref_text,
                        const std::string& modality = "OTHER");

// Canonical modality bucket: CT, MRI, XRAY, or OTHER (with a warning for
// unknown tags when `warnings` is given).
std::string canonical_modality(const std::string& tag, std::vector<std::string>* warnings = nullptr);

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Corpus BLEU: clipped n-gram precisions (add-1 smoothing on n >= 2),
// geometric mean, brevity penalty.
double bleu(const std::vector<EvalPair>& pairs, std::size_t max_n = 4);

// Mean per-pair LCS F1 (beta = 1).
double rouge_l(const std::vector<EvalPair>& pairs);

// CIDEr-D: per-n tf-idf cosine with count clipping, Gaussian length penalty
// (sigma = 6), x10 scale, averaged over n = 1..4. IDF from the reference
// corpus; a single-document corpus degenerates to idf 0 and is flagged.
double cider(const std::vector<EvalPair>& pairs, std::vector<std::string>* warnings = nullptr);

// Unigram-exact METEOR: F_mean = 10PR/(R+9P), fragmentation penalty
// 0.5*(chunks/matches)^3. Optional token canonicalization table stands in
// for synonym matching.
double meteor_lite(const std::vector<EvalPair>& pairs,
                   const std::map<std::string, std::string>* synonyms = nullptr);

using EmbeddingDict = std::map<std::string, std::vector<double>>;

// Greedy cosine matching over static token embeddings; OOV tokens map to the
// zero vector and are flagged.
double embed_score(const std::vector<EvalPair>& pairs, const EmbeddingDict& dict,
                   std::vector<std::string>* warnings = nullptr);

struct StratumReport {
  std::string modality;
  std::size_t count = 0;
  double bleu = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  double meteor = 0.0;
};

// Recomputes the corpus metrics per modality bucket; empty buckets are
// omitted. Buckets are disjoint and union to the full corpus.
std::vector<StratumReport> stratify(const std::vector<EvalPair>& pairs,
                                    std::vector<std::string>* warnings = nullptr);

}  // namespace capgen
