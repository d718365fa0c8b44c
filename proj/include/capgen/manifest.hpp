#pragma once

#include <map>
#include <string>
#include <vector>

#include "capgen/errors.hpp"

namespace capgen {

struct ManifestEntry {
  std::string image_path;
  std::string caption;
  std::string article_id;
  std::string modality = "OTHER";  // CT | MRI | XRAY | OTHER
  std::string split;               // empty until assigned: train | val | test
};

struct ManifestLoad {
  std::vector<ManifestEntry> entries;
  std::vector<std::string> errors;  // "line N: reason" per malformed line
};

// JSONL, one object per line with fields image_path, caption, article_id,
// modality (optional), split (optional). strict: any malformed line throws.
ManifestLoad load_manifest(const std::string& path, bool strict = false);

struct SplitRatios {
  double train = 0.8, val = 0.1, test = 0.1;
};

struct SplitAudit {
  std::map<std::string, std::size_t> split_counts;  // entries per split
  std::size_t articles = 0;
  bool leak_free = false;
};

// Buckets whole articles by hash(article_id, seed) so no article spans two
// splits; honors consistent pre-assigned splits and throws DataError naming
// the article on a cross-split conflict. Audits the result before returning.
SplitAudit assign_splits(std::vector<ManifestEntry>& entries, const SplitRatios& ratios,
                         std::uint64_t seed);

// Re-checks article-level separation; throws DataError naming the first
// offending article when one spans several splits.
SplitAudit audit_splits(const std::vector<ManifestEntry>& entries);

// Removal rules, applied in order, then lowercase and whitespace collapse:
//   1. bracketed segments  \[[^\]]*\] and \([^)]*\)
//   2. figure references   fig(ure)?\.? *[0-9]*[a-z]?
// Empty result means the entry should be dropped.
std::string clean_caption(const std::string& text);

struct CaptionStats {
  double mean = 0.0, median = 0.0, q1 = 0.0, q3 = 0.0;
};

// Word-count statistics with linear-interpolation quartiles.
CaptionStats caption_stats(const std::vector<ManifestEntry>& entries);

}  // namespace capgen
