#include "capgen/manifest.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>

#include <nlohmann/json.hpp>

#include "capgen/metrics.hpp"
#include "capgen/stats.hpp"

namespace capgen {

ManifestLoad load_manifest(const std::string& path, bool strict) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  ManifestLoad out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::string reason;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.image_path = j.at("image_path").get<std::string>();
      e.caption = j.at("caption").get<std::string>();
      e.article_id = j.at("article_id").get<std::string>();
      if (j.contains("modality")) e.modality = canonical_modality(j["modality"].get<std::string>());
      if (j.contains("split")) e.split = j["split"].get<std::string>();
      if (e.article_id.empty()) {
        reason = "empty article_id";
      } else if (e.caption.empty()) {
        reason = "empty caption";
      } else {
        out.entries.push_back(std::move(e));
        continue;
      }
    } catch (const nlohmann::json::exception& ex) {
      reason = ex.what();
    }
    std::string msg = "line " + std::to_string(lineno) + ": " + reason;
    if (strict) throw DataError("manifest " + path + ", " + msg);
    out.errors.push_back(std::move(msg));
  }
  return out;
}

namespace {

// FNV-1a over the article id mixed with the seed; stable across platforms.
double article_bucket(const std::string& article_id, std::uint64_t seed) {
  std::uint64_t h = 14695981039346656037ULL ^ seed;
  for (unsigned char c : article_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace

SplitAudit audit_splits(const std::vector<ManifestEntry>& entries) {
  std::map<std::string, std::string> seen;  // article -> split
  SplitAudit audit;
  for (const ManifestEntry& e : entries) {
    if (e.split.empty()) throw DataError("audit: entry without split (image " + e.image_path + ")");
    auto [it, fresh] = seen.emplace(e.article_id, e.split);
    if (!fresh && it->second != e.split) {
      throw DataError("split leakage: article '" + e.article_id + "' appears in both '" +
                      it->second + "' and '" + e.split + "'");
    }
    audit.split_counts[e.split]++;
  }
  audit.articles = seen.size();
  audit.leak_free = true;
  return audit;
}

SplitAudit assign_splits(std::vector<ManifestEntry>& entries, const SplitRatios& ratios,
                         std::uint64_t seed) {
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");

  // Pre-assigned splits stick; conflicting pre-assignments are leakage.
  std::map<std::string, std::string> fixed;
  for (const ManifestEntry& e : entries) {
    if (e.split.empty()) continue;
    auto [it, fresh] = fixed.emplace(e.article_id, e.split);
    if (!fresh && it->second != e.split) {
      throw DataError("split leakage: article '" + e.article_id +
                      "' pre-assigned to both '" + it->second + "' and '" + e.split + "'");
    }
  }

  for (ManifestEntry& e : entries) {
    auto it = fixed.find(e.article_id);
    if (it != fixed.end()) {
      e.split = it->second;
      continue;
    }
    double u = article_bucket(e.article_id, seed);
    e.split = u < ratios.train ? "train" : (u < ratios.train + ratios.val ? "val" : "test");
  }
  return audit_splits(entries);
}

std::string clean_caption(const std::string& text) {
  static const std::regex brackets(R"(\[[^\]]*\]|\([^)]*\))");
  static const std::regex figure(R"***((?:figure|fig)\.? *[0-9]*[a-z]?\b[.:]?)***",
                                 std::regex::icase);
  std::string s = std::regex_replace(text, brackets, " ");
  s = std::regex_replace(s, figure, " ");
  std::string out;
  bool pending_space = false;
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

CaptionStats caption_stats(const std::vector<ManifestEntry>& entries) {
  if (entries.empty()) throw DataError("caption_stats: no entries");
  std::vector<double> lengths;
  lengths.reserve(entries.size());
  for (const ManifestEntry& e : entries)
    lengths.push_back(static_cast<double>(normalize_caption(e.caption).size()));
  std::sort(lengths.begin(), lengths.end());
  CaptionStats s;
  for (double l : lengths) s.mean += l;
  s.mean /= static_cast<double>(lengths.size());
  s.median = quantile_linear(lengths, 0.5);
  s.q1 = quantile_linear(lengths, 0.25);
  s.q3 = quantile_linear(lengths, 0.75);
  return s;
}

}  // namespace capgen
