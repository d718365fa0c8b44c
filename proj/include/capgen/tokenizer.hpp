#pragma once

#include <map>
#include <string>
#include <vector>

#include "capgen/errors.hpp"

namespace capgen {

// Subword vocabulary. File format: one token per line, the four specials
// first in this exact order; continuation pieces carry a "##" prefix.
struct TokenizerVocab {
  std::vector<std::string> tokens;
  std::map<std::string, int> index;

  static constexpr int kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  static const char* pad_token() { return "[PAD]"; }
  static const char* bos_token() { return "[BOS]"; }
  static const char* eos_token() { return "[EOS]"; }
  static const char* unk_token() { return "[UNK]"; }

  std::size_t size() const { return tokens.size(); }

  static TokenizerVocab from_tokens(std::vector<std::string> tokens);
  static TokenizerVocab load(const std::string& path);
  void save(const std::string& path) const;
};

// Greedy longest-match segmentation over normalized words; a word with no
// matching prefix becomes a single [UNK]. Output is exactly max_len ids:
// BOS, pieces..., EOS, PAD...; overlong inputs are truncated so the final
// token is still EOS. true_length (when given) counts ids before padding.
std::vector<int> tokenize(const std::string& text, const TokenizerVocab& vocab,
                          std::size_t max_len = 128, std::size_t* true_length = nullptr);

// Inverse for fully-covered text: drops specials, rejoins "##" pieces.
std::string detokenize(const std::vector<int>& ids, const TokenizerVocab& vocab);

}  // namespace capgen
