#include "capgen/tokenizer.hpp"

#include <fstream>

#include "capgen/metrics.hpp"

namespace capgen {

TokenizerVocab TokenizerVocab::from_tokens(std::vector<std::string> tokens) {
  TokenizerVocab v;
  v.tokens = std::move(tokens);
  static const char* specials[] = {pad_token(), bos_token(), eos_token(), unk_token()};
  if (v.tokens.size() < 4) throw DataError("vocabulary needs the four special tokens first");
  for (int i = 0; i < 4; ++i) {
    if (v.tokens[static_cast<std::size_t>(i)] != specials[i]) {
      throw DataError("vocabulary slot " + std::to_string(i) + " must be " + specials[i] +
                      ", found '" + v.tokens[static_cast<std::size_t>(i)] + "'");
    }
  }
  for (std::size_t i = 0; i < v.tokens.size(); ++i) {
    auto [it, fresh] = v.index.emplace(v.tokens[i], static_cast<int>(i));
    if (!fresh) throw DataError("duplicate vocabulary token '" + v.tokens[i] + "'");
  }
  return v;
}

TokenizerVocab TokenizerVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary: " + path);
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) tokens.push_back(line);
  }
  return from_tokens(std::move(tokens));
}

void TokenizerVocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary: " + path);
  for (const std::string& t : tokens) out << t << "\n";
}

std::vector<int> tokenize(const std::string& text, const TokenizerVocab& vocab,
                          std::size_t max_len, std::size_t* true_length) {
  if (max_len < 2) throw ContractError("tokenize: max_len must fit BOS and EOS");
  std::vector<int> pieces;
  for (const std::string& word : normalize_caption(text)) {
    std::size_t start = 0;
    std::vector<int> word_pieces;
    bool unknown = false;
    while (start < word.size()) {
      std::size_t end = word.size();
      int found = -1;
      while (end > start) {
        std::string candidate =
            (start == 0 ? "" : "##") + word.substr(start, end - start);
        auto it = vocab.index.find(candidate);
        if (it != vocab.index.end()) {
          found = it->second;
          break;
        }
        --end;
      }
      if (found < 0) {
        unknown = true;  // unmatchable span: the whole word becomes [UNK]
        break;
      }
      word_pieces.push_back(found);
      start = end;
    }
    if (unknown) {
      pieces.push_back(TokenizerVocab::kUnk);
    } else {
      pieces.insert(pieces.end(), word_pieces.begin(), word_pieces.end());
    }
  }

  if (pieces.size() > max_len - 2) pieces.resize(max_len - 2);
  std::vector<int> ids;
  ids.reserve(max_len);
  ids.push_back(TokenizerVocab::kBos);
  ids.insert(ids.end(), pieces.begin(), pieces.end());
  ids.push_back(TokenizerVocab::kEos);
  if (true_length) *true_length = ids.size();
  ids.resize(max_len, TokenizerVocab::kPad);
  return ids;
}

std::string detokenize(const std::vector<int>& ids, const TokenizerVocab& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.tokens.size())
      throw DataError("token id " + std::to_string(id) + " outside vocabulary");
    if (id == TokenizerVocab::kPad || id == TokenizerVocab::kBos) continue;
    if (id == TokenizerVocab::kEos) break;
    const std::string& t = vocab.tokens[static_cast<std::size_t>(id)];
    if (t.size() > 2 && t[0] == '#' && t[1] == '#') {
      out += t.substr(2);
    } else {
      if (!out.empty()) out += ' ';
      out += t;
    }
  }
  return out;
}

}  // namespace capgen
