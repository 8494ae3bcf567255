#include "toxctx/tokenizer.h"

#include <algorithm>
#include <cctype>
#include <cstring>

#include "toxctx/error.h"

namespace toxctx {

namespace {

bool IsSplitPunct(char c) {
  return c != '\0' && std::strchr(".,!?;:", c) != nullptr;
}

}  // namespace

std::vector<std::string> WordTokenizer::Split(std::string_view text) const {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (IsSplitPunct(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      current.push_back(
          static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

std::size_t WordTokenizer::CountTokens(std::string_view text) const {
  return Split(text).size();
}

std::string WordTokenizer::KeepLastTokens(std::string_view text,
                                          std::size_t n) const {
  std::vector<std::string> tokens = Split(text);
  const std::size_t start = tokens.size() > n ? tokens.size() - n : 0;
  std::string out;
  for (std::size_t i = start; i < tokens.size(); ++i) {
    if (!out.empty()) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

Vocabulary::Vocabulary()
    : Vocabulary(std::vector<std::string>{"[PAD]", "[CLS]", "[SEP]", "[UNK]",
                                          "[MASK]", "."}) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  for (auto& t : tokens) Append(t);
}

Vocabulary Vocabulary::Build(const std::vector<std::string>& texts,
                             const WordTokenizer& tokenizer,
                             std::size_t min_count, std::size_t max_size) {
  std::map<std::string, std::size_t> counts;
  for (const std::string& text : texts) {
    for (std::string& w : tokenizer.Split(text)) ++counts[std::move(w)];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     return a.second > b.second;
                   });
  Vocabulary vocab;
  for (const auto& [word, count] : ranked) {
    if (count < min_count) break;
    if (max_size > 0 && vocab.size() >= max_size) break;
    if (!vocab.Contains(word)) vocab.Append(word);
  }
  return vocab;
}

int Vocabulary::Id(std::string_view token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::Contains(std::string_view token) const {
  return index_.find(token) != index_.end();
}

int Vocabulary::Append(const std::string& token) {
  const int id = static_cast<int>(tokens_.size());
  if (!index_.emplace(token, id).second) {
    throw Error(ErrorKind::kRegistration,
                "token '" + token + "' is already in the vocabulary");
  }
  tokens_.push_back(token);
  return id;
}

}  // namespace toxctx
