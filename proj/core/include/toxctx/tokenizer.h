#ifndef TOXCTX_TOKENIZER_H_
#define TOXCTX_TOKENIZER_H_

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace toxctx {

// What context assembly needs to know about a tokenizer: how many tokens a
// piece of text costs, how to keep only its most recent tokens, and how many
// positions the encoder reserves for its own boundary markers.
class TokenCounter {
 public:
  virtual ~TokenCounter() = default;

  virtual std::size_t CountTokens(std::string_view text) const = 0;

  // Text made of the last `n` tokens of `text`.
  virtual std::string KeepLastTokens(std::string_view text,
                                     std::size_t n) const = 0;

  virtual std::size_t ReservedTokens() const { return 0; }
};

// Lowercasing whitespace tokenizer that also splits off punctuation marks so
// that "gg." and "gg ." tokenize alike.
class WordTokenizer : public TokenCounter {
 public:
  explicit WordTokenizer(std::size_t reserved_tokens = 1)
      : reserved_(reserved_tokens) {}

  std::vector<std::string> Split(std::string_view text) const;

  std::size_t CountTokens(std::string_view text) const override;
  std::string KeepLastTokens(std::string_view text,
                             std::size_t n) const override;
  std::size_t ReservedTokens() const override { return reserved_; }

 private:
  std::size_t reserved_;
};

// Base vocabulary of the tiny encoder. Ids 0..kNumBaseSpecials-1 are the
// boundary/control tokens, then the literal ".", then corpus words ordered
// by descending frequency (ties alphabetical).
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kSep = 2;
  static constexpr int kUnk = 3;
  static constexpr int kMask = 4;
  static constexpr int kPeriod = 5;
  static constexpr int kNumBaseSpecials = 5;

  Vocabulary();
  explicit Vocabulary(std::vector<std::string> tokens);

  // Builds from raw texts with `tokenizer`. Words seen fewer than
  // `min_count` times map to [UNK]; `max_size` caps the total size
  // (0 = unlimited).
  static Vocabulary Build(const std::vector<std::string>& texts,
                          const WordTokenizer& tokenizer,
                          std::size_t min_count = 1, std::size_t max_size = 0);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(int id) const { return tokens_.at(id); }

  // [UNK] id when absent.
  int Id(std::string_view token) const;
  bool Contains(std::string_view token) const;

  // Appends a token and returns its id. Throws if it already exists.
  int Append(const std::string& token);

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace toxctx

#endif  // TOXCTX_TOKENIZER_H_
