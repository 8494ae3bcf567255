#include <gtest/gtest.h>

#include "toxctx/context.h"
#include "toxctx/error.h"
#include "toxctx/tokenizer.h"
#include "toxctx/vocab.h"

namespace toxctx {
namespace {

TEST(WordTokenizer, LowercasesAndSplitsPunctuation) {
  const WordTokenizer tok;
  EXPECT_EQ(tok.Split("GG, wp!  Ez"),
            (std::vector<std::string>{"gg", ",", "wp", "!", "ez"}));
  EXPECT_EQ(tok.CountTokens(""), 0u);
  EXPECT_EQ(tok.ReservedTokens(), 1u);
  EXPECT_EQ(tok.KeepLastTokens("a b c d", 2), "c d");
  EXPECT_EQ(tok.KeepLastTokens("a b", 5), "a b");
}

TEST(Vocabulary, BaseSpecialsComeFirst) {
  const Vocabulary v;
  EXPECT_EQ(v.Id("[PAD]"), Vocabulary::kPad);
  EXPECT_EQ(v.Id("[MASK]"), Vocabulary::kMask);
  EXPECT_EQ(v.Id("."), Vocabulary::kPeriod);
  EXPECT_EQ(v.Id("never-seen"), Vocabulary::kUnk);
}

TEST(Vocabulary, BuildRespectsCountAndSize) {
  const std::vector<std::string> texts = {"a a a b b c", "a b d"};
  const Vocabulary all = Vocabulary::Build(texts, WordTokenizer(), 1, 0);
  EXPECT_TRUE(all.Contains("d"));
  const Vocabulary frequent = Vocabulary::Build(texts, WordTokenizer(), 2, 0);
  EXPECT_TRUE(frequent.Contains("b"));
  EXPECT_FALSE(frequent.Contains("c"));
  // The cap counts the reserved entries too.
  const Vocabulary capped = Vocabulary::Build(texts, WordTokenizer(), 1, 7);
  EXPECT_EQ(capped.size(), 7u);
  EXPECT_TRUE(capped.Contains("a"));
  EXPECT_FALSE(capped.Contains("b"));
  // Deterministic regardless of how often it is built.
  EXPECT_EQ(Vocabulary::Build(texts, WordTokenizer()).tokens(),
            Vocabulary::Build(texts, WordTokenizer()).tokens());
}

TEST(RegisterSpecialTokens, AppendsContiguousIds) {
  TokenRegistry base;
  base.base_vocab_size = 50265;
  const TokenRegistry out =
      RegisterSpecialTokens(base, SpecialTokenVocabulary(2, 5));
  ASSERT_EQ(out.added_tokens.size(), 8u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(out.added_tokens[i].second, 50265 + static_cast<int>(i));
    EXPECT_TRUE(out.IsProtected(50265 + static_cast<int>(i)));
  }
  EXPECT_EQ(out.vocab_size(), 50273u);
  EXPECT_EQ(out.FindAdded("[MSG]"), 50265);
  EXPECT_EQ(out.FindAdded("[PLAYER4]"), 50272);
}

TEST(RegisterSpecialTokens, EmptyListLeavesRegistryUnchanged) {
  TokenRegistry base;
  base.base_vocab_size = 10;
  base.protected_ids = {0, 1};
  const TokenRegistry out = RegisterSpecialTokens(base, {});
  EXPECT_EQ(out.vocab_size(), 10u);
  EXPECT_EQ(out.protected_ids, base.protected_ids);
  EXPECT_TRUE(out.added_tokens.empty());
}

TEST(RegisterSpecialTokens, DuplicateIsRegistrationError) {
  TokenRegistry base;
  base.base_vocab_size = 10;
  const TokenRegistry once = RegisterSpecialTokens(base, {"[MSG]"});
  try {
    RegisterSpecialTokens(once, {"[MSG]"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kRegistration);
  }
  EXPECT_THROW(RegisterSpecialTokens(base, {"[X]", "[X]"}), Error);
}

}  // namespace
}  // namespace toxctx
