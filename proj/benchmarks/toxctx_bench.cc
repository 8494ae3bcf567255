#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "toxctx/context.h"
#include "toxctx/masking.h"
#include "toxctx/metrics.h"
#include "toxctx/rng.h"
#include "toxctx/synthetic.h"
#include "toxctx/tiny_encoder.h"
#include "toxctx/training.h"

namespace toxctx {
namespace {

std::vector<Match> Corpus(std::size_t n) {
  SyntheticConfig c;
  c.n_matches = n;
  return GenerateSyntheticCorpus(c, 1);
}

Vocabulary VocabFor(const std::vector<Match>& corpus) {
  std::vector<std::string> texts;
  for (const Match& m : corpus) {
    for (const ChatMessage& msg : m.messages) texts.push_back(msg.text);
  }
  return Vocabulary::Build(texts, WordTokenizer());
}

void BM_Assemble(benchmark::State& state) {
  const std::vector<Match> corpus = Corpus(50);
  const WordTokenizer tok;
  AssemblyOptions o;
  o.level = static_cast<ContextLevel>(state.range(0));
  o.token_budget = 128;
  std::size_t messages = 0;
  for (auto _ : state) {
    for (const Match& m : corpus) {
      for (const ChatMessage& msg : m.messages) {
        benchmark::DoNotOptimize(Assemble(m, msg.index, o, tok));
        ++messages;
      }
    }
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(messages));
}
BENCHMARK(BM_Assemble)->Arg(0)->Arg(1)->Arg(2);

void BM_MaskSequence(benchmark::State& state) {
  TokenRegistry reg;
  reg.base_vocab_size = 2000;
  reg.protected_ids = {0, 1, 2, 3, 4};
  reg.mask_id = 4;
  Rng rng(2);
  std::vector<int> ids(static_cast<std::size_t>(state.range(0)));
  for (int& id : ids) id = 5 + static_cast<int>(rng.UniformInt(1995));
  MaskingConfig c;
  for (auto _ : state) {
    ++c.seed;
    benchmark::DoNotOptimize(MaskSequence(ids, reg, c));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MaskSequence)->Arg(128)->Arg(512);

std::vector<int> Input(const TinyEncoder& model, std::size_t length) {
  std::vector<int> ids = {Vocabulary::kCls};
  for (std::size_t i = 1; i < length; ++i) {
    ids.push_back(Vocabulary::kNumBaseSpecials + 1 +
                  static_cast<int>(i % (model.vocab_size() - 7)));
  }
  return ids;
}

void BM_EncoderForward(benchmark::State& state) {
  const auto corpus = Corpus(20);
  TinyEncoder model({}, VocabFor(corpus), 3);
  const std::vector<int> ids =
      Input(model, static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(model.ClassifyLogits(ids));
}
BENCHMARK(BM_EncoderForward)->Arg(16)->Arg(64)->Arg(128);

void BM_EncoderClassifyStep(benchmark::State& state) {
  const auto corpus = Corpus(20);
  TinyEncoder model({}, VocabFor(corpus), 4);
  model.ResetOptimizer({});
  const std::vector<std::vector<int>> batch(16, Input(model, 64));
  std::vector<int> labels(16, 0);
  labels[0] = 1;
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        model.ClassifyStep(batch, labels, {1.0, 8.0}, 1e-5));
  }
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_EncoderClassifyStep)->Unit(benchmark::kMillisecond);

void BM_RocAuc(benchmark::State& state) {
  Rng rng(5);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = rng.Uniform();
    labels[i] = rng.Bernoulli(0.1) ? 1 : 0;
  }
  labels[0] = 1;
  labels[1] = 0;
  for (auto _ : state) benchmark::DoNotOptimize(RocAuc(scores, labels));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(100000);

}  // namespace
}  // namespace toxctx

BENCHMARK_MAIN();
