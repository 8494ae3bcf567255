#ifndef TOXCTX_ENCODER_H_
#define TOXCTX_ENCODER_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "toxctx/context.h"
#include "toxctx/masking.h"
#include "toxctx/optimizer.h"
#include "toxctx/tokenizer.h"
#include "toxctx/vocab.h"

namespace toxctx {

using Logits = std::array<double, 2>;
using ClassWeights = std::array<double, 2>;

// The narrow contract the training engine needs from a bidirectional
// encoder. A backend owns its weights and its optimizer state; one training
// run owns a backend exclusively. Const methods are safe to call
// concurrently.
class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual std::string kind() const = 0;

  virtual const TokenCounter& token_counter() const = 0;
  virtual std::vector<int> Tokenize(std::string_view text) const = 0;
  // Boundary tokens plus every prefix and text token of `segments`.
  virtual std::vector<int> Encode(const std::vector<Segment>& segments) const = 0;

  virtual std::size_t vocab_size() const = 0;
  virtual const TokenRegistry& registry() const = 0;

  // Appends special tokens. Existing embedding rows are left untouched.
  virtual void ExtendVocabulary(const std::vector<std::string>& tokens,
                                std::uint64_t seed) = 0;

  virtual void ResetClassifierHead(std::uint64_t seed) = 0;
  virtual void ResetOptimizer(const OptimizerConfig& config) = 0;

  // One optimizer step on the mean masked-token cross-entropy of `batch`.
  // Returns the loss before the step.
  virtual double MlmStep(const std::vector<MaskedSequence>& batch,
                         double learning_rate) = 0;

  // One optimizer step on class-weighted cross-entropy, normalized by the
  // summed weights of the batch. Returns the loss before the step.
  virtual double ClassifyStep(const std::vector<std::vector<int>>& batch,
                              const std::vector<int>& labels,
                              const ClassWeights& class_weights,
                              double learning_rate) = 0;

  virtual Logits ClassifyLogits(const std::vector<int>& ids) const = 0;

  std::vector<Logits> ClassifyLogits(
      const std::vector<std::vector<int>>& batch) const {
    std::vector<Logits> out;
    out.reserve(batch.size());
    for (const auto& ids : batch) out.push_back(ClassifyLogits(ids));
    return out;
  }

  virtual std::unique_ptr<EncoderBackend> Clone() const = 0;
  virtual void Save(const std::string& dir) const = 0;
};

// Restores any backend written by EncoderBackend::Save.
std::unique_ptr<EncoderBackend> LoadBackend(const std::string& dir);

// Probability of the toxic class: softmax over the two logits.
double ToxicProbability(const Logits& logits);

}  // namespace toxctx

#endif  // TOXCTX_ENCODER_H_
