#ifndef TOXCTX_TINY_ENCODER_H_
#define TOXCTX_TINY_ENCODER_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "toxctx/encoder.h"
#include "toxctx/optimizer.h"
#include "toxctx/tokenizer.h"
#include "toxctx/vocab.h"

namespace toxctx {

struct TinyEncoderConfig {
  int d_model = 32;
  int n_layers = 4;
  int n_heads = 2;
  int d_ff = 64;
  int max_len = 128;
  double init_std = 0.02;
};

// Position of one named tensor inside the flat parameter vector.
struct TensorRef {
  std::size_t offset = 0;
  int rows = 0;
  int cols = 0;
  std::size_t size() const {
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }
};

// Pre-LayerNorm transformer encoder trained from scratch, with a RoBERTa
// style classification head on the first position and an MLM head tied to
// the token embeddings. All parameters live in one flat double vector so the
// optimizer and gradient checks treat them uniformly. Gradients are
// hand-derived; there is no dropout, so training is bit-reproducible.
class TinyEncoder : public EncoderBackend {
 public:
  TinyEncoder(const TinyEncoderConfig& config, Vocabulary vocab,
              std::uint64_t seed);

  std::string kind() const override { return "tiny"; }

  const TokenCounter& token_counter() const override { return tokenizer_; }
  std::vector<int> Tokenize(std::string_view text) const override;
  std::vector<int> Encode(const std::vector<Segment>& segments) const override;

  std::size_t vocab_size() const override { return registry_.vocab_size(); }
  const TokenRegistry& registry() const override { return registry_; }
  const Vocabulary& vocabulary() const { return vocab_; }

  void ExtendVocabulary(const std::vector<std::string>& tokens,
                        std::uint64_t seed) override;
  void ResetClassifierHead(std::uint64_t seed) override;
  void ResetOptimizer(const OptimizerConfig& config) override;

  double MlmStep(const std::vector<MaskedSequence>& batch,
                 double learning_rate) override;
  double ClassifyStep(const std::vector<std::vector<int>>& batch,
                      const std::vector<int>& labels,
                      const ClassWeights& class_weights,
                      double learning_rate) override;
  Logits ClassifyLogits(const std::vector<int>& ids) const override;
  using EncoderBackend::ClassifyLogits;

  std::unique_ptr<EncoderBackend> Clone() const override;
  void Save(const std::string& dir) const override;
  static std::unique_ptr<TinyEncoder> Load(const std::string& dir);

  // Loss and its gradient (accumulated into a zeroed vector of
  // parameter_count() entries) without touching the weights.
  double ClassifyLossAndGradient(const std::vector<std::vector<int>>& batch,
                                 const std::vector<int>& labels,
                                 const std::vector<double>& sample_weights,
                                 Eigen::VectorXd* grad) const;
  double MlmLossAndGradient(const std::vector<MaskedSequence>& batch,
                            Eigen::VectorXd* grad) const;

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(params_.size());
  }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& mutable_parameters() { return params_; }

  // Named tensors: "tok_emb", "pos_emb", "layer{i}.wq", "cls_w", "out_b",
  // "mlm_bias", ... See the layout builder for the full list.
  TensorRef tensor(const std::string& name) const;
  Eigen::VectorXd EmbeddingRow(int id) const;

  const TinyEncoderConfig& config() const { return config_; }

 private:
  using MatRM =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  struct Layout;
  struct ForwardCache;

  TinyEncoder(const TinyEncoderConfig& config, Vocabulary vocab,
              TokenRegistry registry);

  void BuildLayout();
  void InitTensor(const std::string& name, std::uint64_t seed);
  Eigen::VectorXd DecayMask() const;

  // Encoder trunk. cache->out holds the final hidden states.
  void Forward(const std::vector<int>& ids, ForwardCache* cache) const;
  // Accumulates the trunk gradient for d(loss)/d(final hidden states).
  void Backward(const ForwardCache& cache, const MatRM& d_hidden,
                Eigen::VectorXd* grad) const;

  TinyEncoderConfig config_;
  WordTokenizer tokenizer_;
  Vocabulary vocab_;
  TokenRegistry registry_;
  std::map<std::string, int, std::less<>> added_index_;
  std::shared_ptr<const Layout> layout_;
  Eigen::VectorXd params_;
  AdamW optimizer_;
  bool optimizer_ready_ = false;
};

}  // namespace toxctx

#endif  // TOXCTX_TINY_ENCODER_H_
