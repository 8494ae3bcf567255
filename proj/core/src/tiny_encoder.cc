#include "toxctx/tiny_encoder.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <utility>

#include <nlohmann/json.hpp>

#include "toxctx/error.h"
#include "toxctx/rng.h"

namespace toxctx {

namespace {

using MatRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using CMapM = Eigen::Map<const MatRM>;

constexpr double kLnEps = 1e-5;
constexpr char kWeightsMagic[8] = {'T', 'X', 'C', 'T', 'I', 'N', 'Y', '1'};

enum class InitKind { kNormal, kZero, kOne };

struct TensorSpec {
  std::string name;
  TensorRef ref;
  InitKind init;
  bool decay;
};

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double GeluGrad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf =
      std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

struct LnCache {
  MatRM xhat;
  Eigen::VectorXd rstd;
};

MatRM LayerNorm(const MatRM& x, const CMapM& gain, const CMapM& bias,
                LnCache* cache) {
  const Eigen::Index n = x.rows();
  cache->xhat.resize(n, x.cols());
  cache->rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const auto centered = x.row(i).array() - mean;
    const double var = centered.square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    cache->rstd(i) = rstd;
    cache->xhat.row(i) = (centered * rstd).matrix();
  }
  MatRM y = (cache->xhat.array().rowwise() * gain.row(0).array()).matrix();
  y.rowwise() += bias.row(0);
  return y;
}

MatRM LayerNormBackward(const MatRM& dy, const LnCache& cache,
                        const CMapM& gain, MapM d_gain, MapM d_bias) {
  d_gain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  d_bias.row(0) += dy.colwise().sum();
  const MatRM dxhat = (dy.array().rowwise() * gain.row(0).array()).matrix();
  MatRM dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 =
        (dxhat.row(i).array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = (cache.rstd(i) * (dxhat.row(i).array() - m1 -
                                  cache.xhat.row(i).array() * m2))
                    .matrix();
  }
  return dx;
}

void SoftmaxRowsInPlace(MatRM& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp().matrix();
    s.row(i) /= s.row(i).sum();
  }
}

// log(sum(exp(row))) for numerically stable cross-entropy.
double LogSumExp(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  const double mx = row.maxCoeff();
  return mx + std::log((row.array() - mx).exp().sum());
}

}  // namespace

struct TinyEncoder::Layout {
  struct LayerRefs {
    TensorRef ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    TensorRef ln2_g, ln2_b, w1, b1, w2, b2;
  };

  std::vector<TensorSpec> specs;
  std::map<std::string, std::size_t, std::less<>> by_name;
  std::size_t total = 0;

  TensorRef tok_emb, pos_emb, lnf_g, lnf_b;
  TensorRef cls_w, cls_b, out_w, out_b;
  TensorRef mlm_w, mlm_b, mlm_ln_g, mlm_ln_b, mlm_bias;
  std::vector<LayerRefs> layers;

  TensorRef Add(const std::string& name, int rows, int cols, InitKind init,
                bool decay) {
    TensorRef ref{total, rows, cols};
    total += ref.size();
    by_name.emplace(name, specs.size());
    specs.push_back({name, ref, init, decay});
    return ref;
  }
};

struct TinyEncoder::ForwardCache {
  struct LayerCache {
    MatRM x, a, q, k, v, o, h, b, u, g;
    std::vector<MatRM> p;
    LnCache ln1, ln2;
  };
  std::vector<int> ids;
  std::vector<LayerCache> layers;
  LnCache lnf;
  MatRM out;
};

namespace {

TokenRegistry BaseRegistry(std::size_t vocab_size) {
  TokenRegistry r;
  r.base_vocab_size = vocab_size;
  r.mask_id = Vocabulary::kMask;
  r.protected_ids = {Vocabulary::kPad, Vocabulary::kCls, Vocabulary::kSep,
                     Vocabulary::kUnk, Vocabulary::kMask};
  return r;
}

MapM View(Eigen::VectorXd& v, const TensorRef& r) {
  return MapM(v.data() + r.offset, r.rows, r.cols);
}

CMapM View(const Eigen::VectorXd& v, const TensorRef& r) {
  return CMapM(v.data() + r.offset, r.rows, r.cols);
}

}  // namespace

TinyEncoder::TinyEncoder(const TinyEncoderConfig& config, Vocabulary vocab,
                         TokenRegistry registry)
    : config_(config),
      tokenizer_(1),
      vocab_(std::move(vocab)),
      registry_(std::move(registry)) {
  if (config_.d_model <= 0 || config_.n_heads <= 0 ||
      config_.d_model % config_.n_heads != 0 || config_.n_layers < 0 ||
      config_.d_ff <= 0 || config_.max_len <= 1) {
    throw Error(ErrorKind::kConfig, "invalid tiny encoder shape");
  }
  for (const auto& [token, id] : registry_.added_tokens) {
    added_index_.emplace(token, id);
  }
  BuildLayout();
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_->total));
}

TinyEncoder::TinyEncoder(const TinyEncoderConfig& config, Vocabulary vocab,
                         std::uint64_t seed)
    : TinyEncoder(config, vocab, BaseRegistry(vocab.size())) {
  for (std::size_t i = 0; i < layout_->specs.size(); ++i) {
    InitTensor(layout_->specs[i].name, DeriveSeed(seed, {i}));
  }
}

void TinyEncoder::BuildLayout() {
  auto layout = std::make_shared<Layout>();
  const int d = config_.d_model;
  const int f = config_.d_ff;
  const int v = static_cast<int>(registry_.vocab_size());
  layout->tok_emb = layout->Add("tok_emb", v, d, InitKind::kNormal, true);
  layout->pos_emb =
      layout->Add("pos_emb", config_.max_len, d, InitKind::kNormal, true);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    Layout::LayerRefs r;
    r.ln1_g = layout->Add(p + "ln1_g", 1, d, InitKind::kOne, false);
    r.ln1_b = layout->Add(p + "ln1_b", 1, d, InitKind::kZero, false);
    r.wq = layout->Add(p + "wq", d, d, InitKind::kNormal, true);
    r.bq = layout->Add(p + "bq", 1, d, InitKind::kZero, false);
    r.wk = layout->Add(p + "wk", d, d, InitKind::kNormal, true);
    r.bk = layout->Add(p + "bk", 1, d, InitKind::kZero, false);
    r.wv = layout->Add(p + "wv", d, d, InitKind::kNormal, true);
    r.bv = layout->Add(p + "bv", 1, d, InitKind::kZero, false);
    r.wo = layout->Add(p + "wo", d, d, InitKind::kNormal, true);
    r.bo = layout->Add(p + "bo", 1, d, InitKind::kZero, false);
    r.ln2_g = layout->Add(p + "ln2_g", 1, d, InitKind::kOne, false);
    r.ln2_b = layout->Add(p + "ln2_b", 1, d, InitKind::kZero, false);
    r.w1 = layout->Add(p + "w1", d, f, InitKind::kNormal, true);
    r.b1 = layout->Add(p + "b1", 1, f, InitKind::kZero, false);
    r.w2 = layout->Add(p + "w2", f, d, InitKind::kNormal, true);
    r.b2 = layout->Add(p + "b2", 1, d, InitKind::kZero, false);
    layout->layers.push_back(r);
  }
  layout->lnf_g = layout->Add("lnf_g", 1, d, InitKind::kOne, false);
  layout->lnf_b = layout->Add("lnf_b", 1, d, InitKind::kZero, false);
  layout->cls_w = layout->Add("cls_w", d, d, InitKind::kNormal, true);
  layout->cls_b = layout->Add("cls_b", 1, d, InitKind::kZero, false);
  layout->out_w = layout->Add("out_w", d, 2, InitKind::kNormal, true);
  layout->out_b = layout->Add("out_b", 1, 2, InitKind::kZero, false);
  layout->mlm_w = layout->Add("mlm_w", d, d, InitKind::kNormal, true);
  layout->mlm_b = layout->Add("mlm_b", 1, d, InitKind::kZero, false);
  layout->mlm_ln_g = layout->Add("mlm_ln_g", 1, d, InitKind::kOne, false);
  layout->mlm_ln_b = layout->Add("mlm_ln_b", 1, d, InitKind::kZero, false);
  layout->mlm_bias = layout->Add("mlm_bias", 1, v, InitKind::kZero, false);
  layout_ = std::move(layout);
}

void TinyEncoder::InitTensor(const std::string& name, std::uint64_t seed) {
  const TensorSpec& spec = layout_->specs.at(layout_->by_name.at(name));
  MapM t = View(params_, spec.ref);
  switch (spec.init) {
    case InitKind::kZero:
      t.setZero();
      break;
    case InitKind::kOne:
      t.setOnes();
      break;
    case InitKind::kNormal: {
      Rng rng(seed);
      for (Eigen::Index i = 0; i < t.rows(); ++i) {
        for (Eigen::Index j = 0; j < t.cols(); ++j) {
          t(i, j) = config_.init_std * rng.Normal();
        }
      }
      break;
    }
  }
}

Eigen::VectorXd TinyEncoder::DecayMask() const {
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(params_.size());
  for (const TensorSpec& spec : layout_->specs) {
    if (spec.decay) {
      mask.segment(static_cast<Eigen::Index>(spec.ref.offset),
                   static_cast<Eigen::Index>(spec.ref.size()))
          .setOnes();
    }
  }
  return mask;
}

TensorRef TinyEncoder::tensor(const std::string& name) const {
  auto it = layout_->by_name.find(name);
  if (it == layout_->by_name.end()) {
    throw Error(ErrorKind::kInput, "no tensor named '" + name + "'");
  }
  return layout_->specs[it->second].ref;
}

Eigen::VectorXd TinyEncoder::EmbeddingRow(int id) const {
  return View(params_, layout_->tok_emb).row(id).transpose();
}

std::vector<int> TinyEncoder::Tokenize(std::string_view text) const {
  std::vector<int> ids;
  for (const std::string& w : tokenizer_.Split(text)) ids.push_back(vocab_.Id(w));
  return ids;
}

std::vector<int> TinyEncoder::Encode(
    const std::vector<Segment>& segments) const {
  std::vector<int> ids{Vocabulary::kCls};
  for (const Segment& s : segments) {
    for (const std::string& token : s.prefix) {
      auto it = added_index_.find(token);
      if (it != added_index_.end()) {
        ids.push_back(it->second);
      } else if (vocab_.Contains(token)) {
        ids.push_back(vocab_.Id(token));
      } else {
        throw Error(ErrorKind::kConfig,
                    "special token " + token +
                        " is not registered with this encoder");
      }
    }
    for (int id : Tokenize(s.text)) ids.push_back(id);
  }
  if (ids.size() > static_cast<std::size_t>(config_.max_len)) {
    throw Error(ErrorKind::kBudget,
                "encoded input of " + std::to_string(ids.size()) +
                    " tokens exceeds max_len " +
                    std::to_string(config_.max_len));
  }
  return ids;
}

void TinyEncoder::ExtendVocabulary(const std::vector<std::string>& tokens,
                                   std::uint64_t seed) {
  for (const std::string& t : tokens) {
    if (vocab_.Contains(t)) {
      throw Error(ErrorKind::kRegistration,
                  "token '" + t + "' is already in the base vocabulary");
    }
  }
  TokenRegistry next = RegisterSpecialTokens(registry_, tokens);
  if (tokens.empty()) return;

  const std::shared_ptr<const Layout> old_layout = layout_;
  const Eigen::VectorXd old_params = params_;
  const CMapM old_emb = View(old_params, old_layout->tok_emb);
  const Eigen::RowVectorXd mean = old_emb.colwise().mean();
  const Eigen::RowVectorXd stddev =
      ((old_emb.rowwise() - mean).array().square().colwise().mean()).sqrt();
  const CMapM old_bias = View(old_params, old_layout->mlm_bias);
  const double bias_mean = old_bias.mean();

  registry_ = std::move(next);
  for (std::size_t i = old_layout->tok_emb.rows; i < registry_.vocab_size();
       ++i) {
    const auto& [token, id] =
        registry_.added_tokens[i - registry_.base_vocab_size];
    added_index_.emplace(token, id);
  }
  BuildLayout();
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_->total));
  for (const TensorSpec& spec : old_layout->specs) {
    const TensorRef& dst = tensor(spec.name);
    View(params_, dst).topLeftCorner(spec.ref.rows, spec.ref.cols) =
        View(old_params, spec.ref);
  }

  MapM emb = View(params_, layout_->tok_emb);
  MapM bias = View(params_, layout_->mlm_bias);
  Rng rng(seed);
  for (Eigen::Index row = old_layout->tok_emb.rows; row < emb.rows(); ++row) {
    for (Eigen::Index j = 0; j < emb.cols(); ++j) {
      emb(row, j) = mean(j) + stddev(j) * rng.Normal();
    }
    bias(0, row) = bias_mean;
  }
  optimizer_ready_ = false;
}

void TinyEncoder::ResetClassifierHead(std::uint64_t seed) {
  std::uint64_t stream = 0;
  for (const char* name : {"cls_w", "cls_b", "out_w", "out_b"}) {
    InitTensor(name, DeriveSeed(seed, {0xc1a55, stream++}));
  }
}

void TinyEncoder::ResetOptimizer(const OptimizerConfig& config) {
  optimizer_ = AdamW(config, DecayMask());
  optimizer_ready_ = true;
}

void TinyEncoder::Forward(const std::vector<int>& ids,
                          ForwardCache* cache) const {
  const Layout& lay = *layout_;
  const Eigen::Index n = static_cast<Eigen::Index>(ids.size());
  const int d = config_.d_model;
  const int dh = d / config_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (n == 0 || n > config_.max_len) {
    throw Error(ErrorKind::kInput, "sequence length " + std::to_string(n) +
                                       " outside [1, max_len]");
  }
  const CMapM emb = View(params_, lay.tok_emb);
  const CMapM pos = View(params_, lay.pos_emb);
  MatRM x(n, d);
  for (Eigen::Index t = 0; t < n; ++t) {
    const int id = ids[t];
    if (id < 0 || id >= emb.rows()) {
      throw Error(ErrorKind::kInput, "token id " + std::to_string(id) +
                                         " outside the vocabulary");
    }
    x.row(t) = emb.row(id) + pos.row(t);
  }
  cache->ids = ids;
  cache->layers.resize(lay.layers.size());
  for (std::size_t l = 0; l < lay.layers.size(); ++l) {
    const Layout::LayerRefs& r = lay.layers[l];
    ForwardCache::LayerCache& c = cache->layers[l];
    c.x = x;
    c.a = LayerNorm(x, View(params_, r.ln1_g), View(params_, r.ln1_b),
                    &c.ln1);
    c.q = c.a * View(params_, r.wq);
    c.q.rowwise() += View(params_, r.bq).row(0);
    c.k = c.a * View(params_, r.wk);
    c.k.rowwise() += View(params_, r.bk).row(0);
    c.v = c.a * View(params_, r.wv);
    c.v.rowwise() += View(params_, r.bv).row(0);
    c.o.resize(n, d);
    c.p.resize(config_.n_heads);
    for (int h = 0; h < config_.n_heads; ++h) {
      MatRM s = c.q.middleCols(h * dh, dh) *
                c.k.middleCols(h * dh, dh).transpose() * scale;
      SoftmaxRowsInPlace(s);
      c.o.middleCols(h * dh, dh) = s * c.v.middleCols(h * dh, dh);
      c.p[h] = std::move(s);
    }
    c.h = c.o * View(params_, r.wo);
    c.h.rowwise() += View(params_, r.bo).row(0);
    c.h += x;
    c.b = LayerNorm(c.h, View(params_, r.ln2_g), View(params_, r.ln2_b),
                    &c.ln2);
    c.u = c.b * View(params_, r.w1);
    c.u.rowwise() += View(params_, r.b1).row(0);
    c.g = c.u.unaryExpr([](double z) { return Gelu(z); });
    x = c.g * View(params_, r.w2);
    x.rowwise() += View(params_, r.b2).row(0);
    x += c.h;
  }
  cache->out = LayerNorm(x, View(params_, lay.lnf_g), View(params_, lay.lnf_b),
                         &cache->lnf);
}

void TinyEncoder::Backward(const ForwardCache& cache, const MatRM& d_hidden,
                           Eigen::VectorXd* grad) const {
  const Layout& lay = *layout_;
  Eigen::VectorXd& g = *grad;
  const int d = config_.d_model;
  const int dh = d / config_.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index n = d_hidden.rows();

  MatRM dx = LayerNormBackward(d_hidden, cache.lnf, View(params_, lay.lnf_g),
                               View(g, lay.lnf_g), View(g, lay.lnf_b));
  for (std::size_t li = lay.layers.size(); li-- > 0;) {
    const Layout::LayerRefs& r = lay.layers[li];
    const ForwardCache::LayerCache& c = cache.layers[li];

    // Feed-forward block: x_out = h + gelu(b W1 + b1) W2 + b2.
    View(g, r.w2) += c.g.transpose() * dx;
    View(g, r.b2).row(0) += dx.colwise().sum();
    const MatRM dg = dx * View(params_, r.w2).transpose();
    const MatRM du =
        (dg.array() * c.u.unaryExpr([](double z) { return GeluGrad(z); })
                          .array())
            .matrix();
    View(g, r.w1) += c.b.transpose() * du;
    View(g, r.b1).row(0) += du.colwise().sum();
    const MatRM db = du * View(params_, r.w1).transpose();
    const MatRM dh_total =
        dx + LayerNormBackward(db, c.ln2, View(params_, r.ln2_g),
                               View(g, r.ln2_g), View(g, r.ln2_b));

    // Attention block: h = x + concat_h(softmax(QK^T s) V) Wo + bo.
    View(g, r.wo) += c.o.transpose() * dh_total;
    View(g, r.bo).row(0) += dh_total.colwise().sum();
    const MatRM d_o = dh_total * View(params_, r.wo).transpose();
    MatRM dq(n, d), dk(n, d), dv(n, d);
    for (int h = 0; h < config_.n_heads; ++h) {
      const MatRM& p = c.p[h];
      const auto d_oh = d_o.middleCols(h * dh, dh);
      const MatRM dp = d_oh * c.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * d_oh;
      const Eigen::VectorXd row_dot = (dp.array() * p.array()).rowwise().sum();
      const MatRM ds =
          (p.array() * (dp.array().colwise() - row_dot.array())).matrix() *
          scale;
      dq.middleCols(h * dh, dh) = ds * c.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * c.q.middleCols(h * dh, dh);
    }
    View(g, r.wq) += c.a.transpose() * dq;
    View(g, r.bq).row(0) += dq.colwise().sum();
    View(g, r.wk) += c.a.transpose() * dk;
    View(g, r.bk).row(0) += dk.colwise().sum();
    View(g, r.wv) += c.a.transpose() * dv;
    View(g, r.bv).row(0) += dv.colwise().sum();
    const MatRM da = dq * View(params_, r.wq).transpose() +
                     dk * View(params_, r.wk).transpose() +
                     dv * View(params_, r.wv).transpose();
    dx = dh_total + LayerNormBackward(da, c.ln1, View(params_, r.ln1_g),
                                      View(g, r.ln1_g), View(g, r.ln1_b));
  }
  MapM d_emb = View(g, lay.tok_emb);
  MapM d_pos = View(g, lay.pos_emb);
  for (Eigen::Index t = 0; t < n; ++t) {
    d_emb.row(cache.ids[t]) += dx.row(t);
    d_pos.row(t) += dx.row(t);
  }
}

Logits TinyEncoder::ClassifyLogits(const std::vector<int>& ids) const {
  ForwardCache cache;
  Forward(ids, &cache);
  const Layout& lay = *layout_;
  Eigen::RowVectorXd z = cache.out.row(0) * View(params_, lay.cls_w) +
                         View(params_, lay.cls_b).row(0);
  const Eigen::RowVectorXd t = z.array().tanh().matrix();
  const Eigen::RowVectorXd logits =
      t * View(params_, lay.out_w) + View(params_, lay.out_b).row(0);
  return {logits(0), logits(1)};
}

double TinyEncoder::ClassifyLossAndGradient(
    const std::vector<std::vector<int>>& batch, const std::vector<int>& labels,
    const std::vector<double>& sample_weights, Eigen::VectorXd* grad) const {
  if (batch.size() != labels.size() || batch.size() != sample_weights.size()) {
    throw Error(ErrorKind::kInput, "batch, labels and weights differ in size");
  }
  const Layout& lay = *layout_;
  Eigen::VectorXd& g = *grad;
  double weight_sum = 0.0;
  for (double w : sample_weights) weight_sum += w;
  if (batch.empty() || weight_sum <= 0.0) return 0.0;

  double loss = 0.0;
  ForwardCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int label = labels[i];
    if (label != kToxic && label != kNonToxic) {
      throw Error(ErrorKind::kInput, "label must be 0 or 1");
    }
    Forward(batch[i], &cache);
    const Eigen::RowVectorXd cls = cache.out.row(0);
    const Eigen::RowVectorXd z =
        cls * View(params_, lay.cls_w) + View(params_, lay.cls_b).row(0);
    const Eigen::RowVectorXd t = z.array().tanh().matrix();
    const Eigen::RowVectorXd logits =
        t * View(params_, lay.out_w) + View(params_, lay.out_b).row(0);
    const double lse = LogSumExp(logits);
    const double share = sample_weights[i] / weight_sum;
    loss += share * (lse - logits(label));

    Eigen::RowVectorXd d_logits = (logits.array() - lse).exp().matrix();
    d_logits(label) -= 1.0;
    d_logits *= share;
    View(g, lay.out_w) += t.transpose() * d_logits;
    View(g, lay.out_b).row(0) += d_logits;
    const Eigen::RowVectorXd dt = d_logits * View(params_, lay.out_w).transpose();
    const Eigen::RowVectorXd dz =
        (dt.array() * (1.0 - t.array().square())).matrix();
    View(g, lay.cls_w) += cls.transpose() * dz;
    View(g, lay.cls_b).row(0) += dz;
    MatRM d_hidden = MatRM::Zero(cache.out.rows(), cache.out.cols());
    d_hidden.row(0) = dz * View(params_, lay.cls_w).transpose();
    Backward(cache, d_hidden, grad);
  }
  return loss;
}

double TinyEncoder::MlmLossAndGradient(const std::vector<MaskedSequence>& batch,
                                       Eigen::VectorXd* grad) const {
  const Layout& lay = *layout_;
  Eigen::VectorXd& g = *grad;
  std::size_t total = 0;
  for (const MaskedSequence& s : batch) total += s.num_selected();
  if (total == 0) return 0.0;
  const double inv_total = 1.0 / static_cast<double>(total);

  const CMapM emb = View(params_, lay.tok_emb);
  double loss = 0.0;
  ForwardCache cache;
  for (const MaskedSequence& seq : batch) {
    std::vector<Eigen::Index> positions;
    for (std::size_t i = 0; i < seq.targets.size(); ++i) {
      if (seq.targets[i] != kIgnoreTarget) positions.push_back(i);
    }
    if (positions.empty()) continue;
    Forward(seq.corrupted, &cache);
    const Eigen::Index m = static_cast<Eigen::Index>(positions.size());
    MatRM fm(m, config_.d_model);
    for (Eigen::Index j = 0; j < m; ++j) fm.row(j) = cache.out.row(positions[j]);
    MatRM z = fm * View(params_, lay.mlm_w);
    z.rowwise() += View(params_, lay.mlm_b).row(0);
    const MatRM gz = z.unaryExpr([](double x) { return Gelu(x); });
    LnCache ln;
    const MatRM normed = LayerNorm(gz, View(params_, lay.mlm_ln_g),
                                   View(params_, lay.mlm_ln_b), &ln);
    MatRM logits = normed * emb.transpose();
    logits.rowwise() += View(params_, lay.mlm_bias).row(0);

    MatRM d_logits(m, logits.cols());
    for (Eigen::Index j = 0; j < m; ++j) {
      const double lse = LogSumExp(logits.row(j));
      const int target = seq.targets[positions[j]];
      loss += (lse - logits(j, target)) * inv_total;
      d_logits.row(j) = (logits.row(j).array() - lse).exp().matrix();
      d_logits(j, target) -= 1.0;
    }
    d_logits *= inv_total;
    View(g, lay.tok_emb) += d_logits.transpose() * normed;
    View(g, lay.mlm_bias).row(0) += d_logits.colwise().sum();
    const MatRM d_normed = d_logits * emb;
    const MatRM d_gz =
        LayerNormBackward(d_normed, ln, View(params_, lay.mlm_ln_g),
                          View(g, lay.mlm_ln_g), View(g, lay.mlm_ln_b));
    const MatRM dz =
        (d_gz.array() *
         z.unaryExpr([](double x) { return GeluGrad(x); }).array())
            .matrix();
    View(g, lay.mlm_w) += fm.transpose() * dz;
    View(g, lay.mlm_b).row(0) += dz.colwise().sum();
    const MatRM d_fm = dz * View(params_, lay.mlm_w).transpose();
    MatRM d_hidden = MatRM::Zero(cache.out.rows(), cache.out.cols());
    for (Eigen::Index j = 0; j < m; ++j) d_hidden.row(positions[j]) = d_fm.row(j);
    Backward(cache, d_hidden, grad);
  }
  return loss;
}

double TinyEncoder::MlmStep(const std::vector<MaskedSequence>& batch,
                            double learning_rate) {
  if (!optimizer_ready_) ResetOptimizer(OptimizerConfig{});
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  std::size_t total = 0;
  for (const MaskedSequence& s : batch) total += s.num_selected();
  const double loss = MlmLossAndGradient(batch, &grad);
  if (total > 0) optimizer_.Step(params_, grad, learning_rate);
  return loss;
}

double TinyEncoder::ClassifyStep(const std::vector<std::vector<int>>& batch,
                                 const std::vector<int>& labels,
                                 const ClassWeights& class_weights,
                                 double learning_rate) {
  if (!optimizer_ready_) ResetOptimizer(OptimizerConfig{});
  std::vector<double> weights;
  weights.reserve(labels.size());
  for (int y : labels) weights.push_back(class_weights.at(y));
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  const double loss = ClassifyLossAndGradient(batch, labels, weights, &grad);
  optimizer_.Step(params_, grad, learning_rate);
  return loss;
}

std::unique_ptr<EncoderBackend> TinyEncoder::Clone() const {
  return std::make_unique<TinyEncoder>(*this);
}

void TinyEncoder::Save(const std::string& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::ordered_json meta;
  meta["kind"] = kind();
  meta["config"] = {{"d_model", config_.d_model},
                    {"n_layers", config_.n_layers},
                    {"n_heads", config_.n_heads},
                    {"d_ff", config_.d_ff},
                    {"max_len", config_.max_len},
                    {"init_std", config_.init_std}};
  meta["vocab"] = vocab_.tokens();
  nlohmann::ordered_json added = nlohmann::ordered_json::array();
  for (const auto& [token, id] : registry_.added_tokens) {
    added.push_back({token, id});
  }
  meta["added_tokens"] = std::move(added);
  meta["protected_ids"] = registry_.protected_ids;
  meta["mask_id"] = registry_.mask_id;
  meta["param_count"] = params_.size();
  {
    std::ofstream out(fs::path(dir) / "encoder.json");
    if (!out) throw Error(ErrorKind::kIo, "cannot write " + dir);
    out << meta.dump(2) << '\n';
  }
  std::ofstream out(fs::path(dir) / "weights.bin", std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write weights in " + dir);
  const std::uint64_t count = static_cast<std::uint64_t>(params_.size());
  out.write(kWeightsMagic, sizeof(kWeightsMagic));
  out.write(reinterpret_cast<const char*>(&count), sizeof(count));
  out.write(reinterpret_cast<const char*>(params_.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
}

std::unique_ptr<TinyEncoder> TinyEncoder::Load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream meta_in(fs::path(dir) / "encoder.json");
  if (!meta_in) {
    throw Error(ErrorKind::kMissingArtifact,
                "no encoder.json in " + dir);
  }
  const nlohmann::json meta = nlohmann::json::parse(meta_in);
  TinyEncoderConfig config;
  const auto& c = meta.at("config");
  config.d_model = c.at("d_model");
  config.n_layers = c.at("n_layers");
  config.n_heads = c.at("n_heads");
  config.d_ff = c.at("d_ff");
  config.max_len = c.at("max_len");
  config.init_std = c.at("init_std");
  Vocabulary vocab(meta.at("vocab").get<std::vector<std::string>>());
  TokenRegistry registry;
  registry.base_vocab_size = vocab.size();
  for (const auto& entry : meta.at("added_tokens")) {
    registry.added_tokens.emplace_back(entry.at(0).get<std::string>(),
                                       entry.at(1).get<int>());
  }
  registry.protected_ids = meta.at("protected_ids").get<std::set<int>>();
  registry.mask_id = meta.at("mask_id");

  std::unique_ptr<TinyEncoder> enc(
      new TinyEncoder(config, std::move(vocab), std::move(registry)));
  std::ifstream in(fs::path(dir) / "weights.bin", std::ios::binary);
  char magic[sizeof(kWeightsMagic)];
  std::uint64_t count = 0;
  if (!in.read(magic, sizeof(magic)) ||
      !std::equal(magic, magic + sizeof(magic), kWeightsMagic) ||
      !in.read(reinterpret_cast<char*>(&count), sizeof(count)) ||
      count != static_cast<std::uint64_t>(enc->params_.size())) {
    throw Error(ErrorKind::kIo, "corrupt weights.bin in " + dir);
  }
  if (!in.read(reinterpret_cast<char*>(enc->params_.data()),
               static_cast<std::streamsize>(count * sizeof(double)))) {
    throw Error(ErrorKind::kIo, "truncated weights.bin in " + dir);
  }
  return enc;
}

std::unique_ptr<EncoderBackend> LoadBackend(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream meta_in(fs::path(dir) / "encoder.json");
  if (!meta_in) {
    throw Error(ErrorKind::kMissingArtifact,
                "no encoder checkpoint at " + dir);
  }
  const nlohmann::json meta = nlohmann::json::parse(meta_in);
  const std::string kind = meta.at("kind");
  if (kind == "tiny") return TinyEncoder::Load(dir);
  throw Error(ErrorKind::kConfig, "unknown encoder kind '" + kind + "'");
}

double ToxicProbability(const Logits& logits) {
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx);
  const double e1 = std::exp(logits[1] - mx);
  return e1 / (e0 + e1);
}

}  // namespace toxctx
