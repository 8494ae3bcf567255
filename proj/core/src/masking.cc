#include "toxctx/masking.h"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "toxctx/error.h"
#include "toxctx/rng.h"

namespace toxctx {

void MaskingConfig::Validate() const {
  if (!(select_prob >= 0.0 && select_prob <= 1.0)) {
    throw Error(ErrorKind::kConfig, "select_prob must lie in [0, 1]");
  }
  if (mask_frac < 0 || random_frac < 0 || keep_frac < 0 ||
      std::abs(mask_frac + random_frac + keep_frac - 1.0) > 1e-9) {
    throw Error(ErrorKind::kConfig,
                "mask/random/keep fractions must be non-negative and sum to 1");
  }
}

std::size_t MaskedSequence::num_selected() const {
  return static_cast<std::size_t>(
      std::count_if(targets.begin(), targets.end(),
                    [](int t) { return t != kIgnoreTarget; }));
}

MaskedSequence MaskSequence(const std::vector<int>& ids,
                            const TokenRegistry& registry,
                            const MaskingConfig& config) {
  config.Validate();
  MaskedSequence out{ids, std::vector<int>(ids.size(), kIgnoreTarget)};
  if (config.select_prob == 0.0) return out;
  const std::size_t vocab = registry.vocab_size();
  const bool can_draw_random = registry.protected_ids.size() < vocab;
  Rng rng(config.seed);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (registry.IsProtected(ids[i])) continue;
    if (!rng.Bernoulli(config.select_prob)) continue;
    out.targets[i] = ids[i];
    const double u = rng.Uniform();
    if (u < config.mask_frac) {
      out.corrupted[i] = registry.mask_id;
    } else if (u < config.mask_frac + config.random_frac && can_draw_random) {
      int replacement;
      do {
        replacement = static_cast<int>(rng.UniformInt(vocab));
      } while (registry.IsProtected(replacement));
      out.corrupted[i] = replacement;
    }
  }
  return out;
}

std::vector<MlmDocument> BuildMlmCorpus(const std::vector<Match>& matches,
                                        const MlmCorpusOptions& options,
                                        const TokenCounter& tokenizer) {
  const bool sender_tokens = options.scheme == SeparatorScheme::kSenderTokens;
  const std::size_t reserved = tokenizer.ReservedTokens();
  const std::size_t lead = sender_tokens ? 2 : 0;  // prefix of a first segment
  if (options.token_budget < reserved + lead + 1) {
    throw Error(ErrorKind::kBudget, "pretraining token budget too small");
  }
  const std::size_t available = options.token_budget - reserved;
  const std::string separator(options.scheme == SeparatorScheme::kPeriod
                                  ? kPeriodSeparator
                                  : kNeutralSeparator);

  std::vector<MlmDocument> corpus;
  for (const Match& match : matches) {
    const SenderMap senders = BuildFirstAppearanceSenderMap(match);
    MlmDocument doc{match.match_id, {}};
    std::size_t used = 0;
    auto flush = [&] {
      if (!doc.segments.empty()) corpus.push_back(std::move(doc));
      doc = MlmDocument{match.match_id, {}};
      used = 0;
    };
    for (const ChatMessage& m : match.messages) {
      std::string text = m.text;
      std::size_t n_text = tokenizer.CountTokens(text);
      auto prefix_for = [&](bool first) -> std::vector<std::string> {
        if (sender_tokens) {
          return SenderPrefix(senders.Normalize({m.team, m.player}),
                              options.max_teams, options.max_players);
        }
        if (first) return {};
        return {separator};
      };
      if (lead + n_text > available) {
        flush();
        n_text = available - lead;
        text = tokenizer.KeepLastTokens(text, n_text);
        doc.segments.push_back({prefix_for(true), std::move(text), m.index});
        flush();
        continue;
      }
      std::vector<std::string> prefix = prefix_for(doc.segments.empty());
      if (used + prefix.size() + n_text > available) {
        flush();
        prefix = prefix_for(true);
      }
      used += prefix.size() + n_text;
      doc.segments.push_back({std::move(prefix), std::move(text), m.index});
    }
    flush();
  }
  return corpus;
}

std::string RenderDocument(const MlmDocument& doc) {
  std::string out;
  auto append = [&](const std::string& piece) {
    if (piece.empty()) return;
    if (!out.empty()) out.push_back(' ');
    out += piece;
  };
  for (const Segment& s : doc.segments) {
    for (const std::string& p : s.prefix) append(p);
    append(s.text);
  }
  return out;
}

void WriteEncodedCorpus(std::ostream& out,
                        const std::vector<EncodedDocument>& docs) {
  for (const EncodedDocument& d : docs) {
    out << d.match_id << '\t';
    for (std::size_t i = 0; i < d.ids.size(); ++i) {
      if (i) out << ' ';
      out << d.ids[i];
    }
    out << '\n';
  }
}

std::vector<EncodedDocument> ReadEncodedCorpus(std::istream& in) {
  std::vector<EncodedDocument> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(line_no, "missing tab between match id and token ids");
    }
    EncodedDocument d;
    d.match_id = line.substr(0, tab);
    std::istringstream ids(line.substr(tab + 1));
    int id;
    while (ids >> id) d.ids.push_back(id);
    if (!ids.eof()) throw ParseError(line_no, "non-integer token id");
    docs.push_back(std::move(d));
  }
  return docs;
}

}  // namespace toxctx
