#ifndef TOXCTX_MASKING_H_
#define TOXCTX_MASKING_H_

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "toxctx/context.h"
#include "toxctx/data_model.h"
#include "toxctx/tokenizer.h"
#include "toxctx/vocab.h"

namespace toxctx {

inline constexpr int kIgnoreTarget = -100;

// Corruption recipe for masked language modeling. Each unprotected position
// is selected with select_prob; a selected position becomes [MASK], a random
// unprotected token, or stays as is, with the three fractions below.
struct MaskingConfig {
  double select_prob = 0.15;
  double mask_frac = 0.8;
  double random_frac = 0.1;
  double keep_frac = 0.1;
  std::uint64_t seed = 0;

  // Throws Error(kConfig) when the fractions do not sum to 1 or
  // select_prob is outside [0, 1].
  void Validate() const;
};

struct MaskedSequence {
  std::vector<int> corrupted;
  std::vector<int> targets;  // original id where selected, else kIgnoreTarget

  std::size_t num_selected() const;
};

MaskedSequence MaskSequence(const std::vector<int>& ids,
                            const TokenRegistry& registry,
                            const MaskingConfig& config);

// A pretraining document: consecutive messages of one match.
struct MlmDocument {
  std::string match_id;
  std::vector<Segment> segments;
};

struct MlmCorpusOptions {
  SeparatorScheme scheme = SeparatorScheme::kPeriod;
  std::size_t token_budget = 512;
  int max_teams = 2;
  int max_players = 5;
};

// Joins every match's messages in order per `scheme`, splitting into several
// documents at budget boundaries without cutting a message. Senders are
// numbered by first appearance in the match. A single message longer than
// the budget keeps only its last tokens and forms its own document.
std::vector<MlmDocument> BuildMlmCorpus(const std::vector<Match>& matches,
                                        const MlmCorpusOptions& options,
                                        const TokenCounter& tokenizer);

// Space-joined prefix and text tokens, e.g. "gg wp . ez mid".
std::string RenderDocument(const MlmDocument& doc);

// Encoded corpus on disk: one document per line, "<match_id>\t<id> <id> ...".
struct EncodedDocument {
  std::string match_id;
  std::vector<int> ids;

  friend bool operator==(const EncodedDocument&,
                         const EncodedDocument&) = default;
};

void WriteEncodedCorpus(std::ostream& out,
                        const std::vector<EncodedDocument>& docs);
std::vector<EncodedDocument> ReadEncodedCorpus(std::istream& in);

}  // namespace toxctx

#endif  // TOXCTX_MASKING_H_
