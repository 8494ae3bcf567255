#ifndef TOXCTX_VOCAB_H_
#define TOXCTX_VOCAB_H_

#include <cstddef>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace toxctx {

// Tracks the special tokens appended to a base vocabulary. Added ids are
// contiguous from base_vocab_size; every added id is protected, i.e. never
// chosen as a masking target.
struct TokenRegistry {
  std::size_t base_vocab_size = 0;
  std::vector<std::pair<std::string, int>> added_tokens;
  std::set<int> protected_ids;
  int mask_id = -1;

  std::size_t vocab_size() const {
    return base_vocab_size + added_tokens.size();
  }
  bool IsProtected(int id) const { return protected_ids.count(id) > 0; }
  // -1 when the token was never registered.
  int FindAdded(const std::string& token) const;
};

// Returns a registry with `tokens` appended. Throws Error(kRegistration) for
// a token that is already registered or repeated within `tokens`.
TokenRegistry RegisterSpecialTokens(const TokenRegistry& registry,
                                    const std::vector<std::string>& tokens);

}  // namespace toxctx

#endif  // TOXCTX_VOCAB_H_
