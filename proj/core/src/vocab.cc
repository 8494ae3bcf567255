#include "toxctx/vocab.h"

#include "toxctx/error.h"

namespace toxctx {

int TokenRegistry::FindAdded(const std::string& token) const {
  for (const auto& [t, id] : added_tokens) {
    if (t == token) return id;
  }
  return -1;
}

TokenRegistry RegisterSpecialTokens(const TokenRegistry& registry,
                                    const std::vector<std::string>& tokens) {
  TokenRegistry out = registry;
  for (const std::string& token : tokens) {
    if (out.FindAdded(token) >= 0) {
      throw Error(ErrorKind::kRegistration,
                  "special token '" + token + "' is already registered");
    }
    const int id = static_cast<int>(out.vocab_size());
    out.added_tokens.emplace_back(token, id);
    out.protected_ids.insert(id);
  }
  return out;
}

}  // namespace toxctx
