#ifndef TOXCTX_HASHING_H_
#define TOXCTX_HASHING_H_

#include <cstdint>
#include <string>
#include <string_view>

namespace toxctx {

// 64-bit FNV-1a.
std::uint64_t Fnv1a64(std::string_view data);

// 16 lowercase hex digits.
std::string HexDigest(std::uint64_t value);

}  // namespace toxctx

#endif  // TOXCTX_HASHING_H_
