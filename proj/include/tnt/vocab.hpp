#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace tnt {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Token alphabet shared by every distribution in the library.
///
/// Three ids are reserved (EOS, BOS, PAD). At least two further ids must
/// remain for content.
struct Vocab {
  int size = 0;
  TokenId eos = 0;
  TokenId bos = 1;
  TokenId pad = 2;
  std::vector<std::string> names;  // optional display strings, empty or size entries

  static constexpr int kReservedCount = 3;

  void validate() const;

  bool contains(TokenId id) const { return id >= 0 && id < size; }
  bool is_reserved(TokenId id) const { return id == eos || id == bos || id == pad; }
  std::string name(TokenId id) const;

  // Throws TokenOutOfRange if any id is outside [0, size).
  void check_tokens(std::span<const TokenId> ids, const char* what) const;

  bool operator==(const Vocab&) const = default;
};

}  // namespace tnt
