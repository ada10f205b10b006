#include "tnt/vocab.hpp"

#include "tnt/errors.hpp"

namespace tnt {

void Vocab::validate() const {
  if (size - kReservedCount < 2) {
    throw InvalidArgument("vocab: need at least 2 non-reserved tokens, size=" + std::to_string(size));
  }
  if (!contains(eos) || !contains(bos) || !contains(pad)) {
    throw InvalidArgument("vocab: reserved ids must be < size");
  }
  if (eos == bos || eos == pad || bos == pad) {
    throw InvalidArgument("vocab: reserved ids must be distinct");
  }
  if (!names.empty() && static_cast<int>(names.size()) != size) {
    throw InvalidArgument("vocab: names must be empty or have one entry per id");
  }
}

std::string Vocab::name(TokenId id) const {
  if (contains(id) && !names.empty()) return names[static_cast<std::size_t>(id)];
  if (id == eos) return "<eos>";
  if (id == bos) return "<bos>";
  if (id == pad) return "<pad>";
  return "t" + std::to_string(id);
}

void Vocab::check_tokens(std::span<const TokenId> ids, const char* what) const {
  for (TokenId id : ids) {
    if (!contains(id)) {
      throw TokenOutOfRange(std::string(what) + ": token " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(size));
    }
  }
}

}  // namespace tnt
