#include "lomar/rng.hpp"

#include <sstream>

#include "lomar/error.hpp"

namespace lomar {

std::string serialize_rng(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

Rng deserialize_rng(const std::string& text) {
  std::istringstream is(text);
  Rng rng;
  is >> rng;
  if (!is) throw ContractError("malformed RNG state");
  return rng;
}

}  // namespace lomar
