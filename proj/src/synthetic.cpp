#include "skillnet/synthetic.hpp"

#include <algorithm>
#include <stdexcept>

#include "skillnet/random.hpp"

namespace skillnet {

std::vector<std::string> synthetic_kinds() { return {"copy", "reverse", "rotate"}; }

std::string apply_synthetic(const std::string& kind, const std::string& source) {
  if (kind == "copy") return source;
  if (kind == "reverse") return {source.rbegin(), source.rend()};
  if (kind == "rotate") {
    if (source.empty()) return source;
    return source.substr(1) + source.front();
  }
  throw std::invalid_argument("unknown synthetic task '" + kind + "' (known: copy, reverse, rotate)");
}

std::vector<Example> synthetic_examples(const std::string& kind, std::size_t count, std::uint64_t seed,
                                        const SyntheticOptions& options) {
  if (options.alphabet.empty() || options.min_length > options.max_length) {
    throw std::invalid_argument("synthetic options need a non-empty alphabet and min_length <= max_length");
  }
  apply_synthetic(kind, "");
  Rng rng(seed);
  std::vector<Example> out;
  out.reserve(count);
  const std::uint64_t span = options.max_length - options.min_length + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t length = options.min_length + rng.below(span);
    std::string s;
    for (std::size_t k = 0; k < length; ++k) s.push_back(options.alphabet[rng.below(options.alphabet.size())]);
    out.push_back({s, apply_synthetic(kind, s)});
  }
  return out;
}

}  // namespace skillnet
