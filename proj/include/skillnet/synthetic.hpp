#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "skillnet/data.hpp"

namespace skillnet {

struct SyntheticOptions {
  std::size_t min_length = 3;
  std::size_t max_length = 8;
  std::string alphabet = "abcdefghij";
};

// Known kinds: copy, reverse, rotate (first character moved to the end).
std::vector<std::string> synthetic_kinds();
std::string apply_synthetic(const std::string& kind, const std::string& source);

// Random strings over the alphabet paired with their transformed targets.
std::vector<Example> synthetic_examples(const std::string& kind, std::size_t count, std::uint64_t seed,
                                        const SyntheticOptions& options = {});

}  // namespace skillnet
