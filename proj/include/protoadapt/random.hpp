// Copyright 2026 The protoadapt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <utility>

namespace protoadapt {

// Every random draw in the library flows from one user seed through a named
// sub-stream ("init", "shuffle", ...) so that adding draws to one stream never
// perturbs another.
[[nodiscard]] std::mt19937_64 make_stream(std::uint64_t seed, std::string_view name);

// Portable standard normal draw (Box-Muller on the raw engine output). Unlike
// std::normal_distribution its sequence does not depend on the standard library.
[[nodiscard]] double standard_normal(std::mt19937_64& rng);

// Uniform draw in [0, bound) by rejection, portable across standard libraries.
[[nodiscard]] std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound);

// Fisher-Yates shuffle built on uniform_index.
template <typename It>
void portable_shuffle(It first, It last, std::mt19937_64& rng) {
  auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    auto j = uniform_index(rng, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace protoadapt
