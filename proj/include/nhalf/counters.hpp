#pragma once

#include <cstdint>

namespace nhalf {

// Operation tallies for one or more forward passes. Callers own the counters;
// a null pointer disables counting.
struct OpCounters {
  std::uint64_t xnor_words = 0;
  std::uint64_t popcounts = 0;
  std::uint64_t int_adds = 0;
  std::uint64_t int_compares = 0;
  std::uint64_t float_ops = 0;

  OpCounters& operator+=(const OpCounters& o) {
    xnor_words += o.xnor_words;
    popcounts += o.popcounts;
    int_adds += o.int_adds;
    int_compares += o.int_compares;
    float_ops += o.float_ops;
    return *this;
  }

  bool operator==(const OpCounters&) const = default;
};

}  // namespace nhalf
