#pragma once

#include <cstdint>
#include <vector>

#include "recal/rng.hpp"
#include "recal/types.hpp"

namespace testutil {

// Random table with logits in roughly [-4, 4]; labeled tables get uniform
// random labels, so they are typically miscalibrated.
inline recal::logits_table random_table(recal::seeded_rng& rng, std::size_t n, std::size_t k,
                                        bool labeled) {
  std::vector<double> values(n * k);
  for (auto& v : values) v = rng.uniform(-4.0, 4.0);
  if (!labeled) return recal::logits_table(std::move(values), n, k);
  std::vector<std::int64_t> labels(n);
  for (auto& y : labels) y = static_cast<std::int64_t>(rng.uniform_index(k));
  return recal::logits_table(std::move(values), std::move(labels), n, k);
}

}  // namespace testutil
