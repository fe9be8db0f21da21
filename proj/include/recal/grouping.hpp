#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "recal/errors.hpp"
#include "recal/metrics.hpp"
#include "recal/types.hpp"

namespace recal {

// Group number from the prediction/confidence comparison:
//   k = 2 * [y_hat == y_hat_t] + [p_hat >= p_hat_t] + 1
// Group 1: changed and increased; Group 2: changed, not increased;
// Group 3: unchanged and increased; Group 4: unchanged, not increased.
inline int group_number(std::size_t y_hat, std::size_t y_hat_t, double p_hat, double p_hat_t) {
  const int same = y_hat == y_hat_t ? 1 : 0;
  const int not_increased = p_hat >= p_hat_t ? 1 : 0;
  return 2 * same + not_increased + 1;
}

namespace detail {

inline void require_aligned(const logits_view& a, const logits_view& b, const char* op) {
  if (a.n != b.n || a.k != b.k)
    throw contract_error(std::string(op) + ": tables must share sample and class counts");
}

inline group_partition group_inputs_impl(const logits_view& z, const logits_view& z_t,
                                         confidence_comparison_mode mode) {
  require_aligned(z, z_t, "group_inputs");
  std::array<std::vector<std::size_t>, 4> groups;
  for (std::size_t i = 0; i < z.n; ++i) {
    const auto row = z.row(i);
    const auto row_t = z_t.row(i);
    const std::size_t y_hat = row_argmax(row);
    const std::size_t y_hat_t = row_argmax(row_t);
    const double p_hat = row_confidence(row);
    const double p_hat_t = mode == confidence_comparison_mode::transformed_max
                               ? row_confidence(row_t)
                               : row_softmax_at(row_t, y_hat);
    const bool changed = y_hat != y_hat_t;
    const bool increased = p_hat_t > p_hat;  // ties count as "not increased"
    if (changed && increased) groups[0].push_back(i);
    else if (changed) groups[1].push_back(i);
    else if (increased) groups[2].push_back(i);
    else groups[3].push_back(i);
  }
  return group_partition(std::move(groups), z.n);
}

}  // namespace detail

// Partition samples by how prediction and confidence respond to a lossy
// label-invariant transformation, comparing original against transformed
// logits row by row.
inline group_partition group_inputs(const logits_table& z, const logits_table& z_t,
                                    confidence_comparison_mode mode =
                                        confidence_comparison_mode::transformed_max) {
  return detail::group_inputs_impl(detail::logits_view(z), detail::logits_view(z_t), mode);
}

// Per-transform (ECE, size) of each group; the ECE of an empty group is NaN.
struct group_ece_entry {
  std::array<double, 4> ece{};
  std::array<std::uint64_t, 4> count{};
};

inline std::vector<group_ece_entry> group_ece_table(
    const logits_table& z, std::span<const logits_table> transformed, std::size_t bin_count,
    confidence_comparison_mode mode = confidence_comparison_mode::transformed_max) {
  if (!z.has_labels()) throw contract_error("group_ece_table requires labels");
  std::vector<group_ece_entry> out;
  out.reserve(transformed.size());
  for (const auto& z_t : transformed) {
    const auto part = group_inputs(z, z_t, mode);
    group_ece_entry entry;
    for (int g = 0; g < 4; ++g) {
      entry.count[g] = part.groups[g].size();
      if (part.groups[g].empty()) {
        entry.ece[g] = std::numeric_limits<double>::quiet_NaN();
      } else {
        entry.ece[g] = ece(z.select(part.groups[g]), bin_count);
      }
    }
    out.push_back(entry);
  }
  return out;
}

}  // namespace recal
