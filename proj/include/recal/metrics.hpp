#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "recal/errors.hpp"
#include "recal/types.hpp"

namespace recal {

namespace detail {

// Lightweight non-owning view so the fitting loop can run metrics over raw
// working buffers without re-wrapping them into tables.
struct logits_view {
  const double* data = nullptr;
  std::size_t n = 0;
  std::size_t k = 0;
  const std::int64_t* labels = nullptr;  // may be null

  logits_view() = default;
  logits_view(const double* data_, std::size_t n_, std::size_t k_,
              const std::int64_t* labels_ = nullptr)
      : data(data_), n(n_), k(k_), labels(labels_) {}
  explicit logits_view(const logits_table& t)
      : data(t.values().data()), n(t.sample_count()), k(t.class_count()),
        labels(t.has_labels() ? t.labels().data() : nullptr) {}

  std::span<const double> row(std::size_t i) const { return {data + i * k, k}; }
};

// Argmax with ties broken toward the lowest class index.
inline std::size_t row_argmax(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

// Softmax probability of class `idx` within one logit row (max-subtracted).
inline double row_softmax_at(std::span<const double> row, std::size_t idx) {
  const double m = *std::max_element(row.begin(), row.end());
  double denom = 0.0;
  for (double v : row) denom += std::exp(v - m);
  return std::exp(row[idx] - m) / denom;
}

// Max-softmax confidence of one row: 1 / sum exp(z_j - z_max).
inline double row_confidence(std::span<const double> row) {
  const double m = *std::max_element(row.begin(), row.end());
  double denom = 0.0;
  for (double v : row) denom += std::exp(v - m);
  return 1.0 / denom;
}

// -log softmax(row)[label], capped so a vanishing probability never yields inf
// (equivalent to flooring the probability at 1e-300).
inline double row_nll(std::span<const double> row, std::int64_t label) {
  const double m = *std::max_element(row.begin(), row.end());
  double denom = 0.0;
  for (double v : row) denom += std::exp(v - m);
  const double raw = std::log(denom) - (row[static_cast<std::size_t>(label)] - m);
  const double cap = -std::log(1e-300);
  return std::min(raw, cap);
}

inline void require_labels(const logits_view& v, const char* op) {
  if (v.labels == nullptr) throw contract_error(std::string(op) + " requires labels");
}

}  // namespace detail

// Stable softmax of one logit row. Outputs are positive and sum to 1;
// the argmax is preserved.
inline std::vector<double> softmax(std::span<const double> logit_row) {
  if (logit_row.empty()) throw domain_error("softmax of an empty row");
  for (double v : logit_row) {
    if (!std::isfinite(v)) throw domain_error("softmax requires finite logits");
  }
  const double m = *std::max_element(logit_row.begin(), logit_row.end());
  std::vector<double> p(logit_row.size());
  double denom = 0.0;
  for (std::size_t j = 0; j < logit_row.size(); ++j) {
    p[j] = std::exp(logit_row[j] - m);
    denom += p[j];
  }
  for (double& v : p) v /= denom;
  return p;
}

struct reliability_bin {
  std::uint64_t sample_count = 0;
  double mean_confidence = 0.0;  // 0 when the bin is empty
  double mean_accuracy = 0.0;
};

// Equal-width bins over [0, 1]. Bin i (1-indexed) covers ((i-1)/B, i/B];
// a confidence of exactly 0 falls into bin 1.
struct reliability_bins {
  std::uint64_t bin_count = 0;
  std::vector<reliability_bin> bins;
};

namespace detail {

inline std::size_t bin_index(double confidence, std::size_t bin_count) {
  const double scaled = confidence * static_cast<double>(bin_count);
  auto idx = static_cast<std::ptrdiff_t>(std::ceil(scaled));
  if (idx < 1) idx = 1;
  if (idx > static_cast<std::ptrdiff_t>(bin_count)) idx = static_cast<std::ptrdiff_t>(bin_count);
  return static_cast<std::size_t>(idx - 1);
}

inline reliability_bins compute_bins(std::span<const double> confidences,
                                     std::span<const char> correct, std::size_t bin_count) {
  reliability_bins out;
  out.bin_count = bin_count;
  out.bins.resize(bin_count);
  std::vector<double> conf_sum(bin_count, 0.0);
  std::vector<double> acc_sum(bin_count, 0.0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    const std::size_t b = bin_index(confidences[i], bin_count);
    out.bins[b].sample_count += 1;
    conf_sum[b] += confidences[i];
    acc_sum[b] += correct[i] ? 1.0 : 0.0;
  }
  for (std::size_t b = 0; b < bin_count; ++b) {
    if (out.bins[b].sample_count > 0) {
      out.bins[b].mean_confidence = conf_sum[b] / static_cast<double>(out.bins[b].sample_count);
      out.bins[b].mean_accuracy = acc_sum[b] / static_cast<double>(out.bins[b].sample_count);
    }
  }
  return out;
}

inline reliability_bins reliability_impl(const logits_view& v, std::size_t bin_count) {
  require_labels(v, "reliability bins");
  std::vector<double> conf(v.n);
  std::vector<char> correct(v.n);
  for (std::size_t i = 0; i < v.n; ++i) {
    const auto row = v.row(i);
    const std::size_t pred = row_argmax(row);
    conf[i] = row_confidence(row);
    correct[i] = pred == static_cast<std::size_t>(v.labels[i]) ? 1 : 0;
  }
  return compute_bins(conf, correct, bin_count);
}

inline double ece_from_bins(const reliability_bins& rb, std::size_t n) {
  double ece = 0.0;
  for (const auto& b : rb.bins) {
    if (b.sample_count == 0) continue;
    ece += (static_cast<double>(b.sample_count) / static_cast<double>(n)) *
           std::fabs(b.mean_accuracy - b.mean_confidence);
  }
  return ece;
}

inline double ece_impl(const logits_view& v, std::size_t bin_count) {
  require_labels(v, "ece");
  if (bin_count < 1) throw contract_error("ece needs at least one bin");
  return ece_from_bins(reliability_impl(v, bin_count), v.n);
}

inline double nll_impl(const logits_view& v) {
  require_labels(v, "nll");
  double sum = 0.0;
  for (std::size_t i = 0; i < v.n; ++i) sum += row_nll(v.row(i), v.labels[i]);
  return sum / static_cast<double>(v.n);
}

inline double error_rate_impl(const logits_view& v) {
  require_labels(v, "error_rate");
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < v.n; ++i) {
    if (row_argmax(v.row(i)) != static_cast<std::size_t>(v.labels[i])) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(v.n);
}

}  // namespace detail

inline reliability_bins reliability(const logits_table& table, std::size_t bin_count) {
  if (bin_count < 1) throw contract_error("reliability needs at least one bin");
  return detail::reliability_impl(detail::logits_view(table), bin_count);
}

// Expected calibration error: bin-weighted mean |accuracy - confidence|.
inline double ece(const logits_table& table, std::size_t bin_count) {
  return detail::ece_impl(detail::logits_view(table), bin_count);
}

// Mean squared distance between softmax outputs and one-hot labels,
// divided by the class count.
inline double brier_normalized(const logits_table& table) {
  const detail::logits_view v(table);
  detail::require_labels(v, "brier_normalized");
  double sum = 0.0;
  for (std::size_t i = 0; i < v.n; ++i) {
    const auto p = softmax(v.row(i));
    for (std::size_t j = 0; j < v.k; ++j) {
      const double y = (static_cast<std::size_t>(v.labels[i]) == j) ? 1.0 : 0.0;
      const double d = p[j] - y;
      sum += d * d;
    }
  }
  return sum / (static_cast<double>(v.n) * static_cast<double>(v.k));
}

// Mean negative log-likelihood of the true class.
inline double nll(const logits_table& table) {
  return detail::nll_impl(detail::logits_view(table));
}

// Fraction of samples whose argmax differs from the label.
inline double error_rate(const logits_table& table) {
  return detail::error_rate_impl(detail::logits_view(table));
}

// Ranks of four group ECEs: 1 = lowest (best) to 4; ties share the lower rank.
inline std::array<int, 4> group_ranks(const std::array<double, 4>& group_eces) {
  for (double e : group_eces) {
    if (!std::isfinite(e)) throw contract_error("group rank requires finite ECE values");
  }
  std::array<int, 4> ranks{};
  for (int i = 0; i < 4; ++i) {
    int below = 0;
    for (int j = 0; j < 4; ++j) {
      if (group_eces[j] < group_eces[i]) ++below;
    }
    ranks[i] = below + 1;
  }
  return ranks;
}

// fraction[g][r-1]: share of parameters where group g+1 obtained rank r.
struct rank_distribution {
  std::array<std::array<double, 4>, 4> fraction{};
  std::size_t parameter_count = 0;
};

// Rank distribution of per-group ECEs across transformation parameters.
inline rank_distribution group_rank_analysis(std::span<const std::array<double, 4>> group_eces) {
  if (group_eces.empty()) throw contract_error("rank analysis needs at least one parameter");
  rank_distribution out;
  out.parameter_count = group_eces.size();
  for (const auto& quad : group_eces) {
    const auto ranks = group_ranks(quad);
    for (int g = 0; g < 4; ++g) out.fraction[g][ranks[g] - 1] += 1.0;
  }
  for (auto& row : out.fraction) {
    for (double& v : row) v /= static_cast<double>(out.parameter_count);
  }
  return out;
}

}  // namespace recal
