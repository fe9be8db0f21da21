#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "recal/errors.hpp"

namespace recal {

// N x K matrix of raw classifier scores plus optional integer labels.
// The universal currency of the toolkit: fitting consumes labeled tables,
// runtime application consumes unlabeled ones. Immutable after construction.
class logits_table {
public:
  logits_table(std::vector<double> values, std::size_t n, std::size_t k)
      : logits_table(std::move(values), std::nullopt, n, k) {}

  logits_table(std::vector<double> values, std::vector<std::int64_t> labels, std::size_t n,
               std::size_t k)
      : logits_table(std::move(values), std::optional<std::vector<std::int64_t>>(std::move(labels)),
                     n, k) {}

  logits_table(std::vector<double> values, std::optional<std::vector<std::int64_t>> labels,
               std::size_t n, std::size_t k)
      : values_(std::move(values)), labels_(std::move(labels)), n_(n), k_(k) {
    if (n_ < 1) throw contract_error("logits table needs at least one sample");
    if (k_ < 2) throw contract_error("logits table needs at least two classes");
    if (values_.size() != n_ * k_) throw contract_error("logits size does not match N x K");
    for (double v : values_) {
      if (!std::isfinite(v)) throw contract_error("logits must be finite");
    }
    if (labels_) {
      if (labels_->size() != n_) throw contract_error("label count does not match sample count");
      for (std::int64_t y : *labels_) {
        if (y < 0 || static_cast<std::size_t>(y) >= k_)
          throw contract_error("label out of class range");
      }
    }
  }

  std::size_t sample_count() const noexcept { return n_; }
  std::size_t class_count() const noexcept { return k_; }
  bool has_labels() const noexcept { return labels_.has_value(); }

  const std::vector<std::int64_t>& labels() const {
    if (!labels_) throw contract_error("labels required but absent");
    return *labels_;
  }

  const std::optional<std::vector<std::int64_t>>& labels_opt() const noexcept { return labels_; }
  const std::vector<double>& values() const noexcept { return values_; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * k_, k_};
  }

  // Sub-table of the given rows, labels carried along when present.
  logits_table select(std::span<const std::size_t> rows) const {
    std::vector<double> vals;
    vals.reserve(rows.size() * k_);
    for (std::size_t r : rows) {
      const auto rv = row(r);
      vals.insert(vals.end(), rv.begin(), rv.end());
    }
    std::optional<std::vector<std::int64_t>> labs;
    if (labels_) {
      labs.emplace();
      labs->reserve(rows.size());
      for (std::size_t r : rows) labs->push_back((*labels_)[r]);
    }
    return logits_table(std::move(vals), std::move(labs), rows.size(), k_);
  }

  bool operator==(const logits_table&) const = default;

private:
  std::vector<double> values_;
  std::optional<std::vector<std::int64_t>> labels_;
  std::size_t n_;
  std::size_t k_;
};

// One lossy label-invariant transform: what to do and how strongly.
enum class transform_kind { zoom_out, brightness, synthetic_lossy };

inline std::string to_string(transform_kind k) {
  switch (k) {
    case transform_kind::zoom_out: return "zoom_out";
    case transform_kind::brightness: return "brightness";
    case transform_kind::synthetic_lossy: return "synthetic_lossy";
  }
  throw contract_error("unknown transform kind");
}

inline transform_kind transform_kind_from_string(const std::string& s) {
  if (s == "zoom_out") return transform_kind::zoom_out;
  if (s == "brightness") return transform_kind::brightness;
  if (s == "synthetic_lossy") return transform_kind::synthetic_lossy;
  throw format_error("unknown transform kind: " + s);
}

struct transformation_spec {
  transform_kind kind;
  double parameter;  // in (0, 1]

  transformation_spec(transform_kind kind_, double parameter_)
      : kind(kind_), parameter(parameter_) {
    if (!(parameter > 0.0) || !(parameter <= 1.0) || !std::isfinite(parameter))
      throw contract_error("transformation parameter must lie in (0, 1]");
  }

  bool operator==(const transformation_spec&) const = default;
};

// Ordered list of transforms plus the seed and range they were drawn from.
struct transformation_pool {
  std::vector<transformation_spec> entries;
  std::uint64_t seed = 0;
  double range_low = 0.0;
  double range_high = 0.0;

  transformation_pool(std::vector<transformation_spec> entries_, std::uint64_t seed_,
                      double range_low_, double range_high_)
      : entries(std::move(entries_)), seed(seed_), range_low(range_low_), range_high(range_high_) {
    if (entries.empty()) throw contract_error("transformation pool must not be empty");
    if (!(range_low > 0.0) || !(range_low <= range_high) || !(range_high <= 1.0))
      throw contract_error("pool range must satisfy 0 < low <= high <= 1");
    for (const auto& e : entries) {
      if (e.parameter < range_low || e.parameter > range_high)
        throw contract_error("pool entry parameter outside declared range");
    }
  }

  std::size_t size() const noexcept { return entries.size(); }

  bool operator==(const transformation_pool&) const = default;
};

// How the transformed input's confidence is read when comparing against the
// original. transformed_max takes the transformed row's own max-softmax
// probability; original_index reads the transformed softmax at the original
// prediction's class.
enum class confidence_comparison_mode { transformed_max, original_index };

inline std::string to_string(confidence_comparison_mode m) {
  return m == confidence_comparison_mode::transformed_max ? "transformed_max" : "original_index";
}

inline confidence_comparison_mode comparison_mode_from_string(const std::string& s) {
  if (s == "transformed_max") return confidence_comparison_mode::transformed_max;
  if (s == "original_index") return confidence_comparison_mode::original_index;
  throw format_error("unknown confidence comparison mode: " + s);
}

// Disjoint four-way split of sample indices by (prediction changed?,
// confidence increased?). groups[0] is Group 1, ..., groups[3] is Group 4.
struct group_partition {
  std::array<std::vector<std::size_t>, 4> groups;

  group_partition(std::array<std::vector<std::size_t>, 4> groups_, std::size_t n)
      : groups(std::move(groups_)) {
    std::vector<char> seen(n, 0);
    std::size_t total = 0;
    for (const auto& g : groups) {
      for (std::size_t idx : g) {
        if (idx >= n || seen[idx]) throw contract_error("group partition is not a partition");
        seen[idx] = 1;
      }
      total += g.size();
    }
    if (total != n) throw contract_error("group partition does not cover all samples");
  }

  std::array<std::size_t, 4> sizes() const noexcept {
    return {groups[0].size(), groups[1].size(), groups[2].size(), groups[3].size()};
  }
};

// Marks an iteration that applies one shared temperature to every row with
// no grouping and no transformed table (plain temperature-scaling maps).
inline constexpr std::uint64_t sentinel_transform_index =
    std::numeric_limits<std::uint64_t>::max();

// One fitting iteration: which pool entry was sampled, the per-group raw and
// shrunken temperatures, the group sizes, and the validation ECE afterwards.
struct calibration_iteration {
  std::uint64_t transform_index = 0;
  std::array<double, 4> raw_temperatures{1.0, 1.0, 1.0, 1.0};
  std::array<double, 4> temperatures{1.0, 1.0, 1.0, 1.0};
  std::array<std::uint64_t, 4> group_sizes{0, 0, 0, 0};
  double validation_ece_after = 0.0;

  void validate() const {
    for (int k = 0; k < 4; ++k) {
      const double raw = raw_temperatures[k];
      const double shrunk = temperatures[k];
      if (!(raw > 0.0) || !std::isfinite(raw)) throw contract_error("raw temperature must be positive");
      if (!(shrunk > 0.0) || !std::isfinite(shrunk))
        throw contract_error("temperature must be positive");
      const double lo = std::min(1.0, raw);
      const double hi = std::max(1.0, raw);
      const double slack = 1e-12 * hi + 1e-300;
      if (shrunk < lo - slack || shrunk > hi + slack)
        throw contract_error("temperature outside the [1, raw] interval");
    }
    if (!(validation_ece_after >= 0.0) || !(validation_ece_after <= 1.0))
      throw contract_error("validation ECE must lie in [0, 1]");
  }

  bool operator==(const calibration_iteration&) const = default;
};

struct map_config {
  std::uint64_t max_iterations = 100;
  double stopping_delta = 1e-4;
  std::uint64_t ece_bins = 15;
  confidence_comparison_mode mode = confidence_comparison_mode::transformed_max;

  bool operator==(const map_config&) const = default;
};

// The persisted output of fitting: pool, ordered iterations, configuration,
// and a fingerprint of the fit inputs for provenance.
struct calibration_map {
  transformation_pool pool;
  std::vector<calibration_iteration> iterations;
  map_config config;
  std::string fingerprint;

  calibration_map(transformation_pool pool_, std::vector<calibration_iteration> iterations_,
                  map_config config_, std::string fingerprint_)
      : pool(std::move(pool_)), iterations(std::move(iterations_)), config(config_),
        fingerprint(std::move(fingerprint_)) {
    if (iterations.size() > config.max_iterations)
      throw contract_error("more iterations than the configured maximum");
    std::uint64_t validation_n = 0;
    for (const auto& it : iterations) {
      it.validate();
      if (it.transform_index != sentinel_transform_index && it.transform_index >= pool.size())
        throw contract_error("iteration references a transform outside the pool");
      const std::uint64_t sum =
          it.group_sizes[0] + it.group_sizes[1] + it.group_sizes[2] + it.group_sizes[3];
      if (validation_n == 0) validation_n = sum;
      if (sum != validation_n)
        throw contract_error("group sizes do not sum consistently across iterations");
    }
  }

  bool operator==(const calibration_map&) const = default;
};

// N x C x H x W stack of image planes with values in [0, 1].
struct image_tensor_set {
  std::vector<float> values;
  std::size_t n = 0, c = 0, h = 0, w = 0;

  image_tensor_set(std::vector<float> values_, std::size_t n_, std::size_t c_, std::size_t h_,
                   std::size_t w_)
      : values(std::move(values_)), n(n_), c(c_), h(h_), w(w_) {
    if (n < 1 || c < 1 || h < 1 || w < 1) throw contract_error("tensor dims must be positive");
    if (values.size() != n * c * h * w) throw contract_error("tensor value count does not match dims");
    for (float v : values) {
      if (!(v >= 0.0f) || !(v <= 1.0f)) throw contract_error("tensor values must lie in [0, 1]");
    }
  }

  std::span<const float> plane(std::size_t ni, std::size_t ci) const {
    return {values.data() + (ni * c + ci) * h * w, h * w};
  }

  bool operator==(const image_tensor_set&) const = default;
};

}  // namespace recal
