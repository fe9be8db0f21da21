#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "recal/errors.hpp"
#include "recal/grouping.hpp"
#include "recal/io.hpp"
#include "recal/metrics.hpp"
#include "recal/rng.hpp"
#include "recal/temperature.hpp"
#include "recal/types.hpp"

namespace recal {

// Draw `count` transform parameters uniformly from [low, high]. The seed is
// recorded on the pool; the fitting loop continues the same stream.
inline transformation_pool build_pool(transform_kind kind, double low, double high,
                                      std::size_t count, std::uint64_t seed) {
  if (count < 1) throw contract_error("pool needs at least one entry");
  if (!(low > 0.0) || !(low <= high) || !(high <= 1.0))
    throw contract_error("pool range must satisfy 0 < low <= high <= 1");
  seeded_rng rng(seed);
  std::vector<transformation_spec> entries;
  entries.reserve(count);
  for (std::size_t i = 0; i < count; ++i) entries.emplace_back(kind, rng.uniform(low, high));
  return transformation_pool(std::move(entries), seed, low, high);
}

struct recal_fit_config {
  std::uint64_t max_iterations = 100;
  double stopping_delta = 1e-4;  // may be infinite (stop after one iteration)
  std::uint64_t ece_bins = 15;
  confidence_comparison_mode mode = confidence_comparison_mode::transformed_max;
  temperature_fit_config temperature;

  void validate() const {
    if (max_iterations < 1) throw contract_error("max_iterations must be at least 1");
    if (!(stopping_delta >= 0.0)) throw contract_error("stopping_delta must be non-negative");
    if (ece_bins < 1) throw contract_error("ece_bins must be at least 1");
    temperature.validate();
  }
};

struct fit_result {
  calibration_map map;
  // ECE of the validation logits before any iteration, then after each one.
  std::vector<double> ece_trace;
  logits_table calibrated_validation;
};

inline const std::vector<double>& ece_trace(const fit_result& r) noexcept { return r.ece_trace; }

namespace detail {

inline void require_fit_inputs(const logits_table& validation,
                               std::span<const logits_table> transformed,
                               const transformation_pool& pool) {
  if (!validation.has_labels()) throw contract_error("fitting requires validation labels");
  if (transformed.size() != pool.size())
    throw contract_error("need one transformed table per pool entry");
  for (const auto& t : transformed) {
    if (t.sample_count() != validation.sample_count() ||
        t.class_count() != validation.class_count())
      throw contract_error("transformed table shape does not match the validation table");
    if (t.has_labels() && t.labels() != validation.labels())
      throw contract_error("transformed table labels disagree with the validation table");
  }
}

inline void scale_rows(std::vector<double>& flat, std::size_t k,
                       std::span<const std::size_t> rows, double t) {
  for (std::size_t r : rows) {
    double* p = flat.data() + r * k;
    for (std::size_t j = 0; j < k; ++j) p[j] /= t;
  }
}

}  // namespace detail

// Iterative grouped temperature scaling. Each iteration samples one pool
// entry, splits the validation samples into four groups by how that
// transform moved prediction and confidence, fits a temperature per group,
// shrinks it toward 1 by the group's share of the data, and rescales those
// rows in both the running validation logits and the running logits of the
// sampled transform. Stops when the validation ECE moves less than
// stopping_delta between consecutive iterations.
inline fit_result fit(const logits_table& validation,
                      std::span<const logits_table> transformed,
                      const transformation_pool& pool, const recal_fit_config& config = {}) {
  config.validate();
  detail::require_fit_inputs(validation, transformed, pool);

  const std::size_t n = validation.sample_count();
  const std::size_t k = validation.class_count();
  const std::int64_t* labels = validation.labels().data();

  std::vector<double> cur = validation.values();
  std::vector<std::vector<double>> cur_t;
  cur_t.reserve(transformed.size());
  for (const auto& t : transformed) cur_t.push_back(t.values());

  const auto cur_view = [&] { return detail::logits_view(cur.data(), n, k, labels); };

  std::vector<double> trace;
  trace.push_back(detail::ece_impl(cur_view(), config.ece_bins));

  // Continue the stream build_pool started: one engine output was consumed
  // per pool entry, so skipping pool.size() outputs makes fit reproducible
  // from the pool alone.
  seeded_rng rng(pool.seed);
  rng.discard(pool.size());

  std::vector<calibration_iteration> iterations;
  std::vector<double> scratch_values;
  std::vector<std::int64_t> scratch_labels;

  for (std::uint64_t l = 0; l < config.max_iterations; ++l) {
    const std::size_t t_idx = rng.uniform_index(pool.size());
    const detail::logits_view t_view(cur_t[t_idx].data(), n, k);
    const group_partition part = detail::group_inputs_impl(cur_view(), t_view, config.mode);

    calibration_iteration it;
    it.transform_index = t_idx;
    for (int g = 0; g < 4; ++g) {
      const auto& rows = part.groups[static_cast<std::size_t>(g)];
      it.group_sizes[static_cast<std::size_t>(g)] = rows.size();
      double raw = 1.0;
      if (!rows.empty()) {
        scratch_values.clear();
        scratch_labels.clear();
        for (std::size_t r : rows) {
          const double* p = cur.data() + r * k;
          scratch_values.insert(scratch_values.end(), p, p + k);
          scratch_labels.push_back(labels[r]);
        }
        const detail::logits_view gv(scratch_values.data(), rows.size(), k,
                                     scratch_labels.data());
        raw = detail::fit_temperature_impl(gv, config.temperature);
      }
      const double shrunk = shrink_temperature(raw, rows.size(), n);
      it.raw_temperatures[static_cast<std::size_t>(g)] = raw;
      it.temperatures[static_cast<std::size_t>(g)] = shrunk;
      detail::scale_rows(cur, k, rows, shrunk);
      detail::scale_rows(cur_t[t_idx], k, rows, shrunk);
    }

    const double e = detail::ece_impl(cur_view(), config.ece_bins);
    it.validation_ece_after = e;
    iterations.push_back(it);
    trace.push_back(e);
    if (std::abs(e - trace[trace.size() - 2]) < config.stopping_delta) break;
  }

  map_config mc{config.max_iterations, config.stopping_delta, config.ece_bins, config.mode};
  std::string fp = fit_fingerprint(validation, pool, mc);
  calibration_map map(pool, std::move(iterations), mc, std::move(fp));
  logits_table calibrated(std::move(cur), validation.labels(), n, k);
  return fit_result{std::move(map), std::move(trace), std::move(calibrated)};
}

// Replay a fitted map on new logits. Iterations are reapplied in order: the
// stored transform index picks the transformed table, the samples are
// regrouped against the running logits, and each group's rows are divided by
// the stored temperature in both running tables. No refitting happens here,
// so labels are not needed. A sentinel transform index applies the stored
// Group 4 temperature to every row without touching any transformed table.
// Only pool entries some iteration references need a table; the rest may be
// nullopt.
inline logits_table apply(const logits_table& test,
                          std::span<const std::optional<logits_table>> transformed,
                          const calibration_map& map) {
  if (transformed.size() != map.pool.size())
    throw contract_error("need one (optional) transformed table slot per pool entry");
  const std::size_t n = test.sample_count();
  const std::size_t k = test.class_count();
  for (const auto& t : transformed) {
    if (t && (t->sample_count() != n || t->class_count() != k))
      throw contract_error("transformed table shape does not match the test table");
  }

  std::vector<double> cur = test.values();
  std::vector<std::optional<std::vector<double>>> cur_t(transformed.size());
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    if (transformed[i]) cur_t[i] = transformed[i]->values();
  }

  std::vector<std::size_t> all_rows(n);
  for (std::size_t i = 0; i < n; ++i) all_rows[i] = i;

  for (const auto& it : map.iterations) {
    if (it.transform_index == sentinel_transform_index) {
      detail::scale_rows(cur, k, all_rows, it.temperatures[3]);
      continue;
    }
    const std::size_t t_idx = static_cast<std::size_t>(it.transform_index);
    if (!cur_t[t_idx])
      throw contract_error("map references transform " + std::to_string(t_idx) +
                           " but no transformed table was supplied for it");
    const detail::logits_view zv(cur.data(), n, k);
    const detail::logits_view tv(cur_t[t_idx]->data(), n, k);
    const group_partition part = detail::group_inputs_impl(zv, tv, map.config.mode);
    for (int g = 0; g < 4; ++g) {
      const auto& rows = part.groups[static_cast<std::size_t>(g)];
      const double t = it.temperatures[static_cast<std::size_t>(g)];
      detail::scale_rows(cur, k, rows, t);
      detail::scale_rows(*cur_t[t_idx], k, rows, t);
    }
  }

  return logits_table(std::move(cur), test.labels_opt(), n, k);
}

inline logits_table apply(const logits_table& test, std::span<const logits_table> transformed,
                          const calibration_map& map) {
  std::vector<std::optional<logits_table>> slots;
  slots.reserve(transformed.size());
  for (const auto& t : transformed) slots.emplace_back(t);
  return apply(test, std::span<const std::optional<logits_table>>(slots), map);
}

}  // namespace recal
