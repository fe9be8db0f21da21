#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "recal/errors.hpp"
#include "recal/metrics.hpp"
#include "recal/types.hpp"

namespace recal {

// Bracketed 1-D search settings for the temperature fitter.
struct temperature_fit_config {
  double t_min = 0.05;
  double t_max = 20.0;
  double tolerance = 1e-6;
  std::size_t max_evals = 200;

  void validate() const {
    if (!(t_min > 0.0) || !(t_min < t_max)) throw contract_error("need 0 < t_min < t_max");
    if (!(tolerance > 0.0)) throw contract_error("tolerance must be positive");
    if (max_evals < 2) throw contract_error("max_evals must be at least 2");
  }
};

namespace detail {

// Mean NLL of the view with all logits divided by t, without materializing
// the scaled table.
inline double nll_at_temperature(const logits_view& v, double t) {
  double sum = 0.0;
  std::vector<double> scaled(v.k);
  for (std::size_t i = 0; i < v.n; ++i) {
    const auto row = v.row(i);
    for (std::size_t j = 0; j < v.k; ++j) scaled[j] = row[j] / t;
    sum += row_nll(scaled, v.labels[i]);
  }
  return sum / static_cast<double>(v.n);
}

inline double fit_temperature_impl(const logits_view& v, const temperature_fit_config& cfg) {
  require_labels(v, "fit_temperature");
  cfg.validate();

  // Golden-section search on NLL over [t_min, t_max].
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  const double invphi2 = 1.0 - invphi;
  double a = cfg.t_min;
  double b = cfg.t_max;
  double c = a + invphi2 * (b - a);
  double d = a + invphi * (b - a);
  double fc = nll_at_temperature(v, c);
  double fd = nll_at_temperature(v, d);
  std::size_t evals = 2;
  while (b - a > cfg.tolerance && evals < cfg.max_evals) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = a + invphi2 * (b - a);
      fc = nll_at_temperature(v, c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = nll_at_temperature(v, d);
    }
    ++evals;
  }
  const double t_star = (a + b) / 2.0;

  // Never return a temperature that degrades NLL relative to T = 1.
  const double at_star = nll_at_temperature(v, t_star);
  const double at_one = nll_at_temperature(v, 1.0);
  return at_star < at_one ? t_star : 1.0;
}

}  // namespace detail

// Divide every logit by T. Labels carry through; per-row argmax (and hence
// accuracy) is unchanged for any T > 0.
inline logits_table apply_temperature(const logits_table& table, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw domain_error("temperature must be positive and finite");
  std::vector<double> scaled(table.values().size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = table.values()[i] / t;
  return logits_table(std::move(scaled), table.labels_opt(), table.sample_count(),
                      table.class_count());
}

// Temperature minimizing NLL(z / T) over [t_min, t_max] via golden-section
// search, then compared against T = 1 so the result is never worse than the
// uncalibrated table on the fit set. Deterministic.
inline double fit_temperature(const logits_table& table,
                              const temperature_fit_config& cfg = {}) {
  return detail::fit_temperature_impl(detail::logits_view(table), cfg);
}

// Shrink a raw per-group temperature toward 1 by the group's share of the
// validation set: (1 - |G|/|D|) * 1 + |G|/|D| * raw. Exact at both endpoints.
inline double shrink_temperature(double raw, std::uint64_t group_size,
                                 std::uint64_t validation_size) {
  if (validation_size < 1) throw contract_error("validation size must be at least 1");
  if (group_size > validation_size) throw contract_error("group larger than validation set");
  if (!(raw > 0.0) || !std::isfinite(raw)) throw contract_error("raw temperature must be positive");
  const double w = static_cast<double>(group_size) / static_cast<double>(validation_size);
  return (1.0 - w) * 1.0 + w * raw;
}

}  // namespace recal
