#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "recal/errors.hpp"
#include "recal/recal.hpp"
#include "recal/rng.hpp"
#include "recal/types.hpp"

namespace recal {

// Simulated classifier outputs. Per sample: p ~ symmetric Dirichlet(alpha),
// label ~ Categorical(p), logits = sharpen_a * log p floored at log 1e-12.
// sharpen_a = 1 is calibrated by construction; larger values are
// overconfident by exactly that temperature.
inline logits_table synth_generate(std::size_t n, std::size_t k, double dirichlet_alpha,
                                   double sharpen_a, std::uint64_t seed) {
  if (n < 1) throw contract_error("need at least one sample");
  if (k < 2) throw contract_error("need at least two classes");
  if (!(dirichlet_alpha > 0.0) || !std::isfinite(dirichlet_alpha))
    throw contract_error("dirichlet_alpha must be positive");
  if (!(sharpen_a > 0.0) || !std::isfinite(sharpen_a))
    throw contract_error("sharpen_a must be positive");

  const double floor_log = std::log(1e-12);
  seeded_rng rng(seed);
  std::vector<double> values;
  values.reserve(n * k);
  std::vector<std::int64_t> labels;
  labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<double> p = rng.dirichlet(dirichlet_alpha, k);
    labels.push_back(static_cast<std::int64_t>(rng.categorical(p)));
    for (double pj : p) values.push_back(sharpen_a * std::max(std::log(pj), floor_log));
  }
  return logits_table(std::move(values), std::move(labels), n, k);
}

// Simulated lossy-transform response of a classifier: contract the logits
// toward the uniform vector and add Gaussian noise. Confidence drops in
// expectation as lossiness grows, and noise occasionally flips the argmax,
// so all four (changed, increased) groups occur. Labels carry through.
inline logits_table synth_lossy_logits(const logits_table& z, double lossiness, double noise_sd,
                                       std::uint64_t seed) {
  if (!(lossiness >= 0.0) || !(lossiness <= 1.0)) throw contract_error("lossiness must lie in [0, 1]");
  if (!(noise_sd >= 0.0) || !std::isfinite(noise_sd))
    throw contract_error("noise_sd must be non-negative");

  seeded_rng rng(seed);
  std::vector<double> values(z.values().size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    double v = (1.0 - lossiness) * z.values()[i];
    if (noise_sd > 0.0) v += noise_sd * rng.normal();
    values[i] = v;
  }
  return logits_table(std::move(values), z.labels_opt(), z.sample_count(), z.class_count());
}

namespace detail {

inline logits_table concat_rows(const logits_table& a, const logits_table& b) {
  if (a.class_count() != b.class_count() || a.has_labels() != b.has_labels())
    throw contract_error("cannot concatenate mismatched tables");
  std::vector<double> values = a.values();
  values.insert(values.end(), b.values().begin(), b.values().end());
  std::optional<std::vector<std::int64_t>> labels;
  if (a.has_labels()) {
    labels = a.labels();
    labels->insert(labels->end(), b.labels().begin(), b.labels().end());
  }
  return logits_table(std::move(values), std::move(labels),
                      a.sample_count() + b.sample_count(), a.class_count());
}

}  // namespace detail

// Diagnostics-only record of how a two-cohort scenario was built. Calibrators
// never see any of this; tests use it to verify the construction.
struct scenario_descriptor {
  std::size_t cohort_a_count = 0;  // first cohort_a_count rows of every split
  double a_sharp = 1.0;
  double transform_gap = 0.0;
  double base_loss = 0.0;
  double noise_sd = 0.0;
  double dirichlet_alpha = 1.0;
  std::string note;
};

struct cohort_scenario {
  logits_table validation;
  std::vector<logits_table> validation_transformed;
  logits_table test;
  std::vector<logits_table> test_transformed;
  transformation_pool pool;
  scenario_descriptor descriptor;
};

// Two-cohort testbed for grouped calibration. Cohort A (the first half of
// every split) has its logits sharpened by a_sharp and reacts strongly to
// the lossy transforms; cohort B is calibrated and reacts weakly. A pool
// entry with parameter tau contracts cohort B by tau * base_loss, while
// cohort A ends up at an effective sharpening of 1 - tau * min(0.95,
// base_loss + transform_gap), far flatter than where it started. With
// a_sharp = 1 and transform_gap = 0 both cohorts receive the identical
// treatment and the scenario degenerates to a homogeneous one.
inline cohort_scenario synth_cohort_scenario(std::size_t n, std::size_t k, double a_sharp,
                                             double transform_gap, std::uint64_t seed) {
  if (n < 4) throw contract_error("need at least four samples");
  if (k < 2) throw contract_error("need at least two classes");
  if (!(a_sharp >= 1.0) || !std::isfinite(a_sharp))
    throw contract_error("a_sharp must be at least 1");
  if (!(transform_gap >= 0.0) || !std::isfinite(transform_gap))
    throw contract_error("transform_gap must be non-negative");

  const double base_loss = 0.45;
  const double noise_sd = 0.5;
  const double alpha = 1.0;
  const std::size_t pool_count = 10;
  const std::size_t n_a = n / 2;
  const std::size_t n_b = n - n_a;

  std::mt19937_64 seeder(seed);
  const std::uint64_t seed_val_a = seeder();
  const std::uint64_t seed_val_b = seeder();
  const std::uint64_t seed_test_a = seeder();
  const std::uint64_t seed_test_b = seeder();
  const std::uint64_t seed_pool = seeder();

  const logits_table val = detail::concat_rows(synth_generate(n_a, k, alpha, a_sharp, seed_val_a),
                                               synth_generate(n_b, k, alpha, 1.0, seed_val_b));
  const logits_table test = detail::concat_rows(synth_generate(n_a, k, alpha, a_sharp, seed_test_a),
                                                synth_generate(n_b, k, alpha, 1.0, seed_test_b));

  transformation_pool pool =
      build_pool(transform_kind::synthetic_lossy, 0.1, 0.9, pool_count, seed_pool);

  const double strong = std::min(0.95, base_loss + transform_gap);
  const auto split_lossy = [&](const logits_table& z, double tau, std::uint64_t sa,
                               std::uint64_t sb) {
    std::vector<std::size_t> rows_a(n_a);
    for (std::size_t i = 0; i < n_a; ++i) rows_a[i] = i;
    std::vector<std::size_t> rows_b(n_b);
    for (std::size_t i = 0; i < n_b; ++i) rows_b[i] = n_a + i;
    const double loss_a = 1.0 - (1.0 - tau * strong) / a_sharp;
    const double loss_b = tau * base_loss;
    return detail::concat_rows(synth_lossy_logits(z.select(rows_a), loss_a, noise_sd, sa),
                               synth_lossy_logits(z.select(rows_b), loss_b, noise_sd, sb));
  };

  std::vector<logits_table> val_t;
  std::vector<logits_table> test_t;
  val_t.reserve(pool_count);
  test_t.reserve(pool_count);
  for (const auto& entry : pool.entries) {
    const std::uint64_t sva = seeder();
    const std::uint64_t svb = seeder();
    const std::uint64_t sta = seeder();
    const std::uint64_t stb = seeder();
    val_t.push_back(split_lossy(val, entry.parameter, sva, svb));
    test_t.push_back(split_lossy(test, entry.parameter, sta, stb));
  }

  scenario_descriptor desc;
  desc.cohort_a_count = n_a;
  desc.a_sharp = a_sharp;
  desc.transform_gap = transform_gap;
  desc.base_loss = base_loss;
  desc.noise_sd = noise_sd;
  desc.dirichlet_alpha = alpha;
  desc.note =
      "cohort A: logits = a_sharp * log p, lossiness(tau) = 1 - (1 - tau * min(0.95, "
      "base_loss + transform_gap)) / a_sharp; cohort B: logits = log p, lossiness(tau) = "
      "tau * base_loss";

  return cohort_scenario{val,  std::move(val_t), test, std::move(test_t),
                         std::move(pool), std::move(desc)};
}

}  // namespace recal
