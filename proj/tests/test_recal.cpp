#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "recal/recal.hpp"
#include "recal/synth.hpp"

#include "helpers.hpp"

using namespace recal;
using Catch::Matchers::WithinAbs;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

std::vector<logits_table> lossy_pool_tables(const logits_table& z, const transformation_pool& pool,
                                            std::uint64_t seed_base) {
  std::vector<logits_table> out;
  out.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    out.push_back(synth_lossy_logits(z, pool.entries[i].parameter * 0.6, 0.4, seed_base + i));
  }
  return out;
}

}  // namespace

TEST_CASE("build_pool draws parameters inside the range, deterministically") {
  const transformation_pool a = build_pool(transform_kind::zoom_out, 0.1, 0.9, 20, 42);
  const transformation_pool b = build_pool(transform_kind::zoom_out, 0.1, 0.9, 20, 42);
  CHECK(a == b);
  CHECK(a.size() == 20);
  CHECK(a.seed == 42);
  for (const auto& e : a.entries) {
    CHECK(e.kind == transform_kind::zoom_out);
    CHECK(e.parameter >= 0.1);
    CHECK(e.parameter <= 0.9);
  }

  const transformation_pool c = build_pool(transform_kind::zoom_out, 0.1, 0.9, 20, 43);
  CHECK(a.entries != c.entries);

  const transformation_pool fixed = build_pool(transform_kind::brightness, 0.5, 0.5, 3, 1);
  for (const auto& e : fixed.entries) CHECK(e.parameter == 0.5);

  CHECK_THROWS_AS(build_pool(transform_kind::zoom_out, 0.1, 0.9, 0, 1), contract_error);
  CHECK_THROWS_AS(build_pool(transform_kind::zoom_out, 0.0, 0.9, 5, 1), contract_error);
  CHECK_THROWS_AS(build_pool(transform_kind::zoom_out, 0.9, 0.1, 5, 1), contract_error);
  CHECK_THROWS_AS(build_pool(transform_kind::zoom_out, 0.1, 1.5, 5, 1), contract_error);
}

TEST_CASE("an identity pool reduces to plain temperature scaling") {
  const logits_table z = synth_generate(2000, 8, 1.0, 2.0, 21);
  const transformation_pool pool({{transform_kind::synthetic_lossy, 1.0}}, 5, 1.0, 1.0);
  const std::vector<logits_table> transformed{z};

  recal_fit_config cfg;
  cfg.stopping_delta = inf;  // one iteration, recorded and stopped
  const fit_result res = fit(z, transformed, pool, cfg);

  REQUIRE(res.map.iterations.size() == 1);
  REQUIRE(res.ece_trace.size() == 2);
  const calibration_iteration& it = res.map.iterations[0];
  CHECK(it.group_sizes == std::array<std::uint64_t, 4>{0, 0, 0, 2000});
  CHECK(it.raw_temperatures[0] == 1.0);
  CHECK(it.raw_temperatures[1] == 1.0);
  CHECK(it.raw_temperatures[2] == 1.0);
  CHECK(it.temperatures[3] == it.raw_temperatures[3]);

  const double t_global = fit_temperature(z);
  CHECK_THAT(it.raw_temperatures[3], WithinAbs(t_global, 1e-6));

  const double ece_ts = ece(apply_temperature(z, t_global), cfg.ece_bins);
  CHECK_THAT(res.ece_trace.back(), WithinAbs(ece_ts, 1e-9));
  CHECK_THAT(ece(res.calibrated_validation, cfg.ece_bins), WithinAbs(ece_ts, 1e-9));
}

TEST_CASE("stopping rules control the iteration count") {
  const logits_table z = synth_generate(800, 5, 1.0, 2.0, 33);
  const transformation_pool pool = build_pool(transform_kind::synthetic_lossy, 0.1, 0.9, 3, 17);
  const std::vector<logits_table> transformed = lossy_pool_tables(z, pool, 500);

  SECTION("infinite delta stops after the first iteration") {
    recal_fit_config cfg;
    cfg.stopping_delta = inf;
    const fit_result res = fit(z, transformed, pool, cfg);
    CHECK(res.map.iterations.size() == 1);
    CHECK(res.ece_trace.size() == 2);
  }
  SECTION("zero delta always runs to max_iterations") {
    recal_fit_config cfg;
    cfg.stopping_delta = 0.0;
    cfg.max_iterations = 7;
    const fit_result res = fit(z, transformed, pool, cfg);
    CHECK(res.map.iterations.size() == 7);
    CHECK(res.ece_trace.size() == 8);
  }
  SECTION("trace always holds one more entry than iterations") {
    recal_fit_config cfg;
    cfg.max_iterations = 30;
    const fit_result res = fit(z, transformed, pool, cfg);
    CHECK(res.ece_trace.size() == res.map.iterations.size() + 1);
    for (std::size_t l = 0; l < res.map.iterations.size(); ++l) {
      CHECK(res.map.iterations[l].validation_ece_after == res.ece_trace[l + 1]);
    }
  }
}

TEST_CASE("fit output satisfies the recorded invariants") {
  const logits_table z = synth_generate(1500, 6, 1.0, 2.5, 41);
  const transformation_pool pool = build_pool(transform_kind::synthetic_lossy, 0.2, 0.8, 4, 19);
  const std::vector<logits_table> transformed = lossy_pool_tables(z, pool, 900);

  recal_fit_config cfg;
  cfg.max_iterations = 12;
  cfg.stopping_delta = 0.0;
  const fit_result res = fit(z, transformed, pool, cfg);

  CHECK(res.map.fingerprint ==
        fit_fingerprint(z, pool, map_config{cfg.max_iterations, cfg.stopping_delta, cfg.ece_bins,
                                            cfg.mode}));
  for (const auto& it : res.map.iterations) {
    CHECK(it.transform_index < pool.size());
    CHECK(it.group_sizes[0] + it.group_sizes[1] + it.group_sizes[2] + it.group_sizes[3] == 1500);
    for (int g = 0; g < 4; ++g) {
      const double lo = std::min(1.0, it.raw_temperatures[g]);
      const double hi = std::max(1.0, it.raw_temperatures[g]);
      CHECK(it.temperatures[g] >= lo - 1e-12);
      CHECK(it.temperatures[g] <= hi + 1e-12);
      if (it.group_sizes[g] == 0) CHECK(it.raw_temperatures[g] == 1.0);
    }
  }

  // The recursion should be reducing miscalibration on this overconfident
  // data by a wide margin.
  CHECK(res.ece_trace.back() < res.ece_trace.front() * 0.5);
}

TEST_CASE("fit validates its inputs") {
  const logits_table z = synth_generate(100, 4, 1.0, 2.0, 51);
  const transformation_pool pool = build_pool(transform_kind::synthetic_lossy, 0.1, 0.9, 2, 3);
  const std::vector<logits_table> transformed = lossy_pool_tables(z, pool, 700);

  const std::vector<logits_table> too_few{transformed[0]};
  CHECK_THROWS_AS(fit(z, too_few, pool, {}), contract_error);

  const logits_table unlabeled(z.values(), 100, 4);
  CHECK_THROWS_AS(fit(unlabeled, transformed, pool, {}), contract_error);

  const std::vector<logits_table> misshapen{transformed[0],
                                            synth_generate(99, 4, 1.0, 2.0, 52)};
  CHECK_THROWS_AS(fit(z, misshapen, pool, {}), contract_error);

  std::vector<std::int64_t> wrong_labels = z.labels();
  wrong_labels[0] = (wrong_labels[0] + 1) % 4;
  const std::vector<logits_table> relabeled{
      transformed[0], logits_table(transformed[1].values(), wrong_labels, 100, 4)};
  CHECK_THROWS_AS(fit(z, relabeled, pool, {}), contract_error);

  recal_fit_config bad;
  bad.max_iterations = 0;
  CHECK_THROWS_AS(fit(z, transformed, pool, bad), contract_error);
  bad = {};
  bad.stopping_delta = -1.0;
  CHECK_THROWS_AS(fit(z, transformed, pool, bad), contract_error);
  bad = {};
  bad.ece_bins = 0;
  CHECK_THROWS_AS(fit(z, transformed, pool, bad), contract_error);
}

TEST_CASE("apply replays the fit exactly on the fit inputs") {
  const logits_table z = synth_generate(1200, 7, 1.0, 2.0, 61);
  const transformation_pool pool = build_pool(transform_kind::synthetic_lossy, 0.1, 0.9, 3, 23);
  const std::vector<logits_table> transformed = lossy_pool_tables(z, pool, 1100);

  recal_fit_config cfg;
  cfg.max_iterations = 10;
  cfg.stopping_delta = 0.0;
  const fit_result res = fit(z, transformed, pool, cfg);

  const logits_table replayed = apply(z, std::span<const logits_table>(transformed), res.map);
  CHECK(replayed.values() == res.calibrated_validation.values());
  CHECK(replayed.labels() == z.labels());
}

TEST_CASE("apply preserves the error rate on held-out data") {
  const logits_table val = synth_generate(1500, 6, 1.0, 2.2, 71);
  const logits_table test = synth_generate(1500, 6, 1.0, 2.2, 72);
  const transformation_pool pool = build_pool(transform_kind::synthetic_lossy, 0.1, 0.9, 3, 29);
  const std::vector<logits_table> val_t = lossy_pool_tables(val, pool, 1300);
  const std::vector<logits_table> test_t = lossy_pool_tables(test, pool, 1400);

  recal_fit_config cfg;
  cfg.max_iterations = 15;
  const fit_result res = fit(val, val_t, pool, cfg);
  const logits_table calibrated = apply(test, std::span<const logits_table>(test_t), res.map);
  CHECK(error_rate(calibrated) == error_rate(test));
}

TEST_CASE("two fits from the same inputs serialize identically") {
  const logits_table z = synth_generate(600, 5, 1.0, 2.0, 81);
  const transformation_pool pool = build_pool(transform_kind::synthetic_lossy, 0.1, 0.9, 4, 31);
  const std::vector<logits_table> transformed = lossy_pool_tables(z, pool, 1700);

  const fit_result a = fit(z, transformed, pool, {});
  const fit_result b = fit(z, transformed, pool, {});
  CHECK(a.map == b.map);
  CHECK(serialize_map(a.map) == serialize_map(b.map));
  CHECK(a.calibrated_validation == b.calibrated_validation);
}

TEST_CASE("apply with a hand-built one-iteration map scales by group") {
  // Rows land in groups 1..4 (transformed_max): see the grouping tests for
  // the per-row reasoning.
  const logits_table test({1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0}, 4, 2);
  const logits_table test_t({-2.0, 2.0, -0.1, 0.1, 3.0, 0.0, 0.5, 0.0}, 4, 2);

  const transformation_pool pool({{transform_kind::synthetic_lossy, 0.5}}, 1, 0.5, 0.5);
  calibration_iteration it;
  it.transform_index = 0;
  it.raw_temperatures = {3.0, 4.0, 5.0, 6.0};
  it.temperatures = {2.0, 3.0, 4.0, 5.0};
  it.group_sizes = {1, 1, 1, 1};
  it.validation_ece_after = 0.0;
  const calibration_map map(pool, {it}, {}, "fp");

  const std::vector<logits_table> transformed{test_t};
  const logits_table out = apply(test, std::span<const logits_table>(transformed), map);
  CHECK(out.row(0)[0] == 1.0 / 2.0);
  CHECK(out.row(1)[0] == 1.0 / 3.0);
  CHECK(out.row(2)[0] == 1.0 / 4.0);
  CHECK(out.row(3)[0] == 1.0 / 5.0);
  for (int i = 0; i < 4; ++i) CHECK(out.row(i)[1] == 0.0);
}

TEST_CASE("a sentinel iteration scales every row with no transformed table") {
  const logits_table test({2.0, 0.0, -1.0, 3.0}, {0, 1}, 2, 2);
  const transformation_pool pool({{transform_kind::synthetic_lossy, 1.0}}, 0, 1.0, 1.0);
  calibration_iteration it;
  it.transform_index = sentinel_transform_index;
  it.raw_temperatures = {2.5, 2.5, 2.5, 2.5};
  it.temperatures = {2.5, 2.5, 2.5, 2.5};
  it.group_sizes = {0, 0, 0, 2};
  it.validation_ece_after = 0.0;
  const calibration_map map(pool, {it}, {}, "fp");

  const std::vector<std::optional<logits_table>> none{std::nullopt};
  const logits_table out = apply(test, std::span<const std::optional<logits_table>>(none), map);
  CHECK(out.values() == apply_temperature(test, 2.5).values());
  CHECK(out.labels() == test.labels());
}

TEST_CASE("a map with no iterations leaves the input untouched") {
  const logits_table test({2.0, 0.0, -1.0, 3.0}, 2, 2);
  const transformation_pool pool({{transform_kind::synthetic_lossy, 1.0}}, 0, 1.0, 1.0);
  const calibration_map map(pool, {}, {}, "fp");
  const std::vector<std::optional<logits_table>> none{std::nullopt};
  const logits_table out = apply(test, std::span<const std::optional<logits_table>>(none), map);
  CHECK(out == test);
}

TEST_CASE("apply validates its inputs") {
  const logits_table z = synth_generate(50, 4, 1.0, 2.0, 91);
  const transformation_pool pool = build_pool(transform_kind::synthetic_lossy, 0.1, 0.9, 2, 37);
  const std::vector<logits_table> transformed = lossy_pool_tables(z, pool, 1900);
  const fit_result res = fit(z, transformed, pool, {});

  // Wrong slot count.
  const std::vector<logits_table> one_table{transformed[0]};
  CHECK_THROWS_AS(apply(z, std::span<const logits_table>(one_table), res.map), contract_error);

  // A referenced entry must carry a table.
  std::vector<std::optional<logits_table>> slots{std::nullopt, std::nullopt};
  bool references_both = true;
  for (const auto& it : res.map.iterations) {
    if (it.transform_index == 0) slots[0] = transformed[0];
  }
  for (const auto& slot : slots) references_both = references_both && slot.has_value();
  if (!references_both) {
    CHECK_THROWS_AS(apply(z, std::span<const std::optional<logits_table>>(slots), res.map),
                    contract_error);
  }

  // Shape mismatch.
  const std::vector<logits_table> misshapen{
      synth_generate(49, 4, 1.0, 2.0, 92), synth_generate(49, 4, 1.0, 2.0, 93)};
  const logits_table short_test = synth_generate(49, 4, 1.0, 2.0, 94);
  CHECK_THROWS_AS(apply(z, std::span<const logits_table>(misshapen), res.map), contract_error);
  CHECK_NOTHROW(apply(short_test, std::span<const logits_table>(misshapen), res.map));
}

TEST_CASE("grouped recursion beats one global temperature on two-cohort data") {
  const cohort_scenario sc = synth_cohort_scenario(6000, 10, 3.0, 0.4, 97);

  const fit_result res = fit(sc.validation, sc.validation_transformed, sc.pool, {});
  const logits_table cal_test =
      apply(sc.test, std::span<const logits_table>(sc.test_transformed), res.map);
  const double ece_grouped = ece(cal_test, 15);

  const double t_global = fit_temperature(sc.validation);
  const double ece_global = ece(apply_temperature(sc.test, t_global), 15);

  CHECK(ece_grouped < ece_global);
  CHECK(error_rate(cal_test) == error_rate(sc.test));
}
