#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recal/io.hpp"
#include "recal/recal.hpp"
#include "recal/synth.hpp"
#include "recal/transforms.hpp"

namespace {

using namespace recal;

struct pool_flag {
  transform_kind kind = transform_kind::synthetic_lossy;
  double low = 0.0;
  double high = 0.0;
  std::size_t count = 0;
};

// Compact pool notation kind:low:high:count, e.g. z:0.1:0.9:20.
pool_flag parse_pool_flag(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == ':') {
      parts.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  if (parts.size() != 4)
    throw CLI::ValidationError("--pool", "expected kind:low:high:count, got '" + text + "'");

  pool_flag out;
  if (parts[0] == "z" || parts[0] == "zoom" || parts[0] == "zoom_out") {
    out.kind = transform_kind::zoom_out;
  } else if (parts[0] == "b" || parts[0] == "brightness") {
    out.kind = transform_kind::brightness;
  } else if (parts[0] == "s" || parts[0] == "synth" || parts[0] == "synthetic_lossy") {
    out.kind = transform_kind::synthetic_lossy;
  } else {
    throw CLI::ValidationError("--pool", "unknown transform kind '" + parts[0] + "'");
  }
  try {
    out.low = std::stod(parts[1]);
    out.high = std::stod(parts[2]);
    const long long count = std::stoll(parts[3]);
    if (count < 1) throw std::invalid_argument("count");
    out.count = static_cast<std::size_t>(count);
  } catch (const std::exception&) {
    throw CLI::ValidationError("--pool", "cannot parse '" + text + "' as kind:low:high:count");
  }
  return out;
}

std::string transformed_path(const std::string& dir, std::size_t index) {
  return (std::filesystem::path(dir) / ("t_" + std::to_string(index) + ".csv")).string();
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) out += ',';
    out += detail::format_double(values[i]);
  }
  return out;
}

int run_calibrate(const std::string& method, const std::string& val_path,
                  const std::string& val_t_dir, const std::string& pool_text,
                  std::uint64_t seed, std::uint64_t max_iters, double delta, std::uint64_t bins,
                  const std::string& mode_text, const std::string& out_path, bool quiet) {
  const logits_table val = read_logits_csv(val_path);

  recal_fit_config cfg;
  cfg.max_iterations = max_iters;
  cfg.stopping_delta = delta;
  cfg.ece_bins = bins;
  cfg.mode = comparison_mode_from_string(mode_text);

  if (method == "ts") {
    const auto started = std::chrono::steady_clock::now();
    const double t = fit_temperature(val);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;

    const double ece_before = ece(val, bins);
    const double ece_after = ece(apply_temperature(val, t), bins);

    const transformation_pool pool({{transform_kind::synthetic_lossy, 1.0}}, seed, 1.0, 1.0);
    calibration_iteration it;
    it.transform_index = sentinel_transform_index;
    it.raw_temperatures = {t, t, t, t};
    it.temperatures = {t, t, t, t};
    it.group_sizes = {0, 0, 0, val.sample_count()};
    it.validation_ece_after = ece_after;
    const map_config mc{cfg.max_iterations, cfg.stopping_delta, cfg.ece_bins, cfg.mode};
    const calibration_map map(pool, {it}, mc, fit_fingerprint(val, pool, mc));
    save_map(map, out_path);

    std::printf("learning_time_seconds=%.6f\n", elapsed.count());
    std::printf("temperature=%s\n", detail::format_double(t).c_str());
    std::printf("ece_trace=%s\n", join_doubles({ece_before, ece_after}).c_str());
    std::printf("final_validation_ece=%s\n", detail::format_double(ece_after).c_str());
    if (!quiet) std::printf("map=%s\n", out_path.c_str());
    return 0;
  }

  // method == "recal"
  const pool_flag pf = parse_pool_flag(pool_text);
  const transformation_pool pool = build_pool(pf.kind, pf.low, pf.high, pf.count, seed);

  std::vector<logits_table> transformed;
  transformed.reserve(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    transformed.push_back(read_logits_csv(transformed_path(val_t_dir, i)));
  }

  const auto started = std::chrono::steady_clock::now();
  const fit_result res = fit(val, transformed, pool, cfg);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;

  save_map(res.map, out_path);

  std::printf("learning_time_seconds=%.6f\n", elapsed.count());
  std::printf("iterations=%zu\n", res.map.iterations.size());
  std::printf("ece_trace=%s\n", join_doubles(res.ece_trace).c_str());
  std::printf("final_validation_ece=%s\n", detail::format_double(res.ece_trace.back()).c_str());
  if (!quiet) std::printf("map=%s\n", out_path.c_str());
  return 0;
}

int run_apply(const std::string& map_path, const std::string& test_path,
              const std::string& test_t_dir, const std::string& out_path, bool quiet) {
  const calibration_map map = load_map(map_path);
  const logits_table test = read_logits_csv(test_path);

  std::set<std::size_t> referenced;
  for (const auto& it : map.iterations) {
    if (it.transform_index != sentinel_transform_index)
      referenced.insert(static_cast<std::size_t>(it.transform_index));
  }

  std::vector<std::optional<logits_table>> slots(map.pool.size());
  if (!referenced.empty() && test_t_dir.empty())
    throw contract_error("this map references transformed tables; pass --test-t");
  for (std::size_t idx : referenced) {
    slots[idx] = read_logits_csv(transformed_path(test_t_dir, idx));
  }

  const logits_table calibrated =
      apply(test, std::span<const std::optional<logits_table>>(slots), map);
  write_logits_csv(calibrated, out_path);

  if (!quiet) {
    std::printf("samples=%zu\n", calibrated.sample_count());
    std::printf("iterations_replayed=%zu\n", map.iterations.size());
    std::printf("out=%s\n", out_path.c_str());
  }
  return 0;
}

int run_evaluate(const std::string& logits_path, std::uint64_t bins,
                 const std::string& bin_report_path) {
  const logits_table t = read_logits_csv(logits_path);
  std::printf("samples=%zu\n", t.sample_count());
  std::printf("classes=%zu\n", t.class_count());
  std::printf("bins=%llu\n", static_cast<unsigned long long>(bins));
  std::printf("ece=%s\n", detail::format_double(ece(t, bins)).c_str());
  std::printf("brier_normalized=%s\n", detail::format_double(brier_normalized(t)).c_str());
  std::printf("nll=%s\n", detail::format_double(nll(t)).c_str());
  std::printf("error_rate=%s\n", detail::format_double(error_rate(t)).c_str());

  if (!bin_report_path.empty()) {
    const reliability_bins rb = reliability(t, bins);
    std::string csv = "bin,count,mean_confidence,mean_accuracy\n";
    for (std::size_t b = 0; b < rb.bins.size(); ++b) {
      csv += std::to_string(b + 1);
      csv += ',';
      csv += std::to_string(rb.bins[b].sample_count);
      csv += ',';
      csv += detail::format_double(rb.bins[b].mean_confidence);
      csv += ',';
      csv += detail::format_double(rb.bins[b].mean_accuracy);
      csv += '\n';
    }
    detail::write_file_bytes(bin_report_path, csv);
  }
  return 0;
}

int run_group_analysis(const std::string& logits_path, const std::vector<std::string>& t_paths,
                       std::uint64_t bins, const std::string& mode_text,
                       const std::string& rank_csv_path) {
  const logits_table z = read_logits_csv(logits_path);
  std::vector<logits_table> transformed;
  transformed.reserve(t_paths.size());
  for (const auto& p : t_paths) transformed.push_back(read_logits_csv(p));

  const auto mode = comparison_mode_from_string(mode_text);
  const auto entries = group_ece_table(z, transformed, bins, mode);

  std::printf(
      "transform,group1_ece,group1_count,group2_ece,group2_count,group3_ece,group3_count,"
      "group4_ece,group4_count\n");
  std::vector<std::array<double, 4>> complete;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    std::string line = t_paths[i];
    bool all_groups = true;
    for (int g = 0; g < 4; ++g) {
      line += ',';
      line += std::isnan(entries[i].ece[g]) ? "nan" : detail::format_double(entries[i].ece[g]);
      line += ',';
      line += std::to_string(entries[i].count[g]);
      all_groups = all_groups && entries[i].count[g] > 0;
    }
    std::printf("%s\n", line.c_str());
    if (all_groups)
      complete.push_back(entries[i].ece);
  }

  if (!rank_csv_path.empty()) {
    if (complete.empty()) {
      std::fprintf(stderr,
                   "every transform left some group empty; no rank distribution written\n");
    } else {
      const rank_distribution dist = group_rank_analysis(complete);
      std::string csv = "group,rank1,rank2,rank3,rank4\n";
      for (int g = 0; g < 4; ++g) {
        csv += std::to_string(g + 1);
        for (int r = 0; r < 4; ++r) {
          csv += ',';
          csv += detail::format_double(dist.fraction[g][r]);
        }
        csv += '\n';
      }
      detail::write_file_bytes(rank_csv_path, csv);
    }
  }
  return 0;
}

int run_transform(const std::string& kind, double param, const std::string& in_path,
                  const std::string& out_path, double fill) {
  const image_tensor_set in = read_tensor(in_path);
  if (kind == "zoom" || kind == "zoom_out") {
    write_tensor(zoom_out(in, param, fill), out_path);
  } else if (kind == "brightness") {
    write_tensor(brightness(in, param), out_path);
  } else {
    throw contract_error("unknown transform kind '" + kind + "' (expected zoom or brightness)");
  }
  return 0;
}

int run_synth_table(std::size_t n, std::size_t k, double alpha, double sharpen,
                    std::uint64_t seed, const std::string& out_path) {
  write_logits_csv(synth_generate(n, k, alpha, sharpen, seed), out_path);
  return 0;
}

int run_synth_scenario(std::size_t n, std::size_t k, double a_sharp, double gap,
                       std::uint64_t seed, const std::string& out_dir, bool quiet) {
  const cohort_scenario sc = synth_cohort_scenario(n, k, a_sharp, gap, seed);

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir / "val_t");
  std::filesystem::create_directories(dir / "test_t");
  write_logits_csv(sc.validation, (dir / "validation.csv").string());
  write_logits_csv(sc.test, (dir / "test.csv").string());
  for (std::size_t i = 0; i < sc.pool.size(); ++i) {
    write_logits_csv(sc.validation_transformed[i], transformed_path((dir / "val_t").string(), i));
    write_logits_csv(sc.test_transformed[i], transformed_path((dir / "test_t").string(), i));
  }

  // The pool is reconstructible: build_pool(synthetic_lossy, low, high,
  // count, pool_seed) yields exactly the pool the tables were built from.
  const std::string pool_flag_text = "s:" + detail::format_double(sc.pool.range_low) + ":" +
                                     detail::format_double(sc.pool.range_high) + ":" +
                                     std::to_string(sc.pool.size());
  std::printf("pool_flag=%s\n", pool_flag_text.c_str());
  std::printf("pool_seed=%llu\n", static_cast<unsigned long long>(sc.pool.seed));
  if (!quiet) {
    std::printf("out_dir=%s\n", out_dir.c_str());
    std::printf("cohort_a_count=%zu\n", sc.descriptor.cohort_a_count);
    std::printf("note=%s\n", sc.descriptor.note.c_str());
  }

  std::string info;
  info += "n=" + std::to_string(n) + "\n";
  info += "k=" + std::to_string(k) + "\n";
  info += "a_sharp=" + detail::format_double(a_sharp) + "\n";
  info += "transform_gap=" + detail::format_double(gap) + "\n";
  info += "seed=" + std::to_string(seed) + "\n";
  info += "pool_flag=" + pool_flag_text + "\n";
  info += "pool_seed=" + std::to_string(sc.pool.seed) + "\n";
  info += "cohort_a_count=" + std::to_string(sc.descriptor.cohort_a_count) + "\n";
  info += "base_loss=" + detail::format_double(sc.descriptor.base_loss) + "\n";
  info += "noise_sd=" + detail::format_double(sc.descriptor.noise_sd) + "\n";
  info += "note=" + sc.descriptor.note + "\n";
  detail::write_file_bytes((dir / "scenario.txt").string(), info);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Post-hoc confidence calibration via grouped temperature scaling"};
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress informational output");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Fit a calibration map on validation logits");
  std::string method = "recal";
  std::string val_path;
  std::string val_t_dir;
  std::string pool_text;
  std::uint64_t seed = 0;
  std::uint64_t max_iters = 100;
  double delta = 1e-4;
  std::uint64_t bins = 15;
  std::string mode_text = "transformed_max";
  std::string cal_out;
  calibrate->add_option("--method", method, "recal or ts")
      ->check(CLI::IsMember({"recal", "ts"}));
  calibrate->add_option("--val", val_path, "Validation logits CSV")->required();
  calibrate->add_option("--val-t", val_t_dir,
                        "Directory of transformed validation logits t_<index>.csv");
  calibrate->add_option("--pool", pool_text, "Transformation pool as kind:low:high:count");
  calibrate->add_option("--seed", seed, "Seed for pool construction and sampling");
  calibrate->add_option("--max-iters", max_iters, "Iteration cap");
  calibrate->add_option("--delta", delta, "Stop when |ECE change| falls below this")
      ->check(CLI::Range(0.0, 1.0));
  calibrate->add_option("--bins", bins, "ECE bin count");
  calibrate->add_option("--mode", mode_text, "transformed_max or original_index")
      ->check(CLI::IsMember({"transformed_max", "original_index"}));
  calibrate->add_option("--out", cal_out, "Map file to write")->required();

  // apply
  auto* apply_cmd = app.add_subcommand("apply", "Replay a calibration map on test logits");
  std::string map_path;
  std::string test_path;
  std::string test_t_dir;
  std::string apply_out;
  apply_cmd->add_option("--map", map_path, "Calibration map file")->required();
  apply_cmd->add_option("--test", test_path, "Test logits CSV")->required();
  apply_cmd->add_option("--test-t", test_t_dir,
                        "Directory of transformed test logits t_<index>.csv");
  apply_cmd->add_option("--out", apply_out, "Calibrated logits CSV to write")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Report calibration metrics of a logits CSV");
  std::string eval_path;
  std::uint64_t eval_bins = 15;
  std::string bin_report;
  evaluate->add_option("--logits", eval_path, "Labeled logits CSV")->required();
  evaluate->add_option("--bins", eval_bins, "ECE bin count");
  evaluate->add_option("--bin-report", bin_report, "Write per-bin reliability CSV here");

  // group-analysis
  auto* group = app.add_subcommand("group-analysis",
                                   "Per-group ECE grid across transformed tables");
  std::string ga_logits;
  std::vector<std::string> ga_transformed;
  std::uint64_t ga_bins = 15;
  std::string ga_mode = "transformed_max";
  std::string rank_csv;
  group->add_option("--logits", ga_logits, "Original labeled logits CSV")->required();
  group->add_option("--transformed", ga_transformed, "Transformed logits CSVs")
      ->required()
      ->expected(-1);
  group->add_option("--bins", ga_bins, "ECE bin count");
  group->add_option("--mode", ga_mode, "transformed_max or original_index")
      ->check(CLI::IsMember({"transformed_max", "original_index"}));
  group->add_option("--rank-csv", rank_csv, "Write the rank-distribution CSV here");

  // transform
  auto* transform = app.add_subcommand("transform", "Apply an image transform to a tensor file");
  std::string t_kind;
  double t_param = 0.0;
  std::string t_in;
  std::string t_out;
  double t_fill = 0.0;
  transform->add_option("--kind", t_kind, "zoom or brightness")->required();
  transform->add_option("--param", t_param, "Transform parameter in (0, 1]")->required();
  transform->add_option("--in", t_in, "Input tensor file")->required();
  transform->add_option("--out", t_out, "Output tensor file")->required();
  transform->add_option("--fill", t_fill, "Zoom canvas fill value in [0, 1]");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate synthetic logits");
  synth->require_subcommand(1);
  auto* table = synth->add_subcommand("table", "One labeled logits CSV");
  std::size_t s_n = 1000;
  std::size_t s_k = 10;
  double s_alpha = 1.0;
  double s_sharpen = 1.0;
  std::uint64_t s_seed = 0;
  std::string s_out;
  table->add_option("--n", s_n, "Sample count");
  table->add_option("--k", s_k, "Class count");
  table->add_option("--alpha", s_alpha, "Dirichlet concentration");
  table->add_option("--sharpen", s_sharpen, "Overconfidence factor (1 = calibrated)");
  table->add_option("--seed", s_seed, "Seed");
  table->add_option("--out", s_out, "Logits CSV to write")->required();

  auto* scenario = synth->add_subcommand("scenario", "Two-cohort calibration testbed");
  std::size_t sc_n = 20000;
  std::size_t sc_k = 10;
  double sc_a_sharp = 3.0;
  double sc_gap = 0.4;
  std::uint64_t sc_seed = 0;
  std::string sc_out_dir;
  scenario->add_option("--n", sc_n, "Samples per split");
  scenario->add_option("--k", sc_k, "Class count");
  scenario->add_option("--a-sharp", sc_a_sharp, "Cohort A sharpening (>= 1)");
  scenario->add_option("--gap", sc_gap, "Extra lossy response of cohort A");
  scenario->add_option("--seed", sc_seed, "Seed");
  scenario->add_option("--out-dir", sc_out_dir, "Directory to populate")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  }

  try {
    if (*calibrate) {
      if (method == "recal" && pool_text.empty())
        throw contract_error("--method recal needs --pool");
      if (method == "recal" && val_t_dir.empty())
        throw contract_error("--method recal needs --val-t");
      return run_calibrate(method, val_path, val_t_dir, pool_text, seed, max_iters, delta, bins,
                           mode_text, cal_out, quiet);
    }
    if (*apply_cmd) return run_apply(map_path, test_path, test_t_dir, apply_out, quiet);
    if (*evaluate) return run_evaluate(eval_path, eval_bins, bin_report);
    if (*group) return run_group_analysis(ga_logits, ga_transformed, ga_bins, ga_mode, rank_csv);
    if (*transform) return run_transform(t_kind, t_param, t_in, t_out, t_fill);
    if (*table) return run_synth_table(s_n, s_k, s_alpha, s_sharpen, s_seed, s_out);
    if (*scenario)
      return run_synth_scenario(sc_n, sc_k, sc_a_sharp, sc_gap, sc_seed, sc_out_dir, quiet);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
