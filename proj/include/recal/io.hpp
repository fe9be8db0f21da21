#pragma once

#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "recal/errors.hpp"
#include "recal/types.hpp"

namespace recal {

namespace detail {

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view s, double& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

inline bool parse_int(std::string_view s, std::int64_t& out) {
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc{} && res.ptr == s.data() + s.size();
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return fields;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw io_error("read failed for " + path);
  return ss.str();
}

inline void write_file_bytes(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw io_error("write failed for " + path);
}

// FNV-1a over a byte stream; used for the provenance fingerprint.
class fnv1a64 {
public:
  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  std::string hex() const {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 0; i < 16; ++i) out[i] = digits[(state_ >> (60 - 4 * i)) & 0xF];
    return out;
  }

private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Logits CSV: header `label,z0,...,z{K-1}`, one data row per sample, empty
// label column on every row when unlabeled, LF line endings.
// ---------------------------------------------------------------------------

inline logits_table read_logits_csv_text(std::string_view text) {
  if (text.empty()) throw parse_error("empty logits file", 1);

  std::vector<std::string_view> lines;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == '\n') {
      lines.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  // A trailing newline yields one empty final entry; drop it.
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw parse_error("empty logits file", 1);

  const auto header = detail::split_fields(lines[0]);
  if (header.size() < 3 || header[0] != "label")
    throw parse_error("malformed header: expected label,z0,z1,...", 1);
  const std::size_t k = header.size() - 1;
  for (std::size_t j = 0; j < k; ++j) {
    const std::string expected = "z" + std::to_string(j);
    if (header[j + 1] != expected)
      throw parse_error("malformed header: expected column " + expected, 1);
  }

  if (lines.size() < 2) throw parse_error("no data rows", 1);
  const std::size_t n = lines.size() - 1;

  std::vector<double> values;
  values.reserve(n * k);
  std::vector<std::int64_t> labels;
  labels.reserve(n);
  bool labeled = false;

  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t lineno = r + 2;
    const auto fields = detail::split_fields(lines[r + 1]);
    if (fields.size() != k + 1)
      throw parse_error("expected " + std::to_string(k + 1) + " columns, got " +
                            std::to_string(fields.size()),
                        lineno);
    const bool has_label = !fields[0].empty();
    if (r == 0) {
      labeled = has_label;
    } else if (has_label != labeled) {
      throw parse_error("mixed labeled and unlabeled rows", lineno);
    }
    if (has_label) {
      std::int64_t y;
      if (!detail::parse_int(fields[0], y)) throw parse_error("bad label field", lineno);
      if (y < 0 || static_cast<std::size_t>(y) >= k)
        throw parse_error("label " + std::to_string(y) + " outside {0.." + std::to_string(k - 1) +
                              "}",
                          lineno);
      labels.push_back(y);
    }
    for (std::size_t j = 0; j < k; ++j) {
      double v;
      if (!detail::parse_double(fields[j + 1], v)) throw parse_error("bad numeric field", lineno);
      if (!std::isfinite(v)) throw parse_error("non-finite logit", lineno);
      values.push_back(v);
    }
  }

  if (labeled) return logits_table(std::move(values), std::move(labels), n, k);
  return logits_table(std::move(values), n, k);
}

inline logits_table read_logits_csv(const std::string& path) {
  return read_logits_csv_text(detail::read_file_bytes(path));
}

inline std::string write_logits_csv_text(const logits_table& table) {
  std::string out;
  out.reserve(table.sample_count() * (table.class_count() * 12 + 8));
  out += "label";
  for (std::size_t j = 0; j < table.class_count(); ++j) {
    out += ",z";
    out += std::to_string(j);
  }
  out += '\n';
  for (std::size_t i = 0; i < table.sample_count(); ++i) {
    if (table.has_labels()) out += std::to_string(table.labels()[i]);
    const auto row = table.row(i);
    for (double v : row) {
      out += ',';
      out += detail::format_double(v);
    }
    out += '\n';
  }
  return out;
}

inline void write_logits_csv(const logits_table& table, const std::string& path) {
  detail::write_file_bytes(path, write_logits_csv_text(table));
}

// ---------------------------------------------------------------------------
// Calibration-map document (JSON, format_version 1).
// ---------------------------------------------------------------------------

inline constexpr int map_format_version = 1;

inline std::string serialize_map(const calibration_map& map) {
  if (!std::isfinite(map.config.stopping_delta))
    throw contract_error("a map with non-finite stopping_delta cannot be serialized");
  nlohmann::json doc;
  doc["format_version"] = map_format_version;
  doc["fingerprint"] = map.fingerprint;
  nlohmann::json pool;
  pool["seed"] = map.pool.seed;
  pool["kind"] = to_string(map.pool.entries.front().kind);
  pool["range_low"] = map.pool.range_low;
  pool["range_high"] = map.pool.range_high;
  auto params = nlohmann::json::array();
  for (const auto& e : map.pool.entries) params.push_back(e.parameter);
  pool["parameters"] = std::move(params);
  doc["pool"] = std::move(pool);
  nlohmann::json config;
  config["max_iterations"] = map.config.max_iterations;
  config["stopping_delta"] = map.config.stopping_delta;
  config["ece_bins"] = map.config.ece_bins;
  config["confidence_comparison_mode"] = to_string(map.config.mode);
  doc["config"] = std::move(config);
  auto iters = nlohmann::json::array();
  for (const auto& it : map.iterations) {
    nlohmann::json j;
    j["transform_index"] = it.transform_index;
    j["raw_temperatures"] = it.raw_temperatures;
    j["temperatures"] = it.temperatures;
    j["group_sizes"] = it.group_sizes;
    j["validation_ece_after"] = it.validation_ece_after;
    iters.push_back(std::move(j));
  }
  doc["iterations"] = std::move(iters);
  return doc.dump(2) + "\n";
}

inline calibration_map deserialize_map(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("map document is not valid JSON: ") + e.what());
  }
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != map_format_version)
      throw format_error("unsupported format_version " + std::to_string(version));

    const auto& jp = doc.at("pool");
    const auto kind = transform_kind_from_string(jp.at("kind").get<std::string>());
    std::vector<transformation_spec> entries;
    for (const auto& p : jp.at("parameters")) entries.emplace_back(kind, p.get<double>());
    transformation_pool pool(std::move(entries), jp.at("seed").get<std::uint64_t>(),
                             jp.at("range_low").get<double>(), jp.at("range_high").get<double>());

    const auto& jc = doc.at("config");
    map_config config;
    config.max_iterations = jc.at("max_iterations").get<std::uint64_t>();
    config.stopping_delta = jc.at("stopping_delta").get<double>();
    config.ece_bins = jc.at("ece_bins").get<std::uint64_t>();
    config.mode = comparison_mode_from_string(jc.at("confidence_comparison_mode").get<std::string>());

    std::vector<calibration_iteration> iterations;
    for (const auto& ji : doc.at("iterations")) {
      calibration_iteration it;
      it.transform_index = ji.at("transform_index").get<std::uint64_t>();
      it.raw_temperatures = ji.at("raw_temperatures").get<std::array<double, 4>>();
      it.temperatures = ji.at("temperatures").get<std::array<double, 4>>();
      it.group_sizes = ji.at("group_sizes").get<std::array<std::uint64_t, 4>>();
      it.validation_ece_after = ji.at("validation_ece_after").get<double>();
      iterations.push_back(it);
    }

    return calibration_map(std::move(pool), std::move(iterations), config,
                           doc.at("fingerprint").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw format_error(std::string("bad map document: ") + e.what());
  } catch (const contract_error& e) {
    throw format_error(std::string("inconsistent map document: ") + e.what());
  }
}

inline void save_map(const calibration_map& map, const std::string& path) {
  detail::write_file_bytes(path, serialize_map(map));
}

inline calibration_map load_map(const std::string& path) {
  return deserialize_map(detail::read_file_bytes(path));
}

// Provenance hash of the fit inputs (validation table + pool + config).
inline std::string fit_fingerprint(const logits_table& validation,
                                   const transformation_pool& pool, const map_config& config) {
  detail::fnv1a64 h;
  h.u64(validation.sample_count());
  h.u64(validation.class_count());
  for (double v : validation.values()) h.f64(v);
  h.u64(validation.has_labels() ? 1 : 0);
  if (validation.has_labels()) {
    for (std::int64_t y : validation.labels()) h.u64(static_cast<std::uint64_t>(y));
  }
  h.u64(pool.seed);
  h.u64(static_cast<std::uint64_t>(pool.entries.front().kind));
  h.f64(pool.range_low);
  h.f64(pool.range_high);
  h.u64(pool.size());
  for (const auto& e : pool.entries) h.f64(e.parameter);
  h.u64(config.max_iterations);
  h.f64(config.stopping_delta);
  h.u64(config.ece_bins);
  h.u64(static_cast<std::uint64_t>(config.mode));
  return h.hex();
}

// ---------------------------------------------------------------------------
// Image tensor file: magic "RCT1", four u32 LE dims (N, C, H, W), then
// N*C*H*W f32 LE values in row-major N -> C -> H -> W order.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

inline std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace detail

inline void write_tensor(const image_tensor_set& t, const std::string& path) {
  std::string out;
  out.reserve(20 + t.values.size() * 4);
  out += "RCT1";
  detail::put_u32_le(out, static_cast<std::uint32_t>(t.n));
  detail::put_u32_le(out, static_cast<std::uint32_t>(t.c));
  detail::put_u32_le(out, static_cast<std::uint32_t>(t.h));
  detail::put_u32_le(out, static_cast<std::uint32_t>(t.w));
  for (float v : t.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    detail::put_u32_le(out, bits);
  }
  detail::write_file_bytes(path, out);
}

inline image_tensor_set read_tensor(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  if (bytes.size() < 20 || bytes.compare(0, 4, "RCT1") != 0)
    throw format_error("not an RCT1 tensor file: " + path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t n = detail::get_u32_le(p + 4);
  const std::uint32_t c = detail::get_u32_le(p + 8);
  const std::uint32_t h = detail::get_u32_le(p + 12);
  const std::uint32_t w = detail::get_u32_le(p + 16);
  const std::uint64_t count = static_cast<std::uint64_t>(n) * c * h * w;
  if (bytes.size() != 20 + count * 4) throw format_error("tensor file size mismatch: " + path);
  std::vector<float> values(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = detail::get_u32_le(p + 20 + i * 4);
    float v;
    std::memcpy(&v, &bits, 4);
    if (!(v >= 0.0f) || !(v <= 1.0f)) throw format_error("tensor value outside [0, 1]: " + path);
    values[i] = v;
  }
  try {
    return image_tensor_set(std::move(values), n, c, h, w);
  } catch (const contract_error& e) {
    throw format_error(std::string("inconsistent tensor file: ") + e.what());
  }
}

}  // namespace recal
