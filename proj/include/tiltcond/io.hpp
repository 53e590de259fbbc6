#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "distributions.hpp"
#include "oracle.hpp"

namespace tiltcond {

/// Doubles formatted with 17 significant digits: lossless round-trip.
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Family config JSON
//
// { "theta_domain": [alpha, beta], "support": [A, B],
//   "components": [{"kind": "gaussian", "mean": 0.0, "sd": 1.0}, ...],
//   "repeat": {"pattern": [ ...components... ], "count": N} }
//
// +-infinity is encoded as the strings "inf" / "-inf". "components" and
// "repeat" may be combined; the repeat block is expanded and appended.
// ---------------------------------------------------------------------------

namespace detail {

inline double json_endpoint(const nlohmann::json& v, const char* what) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string s = v.get<std::string>();
    if (s == "inf" || s == "+inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw ConfigError(std::string(what) + ": endpoint must be a number or \"inf\"/\"-inf\"");
}

inline nlohmann::json endpoint_to_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

inline double require_number(const nlohmann::json& o, const char* key) {
  if (!o.contains(key) || !o[key].is_number()) {
    throw ConfigError(std::string("component is missing numeric field \"") + key + "\"");
  }
  return o[key].get<double>();
}

inline ComponentSpec component_from_json(const nlohmann::json& o) {
  if (!o.contains("kind") || !o["kind"].is_string()) {
    throw ConfigError("component needs a \"kind\" string");
  }
  const std::string kind = o["kind"].get<std::string>();
  if (kind == "gaussian") {
    return ComponentSpec::gaussian(require_number(o, "mean"), require_number(o, "sd"));
  }
  if (kind == "gamma") {
    return ComponentSpec::gamma(require_number(o, "shape"), require_number(o, "rate"));
  }
  if (kind == "exponential") {
    return ComponentSpec::exponential(require_number(o, "rate"));
  }
  if (kind == "shifted_exponential") {
    return ComponentSpec::shifted_exponential(require_number(o, "rate"),
                                              require_number(o, "shift"));
  }
  throw ConfigError("unknown component kind \"" + kind + "\"");
}

inline nlohmann::json component_to_json(const ComponentSpec& c) {
  nlohmann::json o;
  o["kind"] = kind_name(c.kind());
  switch (c.kind()) {
    case Kind::gaussian:
      o["mean"] = c.p1();
      o["sd"] = c.p2();
      break;
    case Kind::gamma:
      o["shape"] = c.p1();
      o["rate"] = c.p2();
      break;
    case Kind::exponential:
      o["rate"] = c.p1();
      break;
    case Kind::shifted_exponential:
      o["rate"] = c.p1();
      o["shift"] = c.p2();
      break;
  }
  return o;
}

}  // namespace detail

inline DistributionFamily family_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("family config must be a JSON object");
  if (!j.contains("theta_domain") || !j["theta_domain"].is_array() ||
      j["theta_domain"].size() != 2) {
    throw ConfigError("family config needs \"theta_domain\": [alpha, beta]");
  }
  if (!j.contains("support") || !j["support"].is_array() || j["support"].size() != 2) {
    throw ConfigError("family config needs \"support\": [A, B]");
  }
  const Interval theta{detail::json_endpoint(j["theta_domain"][0], "theta_domain"),
                       detail::json_endpoint(j["theta_domain"][1], "theta_domain")};
  const Interval support{detail::json_endpoint(j["support"][0], "support"),
                         detail::json_endpoint(j["support"][1], "support")};
  std::vector<ComponentSpec> comps;
  if (j.contains("components")) {
    if (!j["components"].is_array()) throw ConfigError("\"components\" must be an array");
    for (const auto& o : j["components"]) comps.push_back(detail::component_from_json(o));
  }
  if (j.contains("repeat")) {
    const auto& r = j["repeat"];
    if (!r.is_object() || !r.contains("pattern") || !r["pattern"].is_array() ||
        !r.contains("count") || !r["count"].is_number_integer()) {
      throw ConfigError("\"repeat\" needs {\"pattern\": [...], \"count\": N}");
    }
    const auto count = r["count"].get<std::int64_t>();
    if (count < 1) throw ConfigError("repeat count must be >= 1");
    std::vector<ComponentSpec> pattern;
    for (const auto& o : r["pattern"]) pattern.push_back(detail::component_from_json(o));
    if (pattern.empty()) throw ConfigError("repeat pattern must be non-empty");
    for (std::int64_t c = 0; c < count; ++c) {
      for (const auto& p : pattern) comps.push_back(p);
    }
  }
  if (comps.empty()) {
    throw ConfigError("family config needs \"components\" and/or \"repeat\"");
  }
  return DistributionFamily(std::move(comps), theta, support);
}

inline DistributionFamily load_family(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open family config \"" + path + "\"");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("family config \"" + path + "\" is not valid JSON: " + e.what());
  }
  return family_from_json(j);
}

inline nlohmann::json family_to_json(const DistributionFamily& fam) {
  nlohmann::json j;
  j["theta_domain"] = {detail::endpoint_to_json(fam.theta_domain().lo),
                       detail::endpoint_to_json(fam.theta_domain().hi)};
  j["support"] = {detail::endpoint_to_json(fam.support().lo),
                  detail::endpoint_to_json(fam.support().hi)};
  j["components"] = nlohmann::json::array();
  for (const auto& c : fam.components()) j["components"].push_back(detail::component_to_json(c));
  return j;
}

// ---------------------------------------------------------------------------
// Sampled paths: CSV (one row per path, y_1..y_k plus the final tilt) and a
// binary columnar dump for large runs.
//
// Binary layout ("TCND", little-endian): magic[4], version u16, n u64, k u64,
// then f64 data as k+1 columns (y_1..y_k, t_final), each of length n_paths;
// the path count is implied by the file size.
// ---------------------------------------------------------------------------

struct PathBlock {
  std::uint64_t n = 0;
  std::uint64_t k = 0;
  std::vector<std::vector<double>> paths;  // each of length k
  std::vector<double> final_tilt;          // one per path
};

inline void write_paths_csv(std::ostream& out, const PathBlock& block) {
  for (std::uint64_t j = 1; j <= block.k; ++j) out << "y_" << j << ",";
  out << "t_final\n";
  for (std::size_t p = 0; p < block.paths.size(); ++p) {
    for (const double v : block.paths[p]) out << fmt17(v) << ",";
    out << fmt17(block.final_tilt[p]) << "\n";
  }
}

inline void write_paths_csv_file(const std::string& path, const PathBlock& block) {
  std::ofstream out(path, std::ios::binary);  // binary: LF line endings everywhere
  if (!out) throw ConfigError("cannot open output file \"" + path + "\"");
  write_paths_csv(out, block);
}

namespace detail {

inline void put_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(out, bits);
}

inline std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& in) {
  const std::uint64_t bits = get_u64(in);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace detail

inline void write_paths_tcnd(const std::string& path, const PathBlock& block) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file \"" + path + "\"");
  out.write("TCND", 4);
  detail::put_u16(out, 1);
  detail::put_u64(out, block.n);
  detail::put_u64(out, block.k);
  const std::size_t n_paths = block.paths.size();
  for (std::uint64_t col = 0; col < block.k; ++col) {
    for (std::size_t p = 0; p < n_paths; ++p) {
      detail::put_f64(out, block.paths[p][static_cast<std::size_t>(col)]);
    }
  }
  for (std::size_t p = 0; p < n_paths; ++p) detail::put_f64(out, block.final_tilt[p]);
}

inline PathBlock read_paths_tcnd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file \"" + path + "\"");
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "TCND", 4) != 0) throw ConfigError("bad magic in \"" + path + "\"");
  const std::uint16_t version = detail::get_u16(in);
  if (version != 1) throw ConfigError("unsupported TCND version");
  PathBlock block;
  block.n = detail::get_u64(in);
  block.k = detail::get_u64(in);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg()) - 22;
  const std::uint64_t n_paths = bytes / (8 * (block.k + 1));
  in.seekg(22, std::ios::beg);
  block.paths.assign(n_paths, std::vector<double>(block.k, 0.0));
  for (std::uint64_t col = 0; col < block.k; ++col) {
    for (std::uint64_t p = 0; p < n_paths; ++p) {
      block.paths[p][col] = detail::get_f64(in);
    }
  }
  block.final_tilt.resize(n_paths);
  for (std::uint64_t p = 0; p < n_paths; ++p) block.final_tilt[p] = detail::get_f64(in);
  return block;
}

// ---------------------------------------------------------------------------
// GridDensity: CSV (x, density) and binary ("TGRD": magic, version u16,
// count u64, reserved u64, then f64 origin, spacing, values[count]).
// ---------------------------------------------------------------------------

inline void write_grid_csv(std::ostream& out, const GridDensity& g) {
  out << "x,density\n";
  for (std::size_t i = 0; i < g.size(); ++i) {
    out << fmt17(g.x_at(i)) << "," << fmt17(g.values[i]) << "\n";
  }
}

inline void write_grid_csv_file(const std::string& path, const GridDensity& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file \"" + path + "\"");
  write_grid_csv(out, g);
}

inline void write_grid_tgrd(const std::string& path, const GridDensity& g) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file \"" + path + "\"");
  out.write("TGRD", 4);
  detail::put_u16(out, 1);
  detail::put_u64(out, g.size());
  detail::put_u64(out, 0);
  detail::put_f64(out, g.origin);
  detail::put_f64(out, g.spacing);
  for (const double v : g.values) detail::put_f64(out, v);
}

inline GridDensity read_grid_tgrd(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open input file \"" + path + "\"");
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "TGRD", 4) != 0) throw ConfigError("bad magic in \"" + path + "\"");
  if (detail::get_u16(in) != 1) throw ConfigError("unsupported TGRD version");
  const std::uint64_t count = detail::get_u64(in);
  detail::get_u64(in);  // reserved
  GridDensity g;
  g.origin = detail::get_f64(in);
  g.spacing = detail::get_f64(in);
  g.values.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) g.values[i] = detail::get_f64(in);
  return g;
}

}  // namespace tiltcond
