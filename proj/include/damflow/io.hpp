#pragma once

// JSON job configuration, parameter files and the on-disk parameter cache.

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "damflow/cuts.hpp"

namespace damflow {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kCacheDirEnv = "DAMFLOW_CACHE_DIR";

/// Malformed configuration: bad JSON, wrong field types, unknown values.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File-system failure.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest form that reads back to the same double (at most 17 digits).
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ConfigError(path + "." + key + ": missing field");
  return *it;
}

inline const json* optional_field(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  return j.get<double>();
}

inline int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  return j.get<int>();
}

inline std::string text(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  return j.get<std::string>();
}

inline std::vector<double> numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

template <std::size_t N>
std::array<double, N> fixed_numbers(const json& j, const std::string& path) {
  const auto v = numbers(j, path);
  if (v.size() != N) throw ConfigError(path + ": expected " + std::to_string(N) + " numbers");
  std::array<double, N> out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

inline void check_schema(const json& j, const std::string& path) {
  const int v = integer(field(j, "schema_version", path), path + ".schema_version");
  if (v != kSchemaVersion)
    throw ConfigError(path + ".schema_version: unsupported version " + std::to_string(v) + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
}

}  // namespace detail

/// Parse JSON text; syntax errors carry source, line and column.
inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string what = e.what();
    const auto colon = what.find(": ");
    if (colon != std::string::npos) what = what.substr(colon + 2);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + what);
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  if (in.bad()) throw IoError("error while reading " + p.string());
  return os.str();
}

/// Write through a temporary file and rename, so readers never see a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& p, const std::string& content) {
  std::filesystem::path tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("error while writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, p, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " to " + p.string() + ": " + ec.message());
}

// Geometry.

inline json polygon_to_json(const PolygonSpec& p) {
  return {{"H", p.H}, {"H_plus", p.h_plus}, {"H_minus", p.h_minus}};
}

/// H_minus may be omitted; it is then fixed by the closure relation.
inline PolygonSpec polygon_from_json(const json& j, const std::string& path) {
  const auto H = detail::fixed_numbers<5>(detail::field(j, "H", path), path + ".H");
  const double hp = detail::number(detail::field(j, "H_plus", path), path + ".H_plus");
  if (const json* hm = detail::optional_field(j, "H_minus", path))
    return {H, hp, detail::number(*hm, path + ".H_minus")};
  return PolygonSpec::closed(H, hp);
}

inline json cuts_to_json(const CutSpec& cs) {
  json dirs = json::array();
  for (auto d : cs.directions) dirs.push_back(to_string(d));
  return {{"lengths", cs.lengths}, {"directions", dirs}};
}

/// Geometry object: polygon fields plus an optional "cuts" member.
inline json geometry_to_json(const CutSpec& cs) {
  json g = polygon_to_json(cs.base);
  if (!cs.is_zero() || cs.directions != CutSpec{}.directions) g["cuts"] = cuts_to_json(cs);
  return g;
}

inline CutSpec geometry_from_json(const json& j, const std::string& path) {
  CutSpec cs;
  cs.base = polygon_from_json(j, path);
  if (const json* c = detail::optional_field(j, "cuts", path)) {
    const std::string cp = path + ".cuts";
    cs.lengths = detail::fixed_numbers<3>(detail::field(*c, "lengths", cp), cp + ".lengths");
    if (const json* d = detail::optional_field(*c, "directions", cp)) {
      if (!d->is_array() || d->size() != 3) throw ConfigError(cp + ".directions: expected 3 strings");
      for (std::size_t k = 0; k < 3; ++k) {
        const std::string dp = cp + ".directions[" + std::to_string(k) + "]";
        try {
          cs.directions[k] = parse_cut_direction(detail::text((*d)[k], dp));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(dp + ": " + e.what());
        }
      }
    }
  }
  return cs;
}

// Parameters.

inline json params_to_json(const ExtendedParams& ep) {
  const MappingParams& mp = ep.mp;
  json j{{"schema_version", kSchemaVersion},
         {"geometry", geometry_to_json(ep.cuts)},
         {"omega", {mp.omega.a11, mp.omega.a12, mp.omega.a22}},
         {"u_plus", mp.u_plus},
         {"u_minus", mp.u_minus},
         {"C1", mp.c1},
         {"C2", mp.c2}};
  if (!ep.cuts.is_zero()) j["z"] = ep.z;
  return j;
}

inline ExtendedParams params_from_json(const json& j, const std::string& path) {
  detail::check_schema(j, path);
  ExtendedParams ep;
  ep.cuts = geometry_from_json(detail::field(j, "geometry", path), path + ".geometry");
  MappingParams& mp = ep.mp;
  mp.polygon = ep.cuts.base;
  const auto om = detail::fixed_numbers<3>(detail::field(j, "omega", path), path + ".omega");
  mp.omega = {om[0], om[1], om[2]};
  mp.u_plus = detail::fixed_numbers<2>(detail::field(j, "u_plus", path), path + ".u_plus");
  mp.u_minus = detail::fixed_numbers<2>(detail::field(j, "u_minus", path), path + ".u_minus");
  mp.c1 = detail::number(detail::field(j, "C1", path), path + ".C1");
  mp.c2 = detail::number(detail::field(j, "C2", path), path + ".C2");
  if (const json* z = detail::optional_field(j, "z", path)) {
    if (!z->is_array() || z->size() != 3) throw ConfigError(path + ".z: expected 3 pairs");
    for (std::size_t k = 0; k < 3; ++k)
      ep.z[k] = detail::fixed_numbers<2>((*z)[k], path + ".z[" + std::to_string(k) + "]");
  }
  return ep;
}

// Job configuration.

struct OutputConfig {
  std::string format = "json";  // json | csv | svg
  std::string path;             // empty: standard output
  int streamlines = 9;
  int samples = 33;

  void validate() const {
    if (format != "json" && format != "csv" && format != "svg")
      throw ConfigError("output.format: expected json, csv or svg, got '" + format + "'");
    if (streamlines < 1) throw ConfigError("output.streamlines: need at least 1");
    if (samples < 2) throw ConfigError("output.samples: need at least 2");
  }
};

struct MapJob {
  std::string direction = "x2w";  // x2w | w2x
  std::vector<cplx> points;
};

struct SweepJob {
  std::array<std::vector<double>, 3> grid{{{0.0}, {0.0}, {0.0}}};
  int threads = 1;
};

struct JobConfig {
  CutSpec geometry;
  FlowSpec flow;
  SolverConfig solver;
  OutputConfig output;
  MapJob map;
  SweepJob sweep;

  /// Every invariant except geometric admissibility, which the commands
  /// report separately.
  void validate_settings() const {
    try {
      flow.validate();
      solver.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    output.validate();
    if (map.direction != "x2w" && map.direction != "w2x")
      throw ConfigError("map.direction: expected x2w or w2x, got '" + map.direction + "'");
    for (const auto& g : sweep.grid)
      if (g.empty()) throw ConfigError("sweep: every cut needs at least one length");
    if (sweep.threads < 1) throw ConfigError("sweep.threads: need at least 1");
  }

  void validate() const {
    validate_settings();
    geometry.validate();
  }
};

inline json solver_to_json(const SolverConfig& c) {
  return {{"tol", c.tol},
          {"max_newton", c.max_newton},
          {"continuation_steps", c.continuation_steps},
          {"max_backtracks", c.max_backtracks},
          {"isthmus_guard", c.isthmus_guard},
          {"series_tol", c.series.target_tol},
          {"series_radius", c.series.max_radius}};
}

inline SolverConfig solver_from_json(const json& j, const std::string& path) {
  SolverConfig c;
  if (const json* v = detail::optional_field(j, "tol", path)) c.tol = detail::number(*v, path + ".tol");
  if (const json* v = detail::optional_field(j, "max_newton", path)) c.max_newton = detail::integer(*v, path + ".max_newton");
  if (const json* v = detail::optional_field(j, "continuation_steps", path))
    c.continuation_steps = detail::integer(*v, path + ".continuation_steps");
  if (const json* v = detail::optional_field(j, "max_backtracks", path))
    c.max_backtracks = detail::integer(*v, path + ".max_backtracks");
  if (const json* v = detail::optional_field(j, "isthmus_guard", path))
    c.isthmus_guard = detail::number(*v, path + ".isthmus_guard");
  if (const json* v = detail::optional_field(j, "series_tol", path))
    c.series.target_tol = detail::number(*v, path + ".series_tol");
  if (const json* v = detail::optional_field(j, "series_radius", path))
    c.series.max_radius = detail::integer(*v, path + ".series_radius");
  return c;
}

inline json job_to_json(const JobConfig& c) {
  json pts = json::array();
  for (cplx p : c.map.points) pts.push_back({p.real(), p.imag()});
  return {{"schema_version", kSchemaVersion},
          {"geometry", geometry_to_json(c.geometry)},
          {"flow", {{"permeability", c.flow.permeability}, {"head_drop", c.flow.head_drop}}},
          {"solver", solver_to_json(c.solver)},
          {"output",
           {{"format", c.output.format},
            {"path", c.output.path},
            {"streamlines", c.output.streamlines},
            {"samples", c.output.samples}}},
          {"map", {{"direction", c.map.direction}, {"points", pts}}},
          {"sweep", {{"w2", c.sweep.grid[0]}, {"w4", c.sweep.grid[1]}, {"w5", c.sweep.grid[2]}, {"threads", c.sweep.threads}}}};
}

/// Structural parse; call validate() or validate_settings() afterwards.
inline JobConfig job_from_json(const json& j) {
  const std::string root = "config";
  detail::check_schema(j, root);
  JobConfig c;
  c.geometry = geometry_from_json(detail::field(j, "geometry", root), "geometry");
  if (const json* f = detail::optional_field(j, "flow", root)) {
    if (const json* v = detail::optional_field(*f, "permeability", "flow"))
      c.flow.permeability = detail::number(*v, "flow.permeability");
    if (const json* v = detail::optional_field(*f, "head_drop", "flow")) c.flow.head_drop = detail::number(*v, "flow.head_drop");
  }
  if (const json* s = detail::optional_field(j, "solver", root)) c.solver = solver_from_json(*s, "solver");
  if (const json* o = detail::optional_field(j, "output", root)) {
    if (const json* v = detail::optional_field(*o, "format", "output")) c.output.format = detail::text(*v, "output.format");
    if (const json* v = detail::optional_field(*o, "path", "output")) c.output.path = detail::text(*v, "output.path");
    if (const json* v = detail::optional_field(*o, "streamlines", "output"))
      c.output.streamlines = detail::integer(*v, "output.streamlines");
    if (const json* v = detail::optional_field(*o, "samples", "output")) c.output.samples = detail::integer(*v, "output.samples");
  }
  if (const json* m = detail::optional_field(j, "map", root)) {
    if (const json* v = detail::optional_field(*m, "direction", "map")) c.map.direction = detail::text(*v, "map.direction");
    if (const json* v = detail::optional_field(*m, "points", "map")) {
      if (!v->is_array()) throw ConfigError("map.points: expected an array of [re, im] pairs");
      for (std::size_t i = 0; i < v->size(); ++i) {
        const auto p = detail::fixed_numbers<2>((*v)[i], "map.points[" + std::to_string(i) + "]");
        c.map.points.emplace_back(p[0], p[1]);
      }
    }
  }
  if (const json* s = detail::optional_field(j, "sweep", root)) {
    const char* keys[3] = {"w2", "w4", "w5"};
    for (int k = 0; k < 3; ++k)
      if (const json* v = detail::optional_field(*s, keys[k], "sweep"))
        c.sweep.grid[k] = detail::numbers(*v, std::string("sweep.") + keys[k]);
    if (const json* v = detail::optional_field(*s, "threads", "sweep")) c.sweep.threads = detail::integer(*v, "sweep.threads");
  }
  return c;
}

inline JobConfig load_job(const std::filesystem::path& p) {
  return job_from_json(parse_json_text(read_file(p), p.string()));
}

// Parameter cache.

/// Scaled residual and Lemma checks used to accept a parameter set for a
/// geometry, the same test the solver applies on convergence.
inline bool params_accepted(const ExtendedParams& ep, const CutSpec& cs, const SolverConfig& cfg,
                            double* residual_out = nullptr) {
  try {
    const double r = extended_residual(ep, cs, cfg.series).norm() / cs.base.h_minus;
    if (residual_out) *residual_out = r;
    return r <= 10.0 * cfg.tol && ep.mp.in_lemma_cone() && ep.mp.lemma_ordering();
  } catch (const std::exception&) {
    return false;
  }
}

/// Cache key: FNV-1a hash of the geometry rounded to 12 significant digits.
inline std::string geometry_fingerprint(const CutSpec& cs) {
  std::ostringstream os;
  os.precision(11);
  os << std::scientific;
  for (double v : cs.base.as_vector()) os << (v + 0.0) << ',';
  for (int k = 0; k < 3; ++k) os << (cs.lengths[k] + 0.0) << '/' << to_string(cs.directions[k]) << ';';
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : os.str()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct CacheStats {
  int hits = 0;
  int misses = 0;
  int evictions = 0;
  int writes = 0;
};

/// Directory of parameter files keyed by geometry fingerprint. Entries are
/// re-verified against the requested geometry before reuse; entries that
/// fail are deleted. Writes are serialized through one lock.
class ParamCache {
 public:
  explicit ParamCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_))
      throw IoError("cannot create cache directory " + dir_.string() + (ec ? ": " + ec.message() : ""));
  }

  /// Directory named by DAMFLOW_CACHE_DIR, if set and non-empty.
  static std::optional<std::filesystem::path> default_dir() {
    const char* v = std::getenv(kCacheDirEnv);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::filesystem::path(v);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path entry_path(const CutSpec& cs) const { return dir_ / (geometry_fingerprint(cs) + ".json"); }

  std::optional<ExtendedParams> lookup(const CutSpec& cs, const SolverConfig& cfg) {
    const auto p = entry_path(cs);
    std::lock_guard<std::mutex> lock(mutex_);
    std::error_code ec;
    if (!std::filesystem::exists(p, ec)) {
      ++stats_.misses;
      return std::nullopt;
    }
    try {
      const json j = parse_json_text(read_file(p), p.string());
      ExtendedParams ep = params_from_json(detail::field(j, "params", "entry"), "entry.params");
      ep.cuts = cs;
      ep.mp.polygon = cs.base;
      if (params_accepted(ep, cs, cfg)) {
        ++stats_.hits;
        return ep;
      }
    } catch (const std::exception&) {
    }
    std::filesystem::remove(p, ec);
    ++stats_.evictions;
    ++stats_.misses;
    return std::nullopt;
  }

  void store(const CutSolveReport& rep) {
    if (!rep.converged) return;
    const json entry{{"schema_version", kSchemaVersion},
                     {"params", params_to_json(rep.params)},
                     {"solver", {{"residual_norm", rep.residual_norm},
                                 {"newton_steps", rep.newton_steps},
                                 {"continuation_steps", rep.continuation_steps}}}};
    std::lock_guard<std::mutex> lock(mutex_);
    write_file_atomic(entry_path(rep.params.cuts), entry.dump(2) + "\n");
    ++stats_.writes;
  }

  CacheStats stats() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return stats_;
  }

 private:
  std::filesystem::path dir_;
  mutable std::mutex mutex_;
  CacheStats stats_;
};

}  // namespace damflow
