#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "damflow/damflow.hpp"
#include "damflow/io.hpp"

namespace {

using namespace damflow;

enum ExitCode : int { kOk = 0, kInvalid = 2, kSolverFailure = 3, kIoFailure = 4 };

struct Options {
  std::string config;
  std::string output;
  std::string format;
  std::string cache_dir;
  std::optional<double> tol;
  bool no_cache = false;
  bool timestamp = false;
  // map
  std::string direction;
  std::vector<std::string> points;
  // streamlines
  std::string svg;
  // sweep
  int threads = 0;
};

struct Loaded {
  JobConfig job;
  std::string format;
};

Loaded load(const Options& opt, const std::vector<std::string>& formats) {
  Loaded l;
  l.job = load_job(opt.config);
  if (!opt.format.empty()) l.job.output.format = opt.format;
  if (!opt.output.empty()) l.job.output.path = opt.output;
  if (opt.tol) l.job.solver.tol = *opt.tol;
  if (!opt.direction.empty()) l.job.map.direction = opt.direction;
  if (opt.threads > 0) l.job.sweep.threads = opt.threads;
  l.job.validate_settings();
  l.format = l.job.output.format;
  if (std::find(formats.begin(), formats.end(), l.format) == formats.end()) {
    std::string allowed;
    for (const auto& f : formats) allowed += (allowed.empty() ? "" : ", ") + f;
    throw ConfigError("output.format: '" + l.format + "' is not available here (use " + allowed + ")");
  }
  return l;
}

void emit(const std::string& path, const std::string& content) {
  if (path.empty()) {
    std::cout << content;
    std::cout.flush();
    if (!std::cout) throw IoError("cannot write to standard output");
    return;
  }
  write_file_atomic(path, content);
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string json_text(json j, const Options& opt) {
  if (opt.timestamp) j["timestamp"] = utc_now();
  return j.dump(2) + "\n";
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::unique_ptr<ParamCache> open_cache(const Options& opt) {
  if (opt.no_cache) return nullptr;
  if (!opt.cache_dir.empty()) return std::make_unique<ParamCache>(opt.cache_dir);
  if (auto d = ParamCache::default_dir()) return std::make_unique<ParamCache>(*d);
  return nullptr;
}

struct Solved {
  CutSolveReport rep;
  std::string cache = "disabled";
};

Solved solve_job(const JobConfig& job, const Options& opt) {
  job.geometry.validate();
  Solved s;
  const std::unique_ptr<ParamCache> cache = open_cache(opt);
  if (cache) {
    if (auto hit = cache->lookup(job.geometry, job.solver)) {
      s.cache = "hit";
      s.rep.params = *hit;
      s.rep.converged = params_accepted(*hit, job.geometry, job.solver, &s.rep.residual_norm);
      s.rep.message = "converged";
      return s;
    }
    s.cache = "miss";
  }
  s.rep = solve_cut_params_report(job.geometry, job.solver);
  if (cache && s.rep.converged) cache->store(s.rep);
  return s;
}

Solved solve_or_throw(const JobConfig& job, const Options& opt) {
  Solved s = solve_job(job, opt);
  if (!s.rep.converged) throw SolverError("parameter solve failed: " + s.rep.message);
  return s;
}

// validate

int cmd_validate(const Options& opt) {
  const Loaded l = load(opt, {"json", "csv"});
  const auto checks = l.job.geometry.checks();
  bool valid = true;
  for (const auto& c : checks) valid = valid && c.passed;
  if (l.format == "csv") {
    std::ostringstream os;
    os << "name,rule,passed,margin\n";
    for (const auto& c : checks)
      os << c.name << "," << csv_quote(c.rule) << "," << (c.passed ? "true" : "false") << "," << format_double(c.margin) << "\n";
    emit(l.job.output.path, os.str());
  } else {
    json arr = json::array(), violated = json::array();
    for (const auto& c : checks) {
      arr.push_back({{"name", c.name}, {"rule", c.rule}, {"passed", c.passed}, {"margin", c.margin}});
      if (!c.passed) violated.push_back(c.name + ": " + c.rule);
    }
    emit(l.job.output.path, json_text({{"schema_version", kSchemaVersion},
                                       {"command", "validate"},
                                       {"valid", valid},
                                       {"violations", violated},
                                       {"checks", arr}},
                                      opt));
  }
  for (const auto& c : checks)
    if (!c.passed) std::cerr << "invalid geometry: " << c.name << " violates " << c.rule << "\n";
  return valid ? kOk : kInvalid;
}

// solve

int cmd_solve(const Options& opt) {
  const Loaded l = load(opt, {"json"});
  const Solved s = solve_job(l.job, opt);
  const CutSolveReport& rep = s.rep;
  json rows = json::object();
  try {
    if (l.job.geometry.is_zero()) {
      const ResidualVector rv = residual(rep.params.mp, l.job.geometry.base, l.job.solver.series);
      for (int k = 0; k < 9; ++k) rows[ResidualVector::names[k]] = rv.r[k];
    } else {
      const ExtendedResidual er = extended_residual(rep.params, l.job.geometry, l.job.solver.series);
      for (int k = 0; k < 15; ++k) rows[ExtendedResidual::names[k]] = er.r[k];
    }
  } catch (const std::exception& e) {
    rows["error"] = e.what();
  }
  const json out{{"schema_version", kSchemaVersion},
                 {"command", "solve"},
                 {"converged", rep.converged},
                 {"message", rep.message},
                 {"cache", s.cache},
                 {"params", params_to_json(rep.params)},
                 {"residual", {{"scaled_norm", rep.residual_norm}, {"rows", rows}}},
                 {"lemma", {{"omega_in_cone", rep.params.mp.in_lemma_cone()}, {"u_ordering", rep.params.mp.lemma_ordering()}}},
                 {"newton_steps", rep.newton_steps},
                 {"continuation_steps", rep.continuation_steps}};
  emit(l.job.output.path, json_text(out, opt));
  if (!rep.converged) {
    std::cerr << "solver failure: " << rep.message << "\n";
    return kSolverFailure;
  }
  return kOk;
}

// kappa

int cmd_kappa(const Options& opt) {
  const Loaded l = load(opt, {"json", "csv"});
  const Solved s = solve_or_throw(l.job, opt);
  const double lambda = lambda_modulus(s.rep.params.mp, l.job.solver.series);
  const double k_hyp = aspect_ratio(lambda), k_agm = aspect_ratio_agm(lambda);
  const double q = total_flow({lambda, k_hyp}, l.job.flow);
  if (l.format == "csv") {
    std::ostringstream os;
    os << "lambda,kappa_hyp,kappa_agm,kappa_difference,Q\n"
       << format_double(lambda) << "," << format_double(k_hyp) << "," << format_double(k_agm) << ","
       << format_double(k_hyp - k_agm) << "," << format_double(q) << "\n";
    emit(l.job.output.path, os.str());
  } else {
    emit(l.job.output.path, json_text({{"schema_version", kSchemaVersion},
                                       {"command", "kappa"},
                                       {"lambda", lambda},
                                       {"kappa", k_hyp},
                                       {"kappa_hyp", k_hyp},
                                       {"kappa_agm", k_agm},
                                       {"kappa_difference", k_hyp - k_agm},
                                       {"permeability", l.job.flow.permeability},
                                       {"head_drop", l.job.flow.head_drop},
                                       {"Q", q},
                                       {"cache", s.cache}},
                                      opt));
  }
  return kOk;
}

// map

cplx parse_point(const std::string& s) {
  const auto comma = s.find(',');
  try {
    if (comma == std::string::npos) return {std::stod(s), 0.0};
    return {std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1))};
  } catch (const std::exception&) {
    throw ConfigError("--point: cannot parse '" + s + "' (expected RE,IM)");
  }
}

double cut_distance(const CutSpec& cs, cplx w) {
  double d = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (cs.lengths[k] == 0.0) continue;
    const cplx a = cs.corner(k), b = cs.tip(k), ab = b - a;
    const double t = std::clamp(((w - a) * std::conj(ab)).real() / std::norm(ab), 0.0, 1.0);
    d = std::min(d, std::abs(w - (a + t * ab)));
  }
  return d;
}

struct MapRow {
  cplx in, out;
  double roundtrip = 0.0;
  std::string status = "ok";
};

int cmd_map(const Options& opt) {
  Loaded l = load(opt, {"json", "csv"});
  for (const auto& p : opt.points) l.job.map.points.push_back(parse_point(p));
  if (l.job.map.points.empty()) throw ConfigError("map: no points (use map.points or --point)");
  const Solved s = solve_or_throw(l.job, opt);
  const ScMap map(s.rep.params.mp);
  const CutSpec& cs = l.job.geometry;
  const bool x2w = l.job.map.direction == "x2w";
  std::vector<MapRow> rows;
  for (cplx p : l.job.map.points) {
    MapRow r;
    r.in = p;
    try {
      if (x2w) {
        if (p.imag() < 0.0) throw std::domain_error("exterior: point in the lower half-plane");
        r.out = map.map_x_to_w(p);
        if (p.imag() > 0.0) {
          r.roundtrip = std::abs(map.map_w_to_x(r.out) - p) / std::max(1.0, std::abs(p));
        } else {
          // Real x lands on the boundary, where the inverse is not defined.
          r.roundtrip = std::nan("");
          r.status = "boundary";
        }
      } else {
        if (!cs.base.contains(p) || !(cut_distance(cs, p) > 0.0)) throw std::domain_error("exterior: point outside the domain");
        r.out = map.map_w_to_x(p);
        r.roundtrip = std::abs(map.map_x_to_w(r.out) - p) / std::max(1.0, std::abs(p));
      }
    } catch (const std::exception& e) {
      r.out = cplx(std::nan(""), std::nan(""));
      r.roundtrip = std::nan("");
      r.status = std::string("error: ") + e.what();
    }
    rows.push_back(r);
  }
  const std::string a = x2w ? "x" : "w", b = x2w ? "w" : "x";
  if (l.format == "csv") {
    std::ostringstream os;
    os << "index,re_" << a << ",im_" << a << ",re_" << b << ",im_" << b << ",roundtrip_error,status\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const MapRow& r = rows[i];
      os << i << "," << format_double(r.in.real()) << "," << format_double(r.in.imag()) << "," << format_double(r.out.real())
         << "," << format_double(r.out.imag()) << "," << format_double(r.roundtrip) << "," << csv_quote(r.status) << "\n";
    }
    emit(l.job.output.path, os.str());
  } else {
    json arr = json::array();
    for (const MapRow& r : rows) {
      json row{{a, {r.in.real(), r.in.imag()}}, {"status", r.status}};
      if (r.status == "ok" || r.status == "boundary") row[b] = {r.out.real(), r.out.imag()};
      if (r.status == "ok") row["roundtrip_error"] = r.roundtrip;
      arr.push_back(row);
    }
    emit(l.job.output.path, json_text({{"schema_version", kSchemaVersion},
                                       {"command", "map"},
                                       {"direction", l.job.map.direction},
                                       {"points", arr}},
                                      opt));
  }
  return kOk;
}

// streamlines

std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v + 0.0);
  return buf;
}

std::string svg_plot(const CutSpec& cs, const std::vector<Polyline>& lines) {
  const PolygonSpec& P = cs.base;
  const auto v = P.vertices();
  const double footprint = v[0].real() - v[5].real();
  const double xl = v[5].real() - 1.5 * footprint, xr = v[0].real() + 1.5 * footprint;
  double top = 0.0;
  for (cplx w : v) top = std::max(top, w.imag());
  const double bottom = P.bed_level();
  const double pad = 0.02 * (xr - xl);
  auto pt = [](cplx w) { return svg_number(w.real()) + "," + svg_number(-w.imag()); };
  std::ostringstream os;
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"" << svg_number(xl - pad) << " " << svg_number(-top - pad) << " "
     << svg_number(xr - xl + 2.0 * pad) << " " << svg_number(top - bottom + 2.0 * pad) << "\" width=\"800\" height=\""
     << svg_number(800.0 * (top - bottom + 2.0 * pad) / (xr - xl + 2.0 * pad)) << "\">\n";
  const std::string sw = svg_number(0.004 * (xr - xl));
  os << "  <path class=\"boundary\" fill=\"none\" stroke=\"black\" stroke-width=\"" << sw << "\" d=\"M " << pt({xl, v[5].imag()});
  for (int s = 5; s >= 0; --s) os << " L " << pt(v[s]);
  os << " L " << pt({xr, 0.0}) << "\"/>\n";
  os << "  <path class=\"bed\" fill=\"none\" stroke=\"black\" stroke-width=\"" << sw << "\" d=\"M " << pt({xl, bottom}) << " L "
     << pt({xr, bottom}) << "\"/>\n";
  for (int k = 0; k < 3; ++k)
    if (cs.lengths[k] > 0.0)
      os << "  <path class=\"cut\" fill=\"none\" stroke=\"black\" stroke-width=\"" << sw << "\" d=\"M " << pt(cs.corner(k))
         << " L " << pt(cs.tip(k)) << "\"/>\n";
  for (const Polyline& line : lines) {
    std::string d;
    bool pen = false;
    for (cplx w : line.w) {
      const bool in = w.real() >= xl && w.real() <= xr;
      if (in) {
        d += (d.empty() ? "" : " ") + std::string(pen ? "L " : "M ") + pt(w);
      }
      pen = in;
    }
    if (!d.empty())
      os << "  <path class=\"streamline\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"" << sw << "\" d=\"" << d
         << "\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

int cmd_streamlines(const Options& opt) {
  const Loaded l = load(opt, {"csv", "svg", "json"});
  const Solved s = solve_or_throw(l.job, opt);
  const ScMap map(s.rep.params.mp);
  const RectModel rm = rect_model(s.rep.params.mp);
  const int n = l.job.output.streamlines;
  std::vector<Polyline> lines;
  bool complete = true;
  for (int k = 1; k <= n; ++k) {
    lines.push_back(trace_streamline(static_cast<double>(k) / (n + 1), l.job.output.samples, map, rm));
    if (!lines.back().complete()) {
      complete = false;
      std::cerr << "streamline " << k - 1 << " incomplete: " << lines.back().error << "\n";
    }
  }
  std::ostringstream csv;
  csv << "line_id,index,re_w,im_w\n";
  for (std::size_t k = 0; k < lines.size(); ++k)
    for (std::size_t i = 0; i < lines[k].w.size(); ++i)
      csv << k << "," << i << "," << format_double(lines[k].w[i].real()) << "," << format_double(lines[k].w[i].imag()) << "\n";
  const std::string svg = svg_plot(l.job.geometry, lines);
  if (l.format == "csv") {
    emit(l.job.output.path, csv.str());
  } else if (l.format == "svg") {
    emit(l.job.output.path, svg);
  } else {
    json arr = json::array();
    for (std::size_t k = 0; k < lines.size(); ++k) {
      json pts = json::array();
      for (cplx w : lines[k].w) pts.push_back({w.real(), w.imag()});
      arr.push_back({{"line_id", k},
                     {"q_fraction", static_cast<double>(k + 1) / (n + 1)},
                     {"complete", lines[k].complete()},
                     {"points", pts}});
    }
    emit(l.job.output.path, json_text({{"schema_version", kSchemaVersion}, {"command", "streamlines"}, {"lines", arr}}, opt));
  }
  if (!opt.svg.empty()) write_file_atomic(opt.svg, svg);
  return complete ? kOk : kSolverFailure;
}

// sweep

int cmd_sweep(const Options& opt) {
  const Loaded l = load(opt, {"csv", "json"});
  l.job.geometry.base.validate();
  const std::unique_ptr<ParamCache> cache = open_cache(opt);
  SweepOptions so;
  so.threads = l.job.sweep.threads;
  if (cache) {
    so.lookup = [&](const CutSpec& cs) { return cache->lookup(cs, l.job.solver); };
    so.store = [&](const CutSolveReport& rep) { cache->store(rep); };
  }
  const SweepTable t = kappa_sweep(l.job.geometry, l.job.sweep.grid, l.job.solver, so);
  int cached = 0, failed = 0;
  for (const auto& c : t.cells) {
    cached += c.cached;
    failed += !c.ok;
  }
  if (l.format == "csv") {
    std::ostringstream os;
    os << "l_w2,l_w4,l_w5,ok,kappa,lambda,error\n";
    for (const auto& c : t.cells)
      os << format_double(c.lengths[0]) << "," << format_double(c.lengths[1]) << "," << format_double(c.lengths[2]) << ","
         << (c.ok ? "true" : "false") << "," << (c.ok ? format_double(c.kappa) : "") << ","
         << (c.ok ? format_double(c.lambda) : "") << "," << csv_quote(c.error) << "\n";
    emit(l.job.output.path, os.str());
  } else {
    json arr = json::array();
    for (const auto& c : t.cells) {
      json cell{{"lengths", c.lengths}, {"ok", c.ok}};
      if (c.ok) {
        cell["kappa"] = c.kappa;
        cell["lambda"] = c.lambda;
      } else {
        cell["error"] = c.error;
      }
      arr.push_back(cell);
    }
    emit(l.job.output.path, json_text({{"schema_version", kSchemaVersion},
                                       {"command", "sweep"},
                                       {"directions", cuts_to_json(l.job.geometry)["directions"]},
                                       {"cells", arr}},
                                      opt));
  }
  std::cerr << "sweep: " << t.cells.size() << " cells, " << cached << " from cache, "
            << t.cells.size() - static_cast<std::size_t>(cached) - static_cast<std::size_t>(failed) << " solved, " << failed
            << " failed\n";
  return failed == 0 ? kOk : kSolverFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conformal maps of dam cross-sections and seepage characteristics"};
  app.require_subcommand(1, 1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "job configuration (JSON)")->required();
    sub->add_option("--output", opt.output, "output file (default: standard output)");
    sub->add_option("--format", opt.format, "json, csv or svg");
    sub->add_option("--cache-dir", opt.cache_dir, std::string("parameter cache directory (default: $") + kCacheDirEnv + ")");
    sub->add_option("--tol", opt.tol, "solver tolerance");
    sub->add_flag("--no-cache", opt.no_cache, "do not read or write the parameter cache");
    sub->add_flag("--timestamp", opt.timestamp, "add a timestamp field to JSON output");
  };

  std::vector<std::pair<CLI::App*, int (*)(const Options&)>> commands;
  commands.emplace_back(app.add_subcommand("validate", "check the geometry against the admissibility rules"), cmd_validate);
  commands.emplace_back(app.add_subcommand("solve", "solve the auxiliary parameters"), cmd_solve);
  commands.emplace_back(app.add_subcommand("kappa", "aspect ratio, modulus and total flow"), cmd_kappa);
  commands.emplace_back(app.add_subcommand("map", "map points between the half-plane and the domain"), cmd_map);
  commands.emplace_back(app.add_subcommand("streamlines", "trace streamlines (CSV, SVG or JSON)"), cmd_streamlines);
  commands.emplace_back(app.add_subcommand("sweep", "aspect ratio over a grid of cut lengths"), cmd_sweep);
  for (auto& [sub, fn] : commands) common(sub);
  commands[3].first->add_option("--direction", opt.direction, "x2w or w2x");
  commands[3].first->add_option("--point", opt.points, "point RE,IM (repeatable)");
  commands[4].first->add_option("--svg", opt.svg, "also write an SVG plot to this file");
  commands[5].first->add_option("--threads", opt.threads, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    for (auto& [sub, fn] : commands)
      if (sub->parsed()) return fn(opt);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kInvalid;
  } catch (const GeometryError& e) {
    std::cerr << "invalid geometry: " << e.what() << "\n";
    return kInvalid;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const std::exception& e) {
    std::cerr << "solver failure: " << e.what() << "\n";
    return kSolverFailure;
  }
  return kInvalid;
}
