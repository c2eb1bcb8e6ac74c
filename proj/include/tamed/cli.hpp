#pragma once

// Command-line front end: JSON config + flag overrides, validation with
// field paths, experiment dispatch, CSV and manifest output.
//
// Exit codes: 0 success, 2 configuration error, 1 runtime failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tamed/experiments.hpp"
#include "tamed/io.hpp"
#include "tamed/model.hpp"
#include "tamed/scheme.hpp"

#ifndef TAMED_VERSION_STRING
#define TAMED_VERSION_STRING "0.1.0"
#endif

namespace tamed::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* kOutputDirEnv = "TAMED_OUTPUT_DIR";

/// Configuration problem; `field` is a dotted path such as "stability.gaps[0]".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct JumpSpec {
  std::string kind = "gaussian";
  double mean = kBuiltinJumpMean;
  double std = kBuiltinJumpStd;
  double lambda = 3.0;
};

struct ModelSpec {
  std::string name = "model1";
  double a = 1.0;
  double b = 2.0;
  double c = 1.0;
  std::optional<double> chi;
  std::optional<double> p0;
  JumpSpec jumps;
};

struct ProbeSpec {
  std::size_t n = 2000;
  double radius = 4.0;
};

struct RunConfig {
  std::string command;
  ModelSpec model;
  double T = 1.0;
  double x0 = 2.0;
  double s = 0.0;
  double epsilon = 0.05;
  std::size_t mc = 1000;
  std::vector<double> meshes;
  double ref = 0.0;
  double mesh = 0.0;
  std::vector<double> gaps;
  std::vector<double> s_values;
  std::size_t paths = 500;
  double p = 2.0;
  double zeta = kDefaultZeta;
  std::uint64_t seed = kDefaultSeed;
  std::size_t threads = 0;
  std::string output_dir = ".";
  ProbeSpec probe;
};

inline const std::vector<std::string>& commands() {
  static const std::vector<std::string> c = {"simulate",  "convergence",       "stability", "heatmap",
                                             "timeshift", "check-assumptions", "pstar"};
  return c;
}

// ---------------------------------------------------------------------------
// Numeric list syntax: "2^-8..2^-12", "2^-6", "1e-3,1e-2", "10^-8..10^-5".

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t");
  const auto e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline double parse_scalar(const std::string& raw, const std::string& field) {
  const std::string t = trim(raw);
  try {
    const auto caret = t.find('^');
    if (caret != std::string::npos) {
      const std::string base = t.substr(0, caret);
      const int e = std::stoi(t.substr(caret + 1));
      if (base == "2") return std::ldexp(1.0, e);
      if (base == "10") return std::stod("1e" + std::to_string(e));
      return std::pow(std::stod(base), e);
    }
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(field, "cannot parse number '" + t + "'");
  }
}

// "B^a..B^b" -> all integer exponents from a to b inclusive, in order.
inline std::vector<double> parse_range(const std::string& lo, const std::string& hi, const std::string& field) {
  auto split = [&](const std::string& s) {
    const std::string t = trim(s);
    const auto caret = t.find('^');
    if (caret == std::string::npos) throw ConfigError(field, "ranges need the form B^a..B^b");
    return std::pair{t.substr(0, caret), std::stoi(t.substr(caret + 1))};
  };
  const auto [b1, e1] = split(lo);
  const auto [b2, e2] = split(hi);
  if (b1 != b2) throw ConfigError(field, "range endpoints need the same base");
  std::vector<double> out;
  const int stepdir = e2 >= e1 ? 1 : -1;
  for (int e = e1;; e += stepdir) {
    out.push_back(parse_scalar(b1 + "^" + std::to_string(e), field));
    if (e == e2) break;
  }
  return out;
}

}  // namespace detail

inline std::vector<double> parse_number_list(const std::string& text, const std::string& field) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    const auto dots = item.find("..");
    if (dots != std::string::npos) {
      const auto r = detail::parse_range(item.substr(0, dots), item.substr(dots + 2), field);
      out.insert(out.end(), r.begin(), r.end());
    } else {
      out.push_back(detail::parse_scalar(item, field));
    }
  }
  if (out.empty()) throw ConfigError(field, "empty list");
  return out;
}

// ---------------------------------------------------------------------------
// Defaults per command (desk-scale configurations)

inline std::vector<double> dyadic(int from, int to) {
  std::vector<double> v;
  for (int k = from; k <= to; ++k) v.push_back(std::ldexp(1.0, -k));
  return v;
}

inline RunConfig defaults_for(const std::string& command) {
  RunConfig c;
  c.command = command;
  if (command == "convergence") {
    c.meshes = dyadic(8, 12);
    c.ref = std::ldexp(1.0, -15);
  } else if (command == "stability") {
    c.mesh = std::ldexp(1.0, -12);
    c.gaps = {1e-8, 1e-7, 1e-6, 1e-5};
    c.model.jumps.lambda = 0.5;
  } else if (command == "heatmap") {
    c.meshes = dyadic(6, 10);
    c.gaps = {1e-3, std::pow(10.0, -2.5), 1e-2, std::pow(10.0, -1.5), 1e-1};
    c.paths = 300;
  } else if (command == "timeshift") {
    c.mesh = std::ldexp(1.0, -8);
    c.s_values = {std::ldexp(1.0, -6), std::ldexp(1.0, -5), std::ldexp(1.0, -4), std::ldexp(1.0, -3), std::ldexp(1.0, -2)};
    c.paths = 300;
  } else if (command == "simulate") {
    c.mesh = std::ldexp(1.0, -8);
    c.paths = 10;
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON

inline json to_json(const RunConfig& c) {
  json m = {{"name", c.model.name},
            {"params", {{"a", c.model.a}, {"b", c.model.b}, {"c", c.model.c}}},
            {"chi", c.model.chi ? json(*c.model.chi) : json(nullptr)},
            {"p0", c.model.p0 ? json(*c.model.p0) : json(nullptr)},
            {"jumps",
             {{"kind", c.model.jumps.kind},
              {"mean", c.model.jumps.mean},
              {"std", c.model.jumps.std},
              {"lambda", c.model.jumps.lambda}}}};
  return json{{"command", c.command},
              {"model", m},
              {"T", c.T},
              {"x0", c.x0},
              {"s", c.s},
              {"epsilon", c.epsilon},
              {"mc", c.mc},
              {"meshes", c.meshes},
              {"ref", c.ref},
              {"mesh", c.mesh},
              {"gaps", c.gaps},
              {"s_values", c.s_values},
              {"paths", c.paths},
              {"p", c.p},
              {"zeta", c.zeta},
              {"seed", c.seed},
              {"threads", c.threads},
              {"output_dir", c.output_dir},
              {"probe", {{"n", c.probe.n}, {"radius", c.probe.radius}}}};
}

namespace detail {

template <class T>
T get_as(const json& j, const std::string& field) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(field, "wrong type");
  }
}

inline double get_number(const json& j, const std::string& field) {
  if (j.is_string()) return parse_scalar(j.get<std::string>(), field);
  if (!j.is_number()) throw ConfigError(field, "expected a number");
  return j.get<double>();
}

inline std::size_t get_count(const json& j, const std::string& field) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) throw ConfigError(field, "expected a non-negative integer");
  if (j.is_number_integer() && j.get<long long>() < 0) throw ConfigError(field, "expected a non-negative integer");
  return j.get<std::size_t>();
}

inline std::vector<double> get_list(const json& j, const std::string& field) {
  if (j.is_string()) return parse_number_list(j.get<std::string>(), field);
  if (!j.is_array()) throw ConfigError(field, "expected a list");
  std::vector<double> v;
  for (std::size_t i = 0; i < j.size(); ++i) v.push_back(get_number(j[i], field + "[" + std::to_string(i) + "]"));
  return v;
}

inline void expect_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw ConfigError(field, "expected an object");
}

}  // namespace detail

/// Merges a JSON object into `c`. Unknown keys are rejected. A run manifest
/// (object with a "config" member) is accepted in place of a config.
inline void merge_json(RunConfig& c, const json& input) {
  using namespace detail;
  const json& j = input.contains("config") && input.contains("version") ? input.at("config") : input;
  expect_object(j, "");
  for (const auto& [key, v] : j.items()) {
    if (key == "command") {
      const auto cmd = get_as<std::string>(v, key);
      if (!c.command.empty() && cmd != c.command)
        throw ConfigError("command", "config is for '" + cmd + "' but '" + c.command + "' was requested");
      c.command = cmd;
    } else if (key == "model") {
      if (v.is_string()) {
        c.model.name = v.get<std::string>();
        continue;
      }
      expect_object(v, "model");
      for (const auto& [mk, mv] : v.items()) {
        const std::string f = "model." + mk;
        if (mk == "name") c.model.name = get_as<std::string>(mv, f);
        else if (mk == "chi") c.model.chi = mv.is_null() ? std::nullopt : std::optional<double>(get_number(mv, f));
        else if (mk == "p0") c.model.p0 = mv.is_null() ? std::nullopt : std::optional<double>(get_number(mv, f));
        else if (mk == "params") {
          expect_object(mv, f);
          for (const auto& [pk, pv] : mv.items()) {
            const std::string pf = f + "." + pk;
            if (pk == "a") c.model.a = get_number(pv, pf);
            else if (pk == "b") c.model.b = get_number(pv, pf);
            else if (pk == "c") c.model.c = get_number(pv, pf);
            else if (pk == "lambda") c.model.jumps.lambda = get_number(pv, pf);
            else throw ConfigError(pf, "unknown key");
          }
        } else if (mk == "jumps") {
          expect_object(mv, f);
          for (const auto& [jk, jv] : mv.items()) {
            const std::string jf = f + "." + jk;
            if (jk == "kind") c.model.jumps.kind = get_as<std::string>(jv, jf);
            else if (jk == "mean") c.model.jumps.mean = get_number(jv, jf);
            else if (jk == "std") c.model.jumps.std = get_number(jv, jf);
            else if (jk == "lambda") c.model.jumps.lambda = get_number(jv, jf);
            else throw ConfigError(jf, "unknown key");
          }
        } else {
          throw ConfigError(f, "unknown key");
        }
      }
    } else if (key == "T") c.T = get_number(v, key);
    else if (key == "x0") c.x0 = get_number(v, key);
    else if (key == "s") c.s = get_number(v, key);
    else if (key == "epsilon") c.epsilon = get_number(v, key);
    else if (key == "mc") c.mc = get_count(v, key);
    else if (key == "meshes") c.meshes = get_list(v, key);
    else if (key == "ref") c.ref = get_number(v, key);
    else if (key == "mesh") c.mesh = get_number(v, key);
    else if (key == "gaps") c.gaps = get_list(v, key);
    else if (key == "s_values") c.s_values = get_list(v, key);
    else if (key == "paths") c.paths = get_count(v, key);
    else if (key == "p") c.p = get_number(v, key);
    else if (key == "zeta") c.zeta = get_number(v, key);
    else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError(key, "expected a 64-bit unsigned integer");
      c.seed = v.get<std::uint64_t>();
    } else if (key == "threads") c.threads = get_count(v, key);
    else if (key == "output_dir") c.output_dir = get_as<std::string>(v, key);
    else if (key == "probe") {
      expect_object(v, key);
      for (const auto& [pk, pv] : v.items()) {
        if (pk == "n") c.probe.n = get_count(pv, "probe.n");
        else if (pk == "radius") c.probe.radius = get_number(pv, "probe.radius");
        else throw ConfigError("probe." + pk, "unknown key");
      }
    } else {
      throw ConfigError(key, "unknown key");
    }
  }
}

// ---------------------------------------------------------------------------
// Validation (before any simulation starts)

namespace detail {

inline void require(bool ok, const std::string& field, const std::string& message) {
  if (!ok) throw ConfigError(field, message);
}

inline void check_mesh(double m, double T, const std::string& field) {
  require(m > 0.0 && std::isfinite(m), field, "mesh must be positive");
  require(m < 1.0, field, "mesh must be < 1");
  const double n = T / m;
  require(std::abs(n - std::round(n)) <= 1e-9 * std::max(1.0, n), field, "T / mesh must be an integer");
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  using detail::require;
  const std::string& cmd = c.command;
  require(std::find(commands().begin(), commands().end(), cmd) != commands().end(), "command",
          "unknown command '" + cmd + "'");
  if (cmd == "pstar") {
    require(c.zeta > 0.0, "pstar.zeta", "zeta must be positive");
    if (c.model.p0) require(*c.model.p0 >= 2.0, "pstar.p0", "p0 must be >= 2");
    if (c.model.chi) require(*c.model.chi >= 1.0, "pstar.chi", "chi must be >= 1");
    return;
  }
  const std::string m = "model";
  require(c.model.name == "model1" || c.model.name == "model2", m + ".name",
          c.model.name == "custom" ? "custom models are registered through the library API, not the CLI"
                                   : "unknown model '" + c.model.name + "'");
  require(c.model.jumps.kind == "gaussian", m + ".jumps.kind", "only 'gaussian' jump laws are built in");
  require(c.model.jumps.std > 0.0, m + ".jumps.std", "std must be positive");
  require(c.model.jumps.lambda >= 0.0, m + ".jumps.lambda", "lambda must be >= 0");
  if (c.model.name == "model2") {
    require(c.model.a >= 0.0 && c.model.b >= 0.0 && c.model.c >= 0.0, m + ".params", "a, b, c must be >= 0");
    require(c.model.c > 0.0, m + ".params.c", "c must be positive (p0 = 4a/(3c^2) + 1)");
    if (!c.model.p0)
      require(4.0 * c.model.a / (3.0 * c.model.c * c.model.c) + 1.0 >= 2.0, m + ".params",
              "4a/(3c^2) + 1 must be >= 2");
  }
  if (c.model.chi) require(*c.model.chi >= 1.0, m + ".chi", "chi must be >= 1");
  if (c.model.p0) require(*c.model.p0 >= 2.0, m + ".p0", "p0 must be >= 2");
  if (cmd == "check-assumptions") {
    require(c.probe.n >= 100, "probe.n", "need at least 100 probes");
    require(c.probe.radius > 0.0, "probe.radius", "radius must be positive");
    return;
  }

  require(c.T > 0.0 && std::isfinite(c.T), "T", "T must be positive");
  require(std::isfinite(c.x0), "x0", "x0 must be finite");
  require(c.s >= 0.0 && c.s < c.T, "s", "s must lie in [0, T)");
  require(c.epsilon > 0.0 && c.epsilon < 1.0, "epsilon", "epsilon must lie in (0, 1)");
  require(c.mc >= 1, "mc", "mc must be >= 1");
  require(c.paths >= 1, "paths", "paths must be >= 1");
  require(c.p >= 1.0, "p", "p must be >= 1");

  auto check_meshes = [&](const std::string& f) {
    require(!c.meshes.empty(), cmd + "." + f, "meshes must not be empty");
    for (std::size_t i = 0; i < c.meshes.size(); ++i) {
      detail::check_mesh(c.meshes[i], c.T, cmd + "." + f + "[" + std::to_string(i) + "]");
    }
    std::vector<double> sorted = c.meshes;
    std::sort(sorted.begin(), sorted.end());
    require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), cmd + "." + f, "meshes must be unique");
  };
  auto check_gaps = [&] {
    require(!c.gaps.empty(), cmd + ".gaps", "gaps must not be empty");
    for (std::size_t i = 0; i < c.gaps.size(); ++i) {
      require(c.gaps[i] > 0.0 && std::isfinite(c.gaps[i]), cmd + ".gaps[" + std::to_string(i) + "]",
              "gaps must be positive");
    }
  };

  if (cmd == "convergence") {
    check_meshes("meshes");
    detail::check_mesh(c.ref, c.T, "convergence.ref");
    for (std::size_t i = 0; i < c.meshes.size(); ++i) {
      const std::string f = "convergence.meshes[" + std::to_string(i) + "]";
      require(c.meshes[i] >= c.ref, f, "mesh is finer than the reference mesh");
      require(is_dyadic_mesh(c.meshes[i] / c.ref), f, "mesh / ref must be a power of two (nested grids)");
    }
  } else if (cmd == "stability") {
    detail::check_mesh(c.mesh, c.T, "stability.mesh");
    check_gaps();
  } else if (cmd == "heatmap") {
    check_meshes("meshes");
    check_gaps();
    const double finest = *std::min_element(c.meshes.begin(), c.meshes.end());
    for (std::size_t i = 0; i < c.meshes.size(); ++i) {
      require(is_dyadic_mesh(c.meshes[i] / finest), "heatmap.meshes[" + std::to_string(i) + "]",
              "meshes must be nested (ratios powers of two)");
    }
  } else if (cmd == "timeshift") {
    detail::check_mesh(c.mesh, c.T, "timeshift.mesh");
    require(!c.s_values.empty(), "timeshift.s_values", "s_values must not be empty");
    auto on_grid = [&](double t) {
      const double k = t / c.mesh;
      return std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k);
    };
    require(on_grid(c.s), "s", "s must be a grid point of the mesh");
    for (std::size_t i = 0; i < c.s_values.size(); ++i) {
      const std::string f = "timeshift.s_values[" + std::to_string(i) + "]";
      require(c.s_values[i] >= 0.0 && c.s_values[i] < c.T, f, "s values must lie in [0, T)");
      require(on_grid(c.s_values[i]), f, "s values must be grid points of the mesh");
    }
  } else if (cmd == "simulate") {
    detail::check_mesh(c.mesh, c.T, "simulate.mesh");
    require(c.s == 0.0 || std::abs(c.s / c.mesh - std::round(c.s / c.mesh)) < 1e-9, "s",
            "s must be a grid point of the mesh");
  }
}

// ---------------------------------------------------------------------------
// Execution

inline Model1D build_model(const ModelSpec& spec) {
  const auto law = gaussian_jump_law(spec.jumps.lambda, spec.jumps.mean, spec.jumps.std);
  Model1D m = spec.name == "model2" ? make_model2(spec.a, spec.b, spec.c, law) : make_model1(law);
  if (spec.chi) m.chi = *spec.chi;
  if (spec.p0) m.p0 = *spec.p0;
  m.validate();
  return m;
}

inline ExperimentSettings<1> settings_from(const RunConfig& c) {
  ExperimentSettings<1> s;
  s.horizon = c.T;
  s.x0 = Vec<1>(c.x0);
  s.start_time = c.s;
  s.epsilon = c.epsilon;
  s.mc_samples = c.mc;
  s.n_paths = c.paths;
  s.p = c.p;
  s.seed = c.seed;
  s.threads = c.threads;
  return s;
}

struct RunOutcome {
  std::vector<std::string> outputs;
  std::map<std::string, std::size_t> diverged;
  std::vector<std::string> warnings;
  json extra = json::object();
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("error writing " + path.string());
}

inline std::string table_csv(const ErrorTable& t) {
  std::ostringstream os;
  write_table_csv(os, t);
  return os.str();
}

inline std::string slopes_csv(const std::string& name, const ExperimentResult& r) {
  std::vector<NamedFit> fits;
  if (r.fit) fits.push_back({name, *r.fit});
  std::ostringstream os;
  write_slopes_csv(os, fits);
  return os.str();
}

inline void emit_experiment(const std::string& name, const ExperimentResult& r, const std::filesystem::path& dir,
                            bool with_slopes, RunOutcome& out, std::ostream& log) {
  write_file(dir / (name + ".csv"), table_csv(r.table));
  out.outputs.push_back(name + ".csv");
  if (with_slopes) {
    write_file(dir / "slopes.csv", slopes_csv(name, r));
    out.outputs.push_back("slopes.csv");
    if (r.fit) {
      log << name << " slope " << format_double(r.fit->slope) << " (se " << format_double(r.fit->slope_se)
          << "), r^2 " << format_double(r.fit->r_squared) << '\n';
    } else {
      log << name << ": slope not defined (fewer than two positive errors)\n";
    }
  }
  out.diverged[name] = r.diverged_paths;
  out.warnings.insert(out.warnings.end(), r.warnings.begin(), r.warnings.end());
}

inline json report_json(const AssumptionReport& rep) {
  json checks = json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"name", c.name},
                      {"verdict", to_string(c.verdict)},
                      {"estimate", c.estimate},
                      {"per_radius", c.per_radius},
                      {"witness_x", c.witness_x},
                      {"witness_y", c.witness_y},
                      {"note", c.note}});
  }
  return {{"checks", checks},
          {"pstar", rep.pstar},
          {"zeta", rep.zeta},
          {"fitted_q", rep.fitted_q},
          {"Z_d", rep.zd_used},
          {"skipped_pairs", rep.skipped_pairs},
          {"insufficient_diversity", rep.insufficient_diversity}};
}

}  // namespace detail

/// Runs a validated config, writing outputs under c.output_dir.
inline RunOutcome execute(const RunConfig& c, std::ostream& log) {
  RunOutcome out;
  const std::filesystem::path dir(c.output_dir);
  if (c.command == "pstar") {
    const double p0 = c.model.p0.value_or(c.model.name == "model2" ? 4.0 * c.model.a / (3.0 * c.model.c * c.model.c) + 1.0 : 2.5);
    const double chi = c.model.chi.value_or(c.model.name == "model2" ? 2.0 : 4.0);
    const auto t = pstar_terms(p0, chi, c.zeta);
    std::ostringstream os;
    os << std::fixed << std::setprecision(5) << t.value();
    log << os.str() << '\n';
    out.extra = {{"pstar", t.value()}, {"terms", t.terms}, {"argmin", t.argmin}};
    return out;
  }

  std::filesystem::create_directories(dir);
  const Model1D model = build_model(c.model);
  const auto s = settings_from(c);

  if (c.command == "convergence") {
    detail::emit_experiment("convergence", strong_convergence(model, c.meshes, c.ref, s), dir, true, out, log);
  } else if (c.command == "stability") {
    detail::emit_experiment("stability", stability_initial_value(model, c.gaps, c.mesh, s), dir, true, out, log);
  } else if (c.command == "heatmap") {
    detail::emit_experiment("heatmap", heatmap_joint(model, c.gaps, c.meshes, s), dir, false, out, log);
  } else if (c.command == "timeshift") {
    detail::emit_experiment("timeshift", initial_time_perturbation(model, c.s_values, c.mesh, s), dir, true, out, log);
  } else if (c.command == "simulate") {
    const auto map = build_grid_with_mesh(c.mesh, c.T);
    const TruncatedJumpLaw<1> tlaw(model.jumps, c.epsilon);
    std::vector<PathResult<1>> paths(c.paths);
    const std::uint64_t tag = hash_tag("simulate");
    parallel_for(c.paths, c.threads, [&](std::size_t k) {
      const auto noise = tamed::detail::path_noise<1, 1>(map, tlaw, c.seed, tag, k);
      const SchemeConfig<1> cfg{c.s, Vec<1>(c.x0), map, c.epsilon, c.mc, true};
      paths[k] = simulate_path(model, cfg, noise);
    });
    std::ostringstream os;
    write_trajectories_csv<1>(os, paths);
    detail::write_file(dir / "trajectories.csv", os.str());
    out.outputs.push_back("trajectories.csv");
    std::size_t div = 0;
    for (const auto& p : paths) div += p.diagnostics.diverged ? 1 : 0;
    out.diverged["simulate"] = div;
    log << "simulated " << c.paths << " paths (" << div << " diverged)\n";
  } else if (c.command == "check-assumptions") {
    Engine rng = make_stream(c.seed, {hash_tag("probe")});
    ProbeOptions opt;
    opt.n_probe = c.probe.n;
    opt.radius = c.probe.radius;
    opt.zeta = c.zeta;
    const auto rep = probe_assumptions(model, opt, rng);
    const json j = detail::report_json(rep);
    detail::write_file(dir / "assumptions.json", j.dump(2) + "\n");
    out.outputs.push_back("assumptions.json");
    for (const auto& chk : rep.checks) {
      log << chk.name << ' ' << to_string(chk.verdict) << " estimate " << format_double(chk.estimate);
      if (!chk.note.empty()) log << " (" << chk.note << ')';
      log << '\n';
    }
    log << "p* " << format_double(rep.pstar) << '\n';
    out.extra = j;
  }
  return out;
}

inline json manifest_json(const RunConfig& c, const RunOutcome& o, double wall_seconds) {
  return {{"version", TAMED_VERSION_STRING},
          {"command", c.command},
          {"config", to_json(c)},
          {"wall_time_seconds", wall_seconds},
          {"diverged", o.diverged},
          {"warnings", o.warnings},
          {"outputs", o.outputs}};
}

// ---------------------------------------------------------------------------
// argv handling

struct FlagValues {
  std::optional<std::string> config;
  std::optional<std::string> model;
  std::optional<double> lambda, a, b, c, jump_mean, jump_std, chi, p0;
  std::optional<double> T, x0, s, eps, p, zeta;
  std::optional<std::size_t> mc, paths, threads, probes;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> meshes, ref, mesh, gaps, gap, s_values;
  std::optional<double> radius;
  std::optional<std::string> out;
};

inline void apply_flags(RunConfig& c, const FlagValues& f) {
  if (f.model) c.model.name = *f.model;
  if (f.lambda) c.model.jumps.lambda = *f.lambda;
  if (f.a) c.model.a = *f.a;
  if (f.b) c.model.b = *f.b;
  if (f.c) c.model.c = *f.c;
  if (f.jump_mean) c.model.jumps.mean = *f.jump_mean;
  if (f.jump_std) c.model.jumps.std = *f.jump_std;
  if (f.chi) c.model.chi = *f.chi;
  if (f.p0) c.model.p0 = *f.p0;
  if (f.T) c.T = *f.T;
  if (f.x0) c.x0 = *f.x0;
  if (f.s) c.s = *f.s;
  if (f.eps) c.epsilon = *f.eps;
  if (f.p) c.p = *f.p;
  if (f.zeta) c.zeta = *f.zeta;
  if (f.mc) c.mc = *f.mc;
  if (f.paths) c.paths = *f.paths;
  if (f.threads) c.threads = *f.threads;
  if (f.seed) c.seed = *f.seed;
  if (f.probes) c.probe.n = *f.probes;
  if (f.radius) c.probe.radius = *f.radius;
  if (f.meshes) c.meshes = parse_number_list(*f.meshes, "--meshes");
  if (f.ref) c.ref = detail::parse_scalar(*f.ref, "--ref");
  if (f.mesh) c.mesh = detail::parse_scalar(*f.mesh, "--mesh");
  if (f.gaps) c.gaps = parse_number_list(*f.gaps, "--gaps");
  if (f.gap) c.gaps = parse_number_list(*f.gap, "--gap");
  if (f.s_values) c.s_values = parse_number_list(*f.s_values, "--s-values");
  if (f.out) c.output_dir = *f.out;
}

/// Builds the resolved config: command defaults < config file < env output
/// dir < flags.
inline RunConfig resolve(const std::string& command, const FlagValues& f) {
  RunConfig c = defaults_for(command);
  if (f.config) {
    std::ifstream in(*f.config);
    if (!in) throw ConfigError("--config", "cannot read config file '" + *f.config + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("--config", std::string("malformed JSON: ") + e.what());
    }
    merge_json(c, j);
  }
  if (const char* env = std::getenv(kOutputDirEnv); env && *env) c.output_dir = env;
  apply_flags(c, f);
  return c;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tamed Euler scheme for Levy-driven SDEs with superlinear coefficients"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(TAMED_VERSION_STRING));
  FlagValues f;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", f.config, "JSON config file (or a run manifest)");
    sub->add_option("--model", f.model, "model1 | model2");
    sub->add_option("--lambda", f.lambda, "jump intensity");
    sub->add_option("--a", f.a, "model2 parameter a");
    sub->add_option("--b", f.b, "model2 parameter b");
    sub->add_option("--c", f.c, "model2 parameter c");
    sub->add_option("--jump-mean", f.jump_mean, "mean of the Gaussian jump sizes");
    sub->add_option("--jump-std", f.jump_std, "std of the Gaussian jump sizes");
    sub->add_option("--chi", f.chi, "taming exponent override");
    sub->add_option("--p0", f.p0, "moment exponent override");
    sub->add_option("--zeta", f.zeta, "zeta in p*");
    sub->add_option("--seed", f.seed, "64-bit master seed");
    sub->add_option("-o,--out", f.out, "output directory");
  };
  auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--T", f.T, "horizon");
    sub->add_option("--x0", f.x0, "initial value");
    sub->add_option("--s", f.s, "initial time");
    sub->add_option("--eps", f.eps, "jump truncation level");
    sub->add_option("--mc", f.mc, "compensator Monte-Carlo samples M");
    sub->add_option("--paths", f.paths, "number of paths N");
    sub->add_option("--p", f.p, "error exponent");
    sub->add_option("--threads", f.threads, "worker threads (0 = auto)");
  };

  const std::map<std::string, std::string> about = {
      {"simulate", "write sample trajectories"},
      {"convergence", "strong error against a fine reference mesh"},
      {"stability", "error between runs from x0 and x0 + gap"},
      {"heatmap", "stability error over a gap x mesh grid"},
      {"timeshift", "error between runs started at s and s + ds"},
      {"check-assumptions", "probe the coefficient conditions"},
      {"pstar", "print the moment exponent p*"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& name : commands()) {
    auto* sub = app.add_subcommand(name, about.at(name));
    subs[name] = sub;
    add_common(sub);
    if (name != "pstar" && name != "check-assumptions") add_sim(sub);
  }
  subs["convergence"]->add_option("--meshes", f.meshes, "coarse meshes, e.g. 2^-8..2^-12");
  subs["convergence"]->add_option("--ref", f.ref, "reference mesh, e.g. 2^-15");
  subs["stability"]->add_option("--mesh", f.mesh, "mesh");
  auto* gap_opt = subs["stability"]->add_option("--gap", f.gap, "initial gap(s)");
  auto* gaps_opt = subs["stability"]->add_option("--gaps", f.gaps, "initial gaps, e.g. 10^-8..10^-5");
  gap_opt->excludes(gaps_opt);
  subs["heatmap"]->add_option("--gaps", f.gaps, "initial gaps");
  subs["heatmap"]->add_option("--meshes", f.meshes, "meshes, e.g. 2^-6..2^-10");
  subs["timeshift"]->add_option("--mesh", f.mesh, "mesh");
  subs["timeshift"]->add_option("--s-values", f.s_values, "perturbed initial times");
  subs["simulate"]->add_option("--mesh", f.mesh, "mesh");
  subs["check-assumptions"]->add_option("--probes", f.probes, "probe pairs per radius");
  subs["check-assumptions"]->add_option("--radius", f.radius, "initial probe radius");
  subs["check-assumptions"]->add_option("--threads", f.threads, "unused");

  if (!args.empty() && !args.front().empty() && args.front()[0] != '-' &&
      std::find(commands().begin(), commands().end(), args.front()) == commands().end()) {
    err << "error: unknown command '" << args.front() << "'\n";
    return 2;
  }
  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << TAMED_VERSION_STRING << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  std::string command;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) command = name;
  }

  RunConfig config;
  try {
    config = resolve(command, f);
    validate(config);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    const auto outcome = execute(config, out);
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    for (const auto& w : outcome.warnings) err << "warning: " << w << '\n';
    if (config.command != "pstar") {
      detail::write_file(std::filesystem::path(config.output_dir) / "manifest.json",
                         manifest_json(config, outcome, wall).dump(2) + "\n");
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

inline int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace tamed::cli
