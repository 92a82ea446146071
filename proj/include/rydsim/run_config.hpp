#pragma once

// JSON run configuration for the command-line front end. Every block has
// defaults; unknown keys are rejected. Errors carry the line of the offending
// key in the source text.

#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rydsim/evaporation_md.hpp"
#include "rydsim/lifetime_budget.hpp"
#include "rydsim/pair_interaction.hpp"
#include "rydsim/ramps.hpp"
#include "rydsim/trap_optics.hpp"

namespace rydsim::config {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& pointer, const std::string& msg, int line = 0)
      : std::runtime_error(msg), pointer_(pointer), line_(line) {}
  const std::string& pointer() const { return pointer_; }
  int line() const { return line_; }

 private:
  std::string pointer_;
  int line_;
};

/// Line (1-based) of every JSON pointer in a document, from a token scan.
class LineMap {
 public:
  explicit LineMap(const std::string& text) {
    struct Level {
      bool array;
      int index;
      std::string key;
    };
    std::vector<Level> stack;
    int line = 1;
    bool expect_key = false;
    auto path = [&]() {
      std::string p;
      for (const auto& l : stack) p += "/" + (l.array ? std::to_string(l.index) : l.key);
      return p;
    };
    auto mark_value = [&]() {
      if (!stack.empty() && stack.back().array && !lines_.count(path())) lines_[path()] = line;
    };
    lines_[""] = 1;
    for (std::size_t i = 0; i < text.size(); ++i) {
      const char c = text[i];
      if (c == '\n') {
        ++line;
      } else if (c == '"') {
        std::string s;
        for (++i; i < text.size() && text[i] != '"'; ++i) {
          if (text[i] == '\\' && i + 1 < text.size()) s += text[++i];
          else s += text[i];
        }
        if (expect_key && !stack.empty()) {
          stack.back().key = escape(s);
          lines_[path()] = line;
          expect_key = false;
        } else {
          mark_value();
        }
      } else if (c == '{' || c == '[') {
        mark_value();
        stack.push_back({c == '[', 0, ""});
        expect_key = c == '{';
      } else if (c == '}' || c == ']') {
        if (!stack.empty()) stack.pop_back();
        expect_key = false;
      } else if (c == ',') {
        if (!stack.empty()) {
          if (stack.back().array) ++stack.back().index;
          else expect_key = true;
        }
      } else if (!std::isspace(static_cast<unsigned char>(c)) && c != ':') {
        mark_value();
      }
    }
  }

  /// Line of the pointer or of its nearest mapped ancestor.
  int line_of(std::string pointer) const {
    while (true) {
      auto it = lines_.find(pointer);
      if (it != lines_.end()) return it->second;
      const auto cut = pointer.rfind('/');
      if (cut == std::string::npos) return 1;
      pointer.resize(cut);
    }
  }

  static std::string escape(const std::string& key) {
    std::string out;
    for (char c : key) {
      if (c == '~') out += "~0";
      else if (c == '/') out += "~1";
      else out += c;
    }
    return out;
  }

 private:
  std::map<std::string, int> lines_;
};

// ---------------------------------------------------------------- reading

/// Typed access to one JSON object with pointer tracking and unknown-key checks.
class Reader {
 public:
  Reader(const json& j, std::string pointer) : j_(j), ptr_(std::move(pointer)) {
    if (!j_.is_object()) throw ConfigError(ptr_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    read(*it, child(key), out);
  }

  /// Nested object read by a callback taking a Reader.
  template <class F>
  void object(const char* key, F&& f) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    Reader r(*it, child(key));
    f(r);
    r.finish();
  }

  template <class F>
  void array(const char* key, F&& f) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_array()) throw ConfigError(child(key), "expected an array");
    f(*it, child(key));
  }

  /// Raw value handed to a callback with its pointer.
  template <class F>
  void raw(const char* key, F&& f) {
    seen_.push_back(key);
    auto it = j_.find(key);
    if (it != j_.end()) f(*it, child(key));
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string child(const std::string& key) const { return ptr_ + "/" + LineMap::escape(key); }
  const std::string& pointer() const { return ptr_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool known = false;
      for (const auto& s : seen_) known = known || s == it.key();
      if (!known) throw ConfigError(child(it.key()), "unknown key '" + it.key() + "'");
    }
  }

  static void read(const json& v, const std::string& p, double& out) {
    if (v.is_string()) {
      const auto s = v.get<std::string>();
      if (s == "inf") out = std::numeric_limits<double>::infinity();
      else if (s == "-inf") out = -std::numeric_limits<double>::infinity();
      else if (s == "nan") out = std::numeric_limits<double>::quiet_NaN();
      else throw ConfigError(p, "expected a number");
      return;
    }
    if (!v.is_number()) throw ConfigError(p, "expected a number");
    out = v.get<double>();
  }
  static void read(const json& v, const std::string& p, int& out) {
    if (!v.is_number_integer()) throw ConfigError(p, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
      throw ConfigError(p, "integer out of range");
    out = static_cast<int>(x);
  }
  static void read(const json& v, const std::string& p, std::uint64_t& out) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0))
      throw ConfigError(p, "expected a non-negative integer");
    out = v.get<std::uint64_t>();
  }
  static void read(const json& v, const std::string& p, bool& out) {
    if (!v.is_boolean()) throw ConfigError(p, "expected true or false");
    out = v.get<bool>();
  }
  static void read(const json& v, const std::string& p, std::string& out) {
    if (!v.is_string()) throw ConfigError(p, "expected a string");
    out = v.get<std::string>();
  }
  template <class T>
  static void read(const json& v, const std::string& p, std::vector<T>& out) {
    if (!v.is_array()) throw ConfigError(p, "expected an array");
    out.assign(v.size(), T{});
    for (std::size_t i = 0; i < v.size(); ++i) read(v[i], p + "/" + std::to_string(i), out[i]);
  }

 private:
  const json& j_;
  std::string ptr_;
  std::vector<std::string> seen_;
};

/// Number written to JSON; non-finite values become strings.
inline json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline json numbers(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

// ---------------------------------------------------------------- blocks

/// Explicit values, or start/stop/count.
struct Grid {
  bool range = false;
  double start = 0.0, stop = 0.0;
  int count = 0;
  std::vector<double> values;

  std::vector<double> expand() const {
    if (!range) return values;
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) v[k] = count == 1 ? start : start + (stop - start) * k / (count - 1);
    return v;
  }

  static Grid of(std::vector<double> v) {
    Grid g;
    g.values = std::move(v);
    return g;
  }
  static Grid linspace(double a, double b, int n) { return {true, a, b, n, {}}; }
};

inline Grid parse_grid(const json& v, const std::string& p) {
  Grid g;
  if (v.is_array()) {
    Reader::read(v, p, g.values);
    return g;
  }
  Reader r(v, p);
  g.range = true;
  r.get("start", g.start);
  r.get("stop", g.stop);
  r.get("count", g.count);
  r.finish();
  if (g.count < 1) throw ConfigError(p + "/count", "count must be >= 1");
  return g;
}

inline json grid_json(const Grid& g) {
  if (!g.range) return numbers(g.values);
  return {{"start", number(g.start)}, {"stop", number(g.stop)}, {"count", g.count}};
}

struct PairCoeffsBlock {
  CouplingSet coefficients = CouplingSet::reference();
  std::vector<double> spacings_um = {5.0, 7.0};
  std::string field_curve;  // optional CSV F_Vcm,B_gauss,Jz_over_J,dzeta_over_J
  std::vector<double> fields_F_Vcm, fields_B_gauss;
  double J_Hz = 0.0;  // exchange for the field table; 0 uses the first spacing
};

struct PhaseDiagramBlock {
  int N = 40;
  int r = 17;
  double J_Hz = 1e3;
  Grid omega_over_4J = Grid::linspace(0.0, 1.2, 12);
  Grid Jz_over_J = Grid::linspace(-3.0, 3.0, 12);
  int chi_max = 128;
  int max_sweeps = 40;
  double tolerance = 1e-9;
};

struct GapsBlock {
  int N = 12;
  double J_Hz = 1e3;
  Grid omega_over_4J = Grid::linspace(0.0, 1.5, 31);
  Grid Jz_over_J = Grid::of({1.0});
  std::string boundary = "periodic";
  bool next_nearest = false;
};

struct MotionBlock {
  double spacing_um = 7.0;
  int initial_atoms = 30;
  double min_spacing_um = 6.0;
  double temperature_K = 1e-6;
  int pair_neighbors = 4;
  double frame_interval_s = 2e-6;
  md::SequenceParams sequence = [] {
    md::SequenceParams p;
    p.L_start = 600.0;
    p.L_compressed = 300.0;
    p.L_evaporated = 0.0;  // 0 stops between the static thresholds of the target count
    p.durations = {0.1, 0.5, 0.1, 0.1};
    p.plug_rise = 0.01;
    return p;
  }();
};

struct SweepBlock {
  int N = 10;
  double J_Hz = 2300.0;
  double Jz_over_J = -1.6;
  double dzeta_over_J = 1.68;
  double omega_max_over_4J = 6.0;
  double JT = 180.0;
  std::vector<std::string> modes = {"ideal", "fixed", "motional"};
  double dt_max_s = 2e-6;
  int checkpoints = 64;
  ramps::RampOptions ramp;
  MotionBlock motion;
};

struct EvaporateBlock {
  md::EvaporationConfig model = [] {
    md::EvaporationConfig c;
    c.initial_atoms = 30;
    c.min_spacing = 6.0;
    c.pair_neighbors = 4;
    return c;
  }();
  bool use_sequence = true;  // false: explicit schedule in model.schedule
  md::SequenceParams sequence = [] {
    md::SequenceParams p;
    p.L_start = 600.0;
    p.L_compressed = 300.0;
    p.L_evaporated = 30.0;
    p.durations = {0.1, 0.5, 0.1, 0.1};
    p.plug_rise = 0.01;
    p.stop_after_evaporation = true;
    return p;
  }();
  int export_trajectories = 1;
};

struct TrapBlock {
  std::vector<trap::BeamSpec> beams = trap::chain_trap_beams(5.0);
  double J_Hz = 17248.0;
  double fit_window_um = 0.05;
  double anharmonic_X_nm = 70.0;
  double map_x_min = -10.0, map_x_max = 10.0, map_z_min = -10.0, map_z_max = 10.0;
  int map_nx = 81, map_nz = 81;
};

struct LifetimeBlock {
  int atoms = 40;
  std::vector<lifetime::LossChannel> channels = lifetime::reference_channels(false);
};

struct RunConfig {
  std::uint64_t seed = 1;
  int realizations = 20;
  int threads = 1;
  std::string output_dir = "rydsim_out";
  PairCoeffsBlock pair_coeffs;
  PhaseDiagramBlock phase_diagram;
  GapsBlock gaps;
  SweepBlock sweep;
  EvaporateBlock evaporate;
  TrapBlock trap;
  LifetimeBlock lifetime;
};

// ---------------------------------------------------------------- per-block IO

inline void read_sequence(Reader& r, md::SequenceParams& p) {
  r.get("L_start_um", p.L_start);
  r.get("L_compressed_um", p.L_compressed);
  r.get("L_evaporated_um", p.L_evaporated);
  r.get("left_height_Hz", p.left_height);
  r.get("right_height_Hz", p.right_height);
  r.get("waist_um", p.waist);
  r.get("final_waist_um", p.final_waist);
  r.get("target_atoms", p.target_atoms);
  r.get("spacing_um", p.spacing);
  r.get("lattice_depth_Hz", p.lattice_depth);
  std::vector<double> d(p.durations.begin(), p.durations.end());
  r.get("durations_s", d);
  if (d.size() != 4) throw ConfigError(r.child("durations_s"), "expected four phase durations");
  std::copy(d.begin(), d.end(), p.durations.begin());
  r.get("plug_rise_s", p.plug_rise);
  r.get("dt_s", p.dt);
  r.get("lattice_dt_s", p.lattice_dt);
  r.get("stop_after_evaporation", p.stop_after_evaporation);
}

inline json sequence_json(const md::SequenceParams& p) {
  return {{"L_start_um", number(p.L_start)},
          {"L_compressed_um", number(p.L_compressed)},
          {"L_evaporated_um", number(p.L_evaporated)},
          {"left_height_Hz", number(p.left_height)},
          {"right_height_Hz", number(p.right_height)},
          {"waist_um", number(p.waist)},
          {"final_waist_um", number(p.final_waist)},
          {"target_atoms", p.target_atoms},
          {"spacing_um", number(p.spacing)},
          {"lattice_depth_Hz", number(p.lattice_depth)},
          {"durations_s", numbers({p.durations.begin(), p.durations.end()})},
          {"plug_rise_s", number(p.plug_rise)},
          {"dt_s", number(p.dt)},
          {"lattice_dt_s", number(p.lattice_dt)},
          {"stop_after_evaporation", p.stop_after_evaporation}};
}

inline void read_schedule(const json& v, const std::string& p, md::Schedule& s) {
  Reader r(v, p);
  s = md::Schedule{};
  r.array("knots", [&](const json& a, const std::string& ap) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      Reader k(a[i], ap + "/" + std::to_string(i));
      md::Knot n;
      k.get("t_s", n.t);
      k.get("L_um", n.L);
      k.get("left_height_Hz", n.left_height);
      k.get("right_height_Hz", n.right_height);
      k.get("waist_um", n.waist);
      k.get("lattice_depth_Hz", n.lattice_depth);
      k.finish();
      s.knots.push_back(n);
    }
  });
  r.array("phases", [&](const json& a, const std::string& ap) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      Reader k(a[i], ap + "/" + std::to_string(i));
      md::Phase ph;
      k.get("name", ph.name);
      k.get("t_begin_s", ph.t_begin);
      k.get("t_end_s", ph.t_end);
      k.get("dt_s", ph.dt);
      k.finish();
      s.phases.push_back(ph);
    }
  });
  r.get("lattice_spacing_um", s.lattice_spacing);
  r.get("lattice_offset_um", s.lattice_offset);
  r.finish();
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(p, e.what());
  }
}

inline json schedule_json(const md::Schedule& s) {
  json knots = json::array(), phases = json::array();
  for (const auto& k : s.knots)
    knots.push_back({{"t_s", number(k.t)},
                     {"L_um", number(k.L)},
                     {"left_height_Hz", number(k.left_height)},
                     {"right_height_Hz", number(k.right_height)},
                     {"waist_um", number(k.waist)},
                     {"lattice_depth_Hz", number(k.lattice_depth)}});
  for (const auto& ph : s.phases)
    phases.push_back({{"name", ph.name}, {"t_begin_s", number(ph.t_begin)}, {"t_end_s", number(ph.t_end)},
                      {"dt_s", number(ph.dt)}});
  return {{"knots", knots},
          {"phases", phases},
          {"lattice_spacing_um", number(s.lattice_spacing)},
          {"lattice_offset_um", number(s.lattice_offset)}};
}

inline trap::BeamKind beam_kind(const std::string& s, const std::string& p) {
  if (s == "laguerre_gauss") return trap::BeamKind::laguerre_gauss;
  if (s == "gaussian") return trap::BeamKind::gaussian;
  if (s == "lattice_pair") return trap::BeamKind::lattice_pair;
  throw ConfigError(p, "unknown beam kind '" + s + "'");
}

inline std::string beam_kind_name(trap::BeamKind k) {
  switch (k) {
    case trap::BeamKind::laguerre_gauss: return "laguerre_gauss";
    case trap::BeamKind::gaussian: return "gaussian";
    case trap::BeamKind::lattice_pair: return "lattice_pair";
  }
  return "gaussian";
}

inline void read_block(Reader& r, PairCoeffsBlock& b) {
  r.object("coefficients", [&](Reader& c) {
    c.get("c6_4848_GHz_um6", b.coefficients.c6_4848);
    c.get("c6_4850_GHz_um6", b.coefficients.c6_4850);
    c.get("c6_5050_GHz_um6", b.coefficients.c6_5050);
    c.get("a6_4850_GHz_um6", b.coefficients.a6_4850);
    c.get("F_Vcm", b.coefficients.field_F);
    c.get("B_gauss", b.coefficients.field_B);
  });
  r.get("spacings_um", b.spacings_um);
  r.get("field_curve", b.field_curve);
  r.get("fields_F_Vcm", b.fields_F_Vcm);
  r.get("fields_B_gauss", b.fields_B_gauss);
  r.get("J_Hz", b.J_Hz);
  if (b.spacings_um.empty()) throw ConfigError(r.child("spacings_um"), "need at least one spacing");
  for (std::size_t i = 0; i < b.spacings_um.size(); ++i)
    if (!(b.spacings_um[i] > 0)) throw ConfigError(r.child("spacings_um") + "/" + std::to_string(i), "spacing must be positive");
  if (b.fields_F_Vcm.size() != b.fields_B_gauss.size())
    throw ConfigError(r.child("fields_B_gauss"), "fields_F_Vcm and fields_B_gauss differ in length");
}

inline json block_json(const PairCoeffsBlock& b) {
  const auto& c = b.coefficients;
  return {{"coefficients",
           {{"c6_4848_GHz_um6", number(c.c6_4848)},
            {"c6_4850_GHz_um6", number(c.c6_4850)},
            {"c6_5050_GHz_um6", number(c.c6_5050)},
            {"a6_4850_GHz_um6", number(c.a6_4850)},
            {"F_Vcm", number(c.field_F)},
            {"B_gauss", number(c.field_B)}}},
          {"spacings_um", numbers(b.spacings_um)},
          {"field_curve", b.field_curve},
          {"fields_F_Vcm", numbers(b.fields_F_Vcm)},
          {"fields_B_gauss", numbers(b.fields_B_gauss)},
          {"J_Hz", number(b.J_Hz)}};
}


inline void read_grid(Reader& r, const char* key, Grid& g) {
  r.raw(key, [&](const json& v, const std::string& p) { g = parse_grid(v, p); });
}

inline void require_grid(const Reader& r, const char* key, const Grid& g) {
  const auto v = g.expand();
  if (v.empty()) throw ConfigError(r.child(key), "grid is empty");
  for (double x : v)
    if (!std::isfinite(x)) throw ConfigError(r.child(key), "grid values must be finite");
}

inline void read_block(Reader& r, PhaseDiagramBlock& b) {
  r.get("N", b.N);
  r.get("r", b.r);
  r.get("J_Hz", b.J_Hz);
  read_grid(r, "omega_over_4J", b.omega_over_4J);
  read_grid(r, "Jz_over_J", b.Jz_over_J);
  r.get("chi_max", b.chi_max);
  r.get("max_sweeps", b.max_sweeps);
  r.get("tolerance", b.tolerance);
  if (b.N < 2) throw ConfigError(r.child("N"), "N must be >= 2");
  if (b.r < 1 || b.r >= b.N) throw ConfigError(r.child("r"), "correlation range must lie in [1, N - 1]");
  if (!(b.J_Hz > 0)) throw ConfigError(r.child("J_Hz"), "J must be positive");
  if (b.chi_max < 1) throw ConfigError(r.child("chi_max"), "chi_max must be >= 1");
  if (b.max_sweeps < 1) throw ConfigError(r.child("max_sweeps"), "max_sweeps must be >= 1");
  require_grid(r, "omega_over_4J", b.omega_over_4J);
  require_grid(r, "Jz_over_J", b.Jz_over_J);
}

inline json block_json(const PhaseDiagramBlock& b) {
  return {{"N", b.N},
          {"r", b.r},
          {"J_Hz", number(b.J_Hz)},
          {"omega_over_4J", grid_json(b.omega_over_4J)},
          {"Jz_over_J", grid_json(b.Jz_over_J)},
          {"chi_max", b.chi_max},
          {"max_sweeps", b.max_sweeps},
          {"tolerance", number(b.tolerance)}};
}

inline void read_block(Reader& r, GapsBlock& b) {
  r.get("N", b.N);
  r.get("J_Hz", b.J_Hz);
  read_grid(r, "omega_over_4J", b.omega_over_4J);
  read_grid(r, "Jz_over_J", b.Jz_over_J);
  r.get("boundary", b.boundary);
  r.get("next_nearest", b.next_nearest);
  if (b.N < 2 || b.N > ed::kMaxSites) throw ConfigError(r.child("N"), "N outside the exact-diagonalization range");
  if (!(b.J_Hz > 0)) throw ConfigError(r.child("J_Hz"), "J must be positive");
  if (b.boundary != "open" && b.boundary != "periodic")
    throw ConfigError(r.child("boundary"), "boundary must be 'open' or 'periodic'");
  require_grid(r, "omega_over_4J", b.omega_over_4J);
  require_grid(r, "Jz_over_J", b.Jz_over_J);
}

inline json block_json(const GapsBlock& b) {
  return {{"N", b.N},
          {"J_Hz", number(b.J_Hz)},
          {"omega_over_4J", grid_json(b.omega_over_4J)},
          {"Jz_over_J", grid_json(b.Jz_over_J)},
          {"boundary", b.boundary},
          {"next_nearest", b.next_nearest}};
}

inline void read_block(Reader& r, SweepBlock& b) {
  r.get("N", b.N);
  r.get("J_Hz", b.J_Hz);
  r.get("Jz_over_J", b.Jz_over_J);
  r.get("dzeta_over_J", b.dzeta_over_J);
  r.get("omega_max_over_4J", b.omega_max_over_4J);
  r.get("JT", b.JT);
  r.get("modes", b.modes);
  r.get("dt_max_s", b.dt_max_s);
  r.get("checkpoints", b.checkpoints);
  r.object("ramp", [&](Reader& q) {
    q.get("grid", b.ramp.grid);
    q.get("floor_fraction", b.ramp.floor_fraction);
    q.get("ceiling_factor", b.ramp.ceiling_factor);
    q.get("probe_N", b.ramp.probe_N);
    q.get("constant_velocity", b.ramp.constant_velocity);
    std::string dir = b.ramp.direction == ramps::Direction::cycle ? "cycle" : "up";
    q.get("direction", dir);
    if (dir != "cycle" && dir != "up") throw ConfigError(q.child("direction"), "direction must be 'cycle' or 'up'");
    b.ramp.direction = dir == "cycle" ? ramps::Direction::cycle : ramps::Direction::up;
  });
  r.object("motion", [&](Reader& m) {
    m.get("spacing_um", b.motion.spacing_um);
    m.get("initial_atoms", b.motion.initial_atoms);
    m.get("min_spacing_um", b.motion.min_spacing_um);
    m.get("temperature_K", b.motion.temperature_K);
    m.get("pair_neighbors", b.motion.pair_neighbors);
    m.get("frame_interval_s", b.motion.frame_interval_s);
    m.object("sequence", [&](Reader& q) { read_sequence(q, b.motion.sequence); });
    if (!(b.motion.spacing_um > 0)) throw ConfigError(m.child("spacing_um"), "spacing must be positive");
    if (!(b.motion.frame_interval_s > 0)) throw ConfigError(m.child("frame_interval_s"), "frame interval must be positive");
  });
  if (b.N < 2 || b.N > ed::kMaxSites) throw ConfigError(r.child("N"), "N outside the exact-diagonalization range");
  if (!(b.J_Hz > 0)) throw ConfigError(r.child("J_Hz"), "J must be positive");
  if (!(b.JT >= 0)) throw ConfigError(r.child("JT"), "JT must be non-negative");
  if (!(b.omega_max_over_4J >= 0)) throw ConfigError(r.child("omega_max_over_4J"), "must be non-negative");
  if (!(b.dt_max_s > 0)) throw ConfigError(r.child("dt_max_s"), "dt_max must be positive");
  if (b.checkpoints < 2) throw ConfigError(r.child("checkpoints"), "need at least two checkpoints");
  if (b.modes.empty()) throw ConfigError(r.child("modes"), "need at least one mode");
  for (std::size_t i = 0; i < b.modes.size(); ++i)
    if (b.modes[i] != "ideal" && b.modes[i] != "fixed" && b.modes[i] != "motional")
      throw ConfigError(r.child("modes") + "/" + std::to_string(i), "mode must be ideal, fixed or motional");
}

inline json block_json(const SweepBlock& b) {
  const auto& q = b.ramp;
  const auto& m = b.motion;
  return {{"N", b.N},
          {"J_Hz", number(b.J_Hz)},
          {"Jz_over_J", number(b.Jz_over_J)},
          {"dzeta_over_J", number(b.dzeta_over_J)},
          {"omega_max_over_4J", number(b.omega_max_over_4J)},
          {"JT", number(b.JT)},
          {"modes", b.modes},
          {"dt_max_s", number(b.dt_max_s)},
          {"checkpoints", b.checkpoints},
          {"ramp",
           {{"grid", q.grid},
            {"floor_fraction", number(q.floor_fraction)},
            {"ceiling_factor", number(q.ceiling_factor)},
            {"probe_N", q.probe_N},
            {"constant_velocity", q.constant_velocity},
            {"direction", q.direction == ramps::Direction::cycle ? "cycle" : "up"}}},
          {"motion",
           {{"spacing_um", number(m.spacing_um)},
            {"initial_atoms", m.initial_atoms},
            {"min_spacing_um", number(m.min_spacing_um)},
            {"temperature_K", number(m.temperature_K)},
            {"pair_neighbors", m.pair_neighbors},
            {"frame_interval_s", number(m.frame_interval_s)},
            {"sequence", sequence_json(m.sequence)}}}};
}

inline void read_block(Reader& r, EvaporateBlock& b) {
  auto& c = b.model;
  r.get("initial_atoms", c.initial_atoms);
  r.get("initial_atoms_sd", c.initial_atoms_sd);
  r.get("spacing_mean_um", c.spacing_mean);
  r.get("spacing_sd_um", c.spacing_sd);
  r.get("min_spacing_um", c.min_spacing);
  r.get("temperature_K", c.temperature);
  r.get("mass_kg", c.mass);
  r.get("c6_Hz_um6", c.c6);
  r.get("ejection_margin", c.ejection_margin);
  r.get("pair_neighbors", c.pair_neighbors);
  r.get("record_interval_s", c.record_interval);
  r.get("max_energy_drift", c.max_energy_drift);
  r.get("export_trajectories", b.export_trajectories);
  if (r.has("sequence") && r.has("schedule"))
    throw ConfigError(r.child("schedule"), "give either 'sequence' or 'schedule', not both");
  r.object("sequence", [&](Reader& q) { read_sequence(q, b.sequence); });
  r.raw("schedule", [&](const json& v, const std::string& p) {
    read_schedule(v, p, c.schedule);
    b.use_sequence = false;
  });
  if (b.export_trajectories < 0) throw ConfigError(r.child("export_trajectories"), "must be non-negative");
  md::EvaporationConfig probe = c;
  try {
    if (b.use_sequence) probe.schedule = md::make_sequence(b.sequence, c.c6, c.mass);
    probe.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(r.pointer(), e.what());
  }
}

inline json block_json(const EvaporateBlock& b) {
  const auto& c = b.model;
  json j = {{"initial_atoms", c.initial_atoms},
            {"initial_atoms_sd", number(c.initial_atoms_sd)},
            {"spacing_mean_um", number(c.spacing_mean)},
            {"spacing_sd_um", number(c.spacing_sd)},
            {"min_spacing_um", number(c.min_spacing)},
            {"temperature_K", number(c.temperature)},
            {"mass_kg", number(c.mass)},
            {"c6_Hz_um6", number(c.c6)},
            {"ejection_margin", number(c.ejection_margin)},
            {"pair_neighbors", c.pair_neighbors},
            {"record_interval_s", number(c.record_interval)},
            {"max_energy_drift", number(c.max_energy_drift)},
            {"export_trajectories", b.export_trajectories}};
  if (b.use_sequence) j["sequence"] = sequence_json(b.sequence);
  else j["schedule"] = schedule_json(c.schedule);
  return j;
}

inline void read_block(Reader& r, TrapBlock& b) {
  r.array("beams", [&](const json& a, const std::string& p) {
    b.beams.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string bp = p + "/" + std::to_string(i);
      Reader q(a[i], bp);
      trap::BeamSpec s;
      std::string kind = "gaussian";
      q.get("kind", kind);
      s.kind = beam_kind(kind, q.child("kind"));
      q.get("power_W", s.power);
      q.get("waist_um", s.waist);
      q.get("waist_long_um", s.waist_long);
      q.get("wavelength_um", s.wavelength);
      q.get("angle_deg", s.angle_deg);
      q.get("center_um", s.center);
      q.finish();
      try {
        s.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(bp, e.what());
      }
      b.beams.push_back(s);
    }
  });
  r.get("J_Hz", b.J_Hz);
  r.get("fit_window_um", b.fit_window_um);
  r.get("anharmonic_X_nm", b.anharmonic_X_nm);
  r.object("map", [&](Reader& m) {
    m.get("x_min_um", b.map_x_min);
    m.get("x_max_um", b.map_x_max);
    m.get("z_min_um", b.map_z_min);
    m.get("z_max_um", b.map_z_max);
    m.get("nx", b.map_nx);
    m.get("nz", b.map_nz);
    if (b.map_nx < 2 || b.map_nz < 2) throw ConfigError(m.pointer(), "need at least 2 points per axis");
  });
  if (b.beams.empty()) throw ConfigError(r.child("beams"), "need at least one beam");
  if (!(b.fit_window_um > 0)) throw ConfigError(r.child("fit_window_um"), "fit window must be positive");
}

inline json block_json(const TrapBlock& b) {
  json beams = json::array();
  for (const auto& s : b.beams)
    beams.push_back({{"kind", beam_kind_name(s.kind)},
                     {"power_W", number(s.power)},
                     {"waist_um", number(s.waist)},
                     {"waist_long_um", number(s.waist_long)},
                     {"wavelength_um", number(s.wavelength)},
                     {"angle_deg", number(s.angle_deg)},
                     {"center_um", number(s.center)}});
  return {{"beams", beams},
          {"J_Hz", number(b.J_Hz)},
          {"fit_window_um", number(b.fit_window_um)},
          {"anharmonic_X_nm", number(b.anharmonic_X_nm)},
          {"map",
           {{"x_min_um", number(b.map_x_min)},
            {"x_max_um", number(b.map_x_max)},
            {"z_min_um", number(b.map_z_min)},
            {"z_max_um", number(b.map_z_max)},
            {"nx", b.map_nx},
            {"nz", b.map_nz}}}};
}

inline void read_block(Reader& r, LifetimeBlock& b) {
  r.get("atoms", b.atoms);
  r.array("channels", [&](const json& a, const std::string& p) {
    b.channels.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const std::string cp = p + "/" + std::to_string(i);
      Reader q(a[i], cp);
      lifetime::LossChannel c;
      std::string origin = "fixed_input";
      q.get("name", c.name);
      q.get("lifetime_s", c.lifetime);
      q.get("origin", origin);
      q.get("note", c.note);
      q.finish();
      if (c.name.empty()) throw ConfigError(cp + "/name", "channel needs a name");
      if (!(c.lifetime > 0)) throw ConfigError(cp + "/lifetime_s", "lifetime must be positive");
      if (origin != "fixed_input" && origin != "computed")
        throw ConfigError(cp + "/origin", "origin must be 'fixed_input' or 'computed'");
      c.origin = origin == "computed" ? lifetime::Origin::computed : lifetime::Origin::fixed_input;
      b.channels.push_back(c);
    }
  });
  if (b.atoms < 1) throw ConfigError(r.child("atoms"), "atoms must be >= 1");
  if (b.channels.empty()) throw ConfigError(r.child("channels"), "need at least one channel");
}

inline json block_json(const LifetimeBlock& b) {
  json ch = json::array();
  for (const auto& c : b.channels)
    ch.push_back({{"name", c.name},
                  {"lifetime_s", number(c.lifetime)},
                  {"origin", c.origin == lifetime::Origin::computed ? "computed" : "fixed_input"},
                  {"note", c.note}});
  return {{"atoms", b.atoms}, {"channels", ch}};
}

// ---------------------------------------------------------------- top level

inline json to_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"realizations", c.realizations},
          {"threads", c.threads},
          {"output_dir", c.output_dir},
          {"pair_coeffs", block_json(c.pair_coeffs)},
          {"phase_diagram", block_json(c.phase_diagram)},
          {"gaps", block_json(c.gaps)},
          {"sweep", block_json(c.sweep)},
          {"evaporate", block_json(c.evaporate)},
          {"trap", block_json(c.trap)},
          {"lifetime", block_json(c.lifetime)}};
}

inline RunConfig from_json(const json& j) {
  RunConfig c;
  Reader r(j, "");
  r.get("seed", c.seed);
  r.get("realizations", c.realizations);
  r.get("threads", c.threads);
  r.get("output_dir", c.output_dir);
  r.object("pair_coeffs", [&](Reader& q) { read_block(q, c.pair_coeffs); });
  r.object("phase_diagram", [&](Reader& q) { read_block(q, c.phase_diagram); });
  r.object("gaps", [&](Reader& q) { read_block(q, c.gaps); });
  r.object("sweep", [&](Reader& q) { read_block(q, c.sweep); });
  r.object("evaporate", [&](Reader& q) { read_block(q, c.evaporate); });
  r.object("trap", [&](Reader& q) { read_block(q, c.trap); });
  r.object("lifetime", [&](Reader& q) { read_block(q, c.lifetime); });
  r.finish();
  if (c.realizations < 1) throw ConfigError("/realizations", "realizations must be >= 1");
  if (c.threads < 1) throw ConfigError("/threads", "threads must be >= 1");
  return c;
}

/// Parses and validates config text; errors read "<source>:<line>: <message>".
class LoadError : public std::runtime_error {
 public:
  LoadError(const std::string& msg, int line) : std::runtime_error(msg), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

inline RunConfig parse(const std::string& text, const std::string& source = "config") {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    int line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i) line += text[i] == '\n';
    throw LoadError(source + ":" + std::to_string(line) + ": " + e.what(), line);
  }
  try {
    return from_json(j);
  } catch (const ConfigError& e) {
    const int line = LineMap(text).line_of(e.pointer());
    const std::string where = e.pointer().empty() ? "/" : e.pointer();
    throw LoadError(source + ":" + std::to_string(line) + ": " + where + ": " + e.what(), line);
  }
}

/// Canonical serialization; parse(dump(c)) reproduces c.
inline std::string dump(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

/// 64-bit FNV-1a of the canonical serialization, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace rydsim::config
