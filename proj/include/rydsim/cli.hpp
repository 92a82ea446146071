#pragma once

// Batch front end: one subcommand per run, JSON config in, CSV and a JSON
// manifest out.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rydsim/csv.hpp"
#include "rydsim/ed_engine.hpp"
#include "rydsim/evaporation_md.hpp"
#include "rydsim/lifetime_budget.hpp"
#include "rydsim/mps_engine.hpp"
#include "rydsim/pair_interaction.hpp"
#include "rydsim/ramps.hpp"
#include "rydsim/run_config.hpp"
#include "rydsim/trap_optics.hpp"

#ifndef RYDSIM_VERSION
#define RYDSIM_VERSION "unknown"
#endif

namespace rydsim::cli {

namespace fs = std::filesystem;
using config::json;

inline const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s = {"pair-coeffs", "phase-diagram", "gaps", "sweep",
                                             "evaporate", "trap", "lifetime"};
  return s;
}

/// Output files of one run plus the manifest that lists them.
class Run {
 public:
  Run(std::string subcommand, config::RunConfig cfg, std::ostream& log)
      : sub_(std::move(subcommand)), cfg_(std::move(cfg)), log_(log), dir_(cfg_.output_dir) {
    fs::create_directories(dir_);
  }

  const config::RunConfig& cfg() const { return cfg_; }
  std::ostream& log() { return log_; }

  /// Opens an output file named <subcommand-prefix>_<name>.
  std::ofstream open(const std::string& name) {
    const std::string file = prefix() + "_" + name;
    std::ofstream os(dir_ / file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir_ / file).string());
    outputs_.push_back(file);
    return os;
  }

  void warn(const std::string& msg) {
    ++warnings_;
    log_ << "warning: " << msg << '\n';
  }
  int warnings() const { return warnings_; }

  void write_manifest() {
    json m = {{"subcommand", sub_},
              {"config_hash", config::config_hash(cfg_)},
              {"seed", cfg_.seed},
              {"realizations", cfg_.realizations},
              {"threads", cfg_.threads},
              {"versions",
               {{"rydsim", RYDSIM_VERSION},
                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                              std::to_string(EIGEN_MINOR_VERSION)},
                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                {"compiler", compiler()}}},
              {"outputs", outputs_},
              {"warnings", warnings_},
              {"config", config::to_json(cfg_)}};
    std::ofstream os(dir_ / (prefix() + "_manifest.json"), std::ios::binary);
    os << m.dump(2) << '\n';
  }

  fs::path manifest_path() const { return dir_ / (prefix() + "_manifest.json"); }

 private:
  std::string prefix() const {
    std::string p = sub_;
    for (char& c : p)
      if (c == '-') c = '_';
    return p;
  }

  static std::string compiler() {
#if defined(__clang__)
    return "clang " __clang_version__;
#elif defined(__GNUC__)
    return "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) + "." +
           std::to_string(__GNUC_PATCHLEVEL__);
#else
    return "unknown";
#endif
  }

  std::string sub_;
  config::RunConfig cfg_;
  std::ostream& log_;
  fs::path dir_;
  std::vector<std::string> outputs_;
  int warnings_ = 0;
};

// ---------------------------------------------------------------- subcommands

inline void run_pair_coeffs(Run& run) {
  const auto& b = run.cfg().pair_coeffs;
  {
    auto os = run.open("couplings.csv");
    csv::Writer w(os, {"d_um", "J_Hz", "Jz_Hz", "delta_zeta_Hz", "delta_E_Hz", "Jz_over_J", "dzeta_over_J",
                       "tau_ex_s"});
    for (double d : b.spacings_um) {
      const auto s = spin_couplings(b.coefficients, d);
      w << d << s.J << s.Jz << s.delta_zeta << s.delta_E << s.Jz / s.J << s.delta_zeta / s.J
        << exchange_time(s.J);
      w.end_row();
    }
  }
  if (b.field_curve.empty()) return;
  const auto curve = FieldCurve::from_csv_file(b.field_curve);
  const double J = b.J_Hz > 0 ? b.J_Hz : spin_couplings(b.coefficients, b.spacings_um.front()).J;
  auto os = run.open("field_couplings.csv");
  csv::Writer w(os, {"F_Vcm", "B_gauss", "J_Hz", "Jz_Hz", "delta_zeta_Hz", "error"});
  for (std::size_t k = 0; k < b.fields_F_Vcm.size(); ++k) {
    const double F = b.fields_F_Vcm[k], B = b.fields_B_gauss[k];
    try {
      const auto s = couplings_at_fields(curve, F, B, J);
      w << F << B << s.J << s.Jz << s.delta_zeta << "";
    } catch (const std::exception& e) {
      run.warn(std::string("field point ") + std::to_string(k) + ": " + e.what());
      const double nan = std::numeric_limits<double>::quiet_NaN();
      w << F << B << J << nan << nan << e.what();
    }
    w.end_row();
  }
}

inline void run_phase_diagram(Run& run) {
  const auto& b = run.cfg().phase_diagram;
  mps::PhaseScanRequest req;
  req.omega_over_4J = b.omega_over_4J.expand();
  req.Jz_over_J = b.Jz_over_J.expand();
  req.N = b.N;
  req.r = b.r;
  req.J = b.J_Hz;
  req.dmrg.chi_max = b.chi_max;
  req.dmrg.max_sweeps = b.max_sweeps;
  req.dmrg.tolerance = b.tolerance;
  req.threads = run.cfg().threads;
  const auto points = mps::phase_scan(req);
  auto os = run.open("phase_scan.csv");
  csv::Writer w(os, {"omega_over_4J", "Jz_over_J", "Mx", "Oy", "Oz", "SvN", "energy_Hz", "converged", "chi_used"});
  std::vector<const mps::PhasePoint*> failed;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& p : points) {
    w << p.omega_over_4J << p.Jz_over_J;
    if (p.error.empty()) {
      w << p.Mx << p.Oy << p.Oz << p.SvN << p.energy << (p.converged ? 1 : 0) << p.chi_used;
      if (!p.converged) run.warn("point (" + csv::num(p.omega_over_4J) + ", " + csv::num(p.Jz_over_J) + ") not converged");
    } else {
      w << nan << nan << nan << nan << nan << 0 << 0;
      failed.push_back(&p);
      run.warn("point (" + csv::num(p.omega_over_4J) + ", " + csv::num(p.Jz_over_J) + ") failed: " + p.error);
    }
    w.end_row();
  }
  auto es = run.open("errors.csv");
  csv::Writer e(es, {"omega_over_4J", "Jz_over_J", "message"});
  for (const auto* p : failed) {
    e << p->omega_over_4J << p->Jz_over_J << p->error;
    e.end_row();
  }
}

inline void run_gaps(Run& run) {
  const auto& b = run.cfg().gaps;
  const auto om = b.omega_over_4J.expand();
  const auto jz = b.Jz_over_J.expand();
  struct Row {
    double g1 = 0, g2 = 0, Nz = 0, Mx = 0;
    std::string error;
  };
  std::vector<Row> rows(om.size() * jz.size());
  parallel_for(rows.size(), run.cfg().threads, [&](std::size_t k) {
    try {
      ChainSpec s;
      s.N = b.N;
      s.J = b.J_Hz;
      s.Jz = jz[k % jz.size()] * b.J_Hz;
      s.Omega = 4.0 * b.J_Hz * om[k / jz.size()];
      s.boundary = b.boundary == "periodic" ? Boundary::periodic : Boundary::open;
      s.next_nearest = b.next_nearest;
      const auto ev = ed::ground_state(build_chain(s), 3);
      rows[k].g1 = std::max(0.0, ev.values[1] - ev.values[0]);
      rows[k].g2 = std::max(0.0, ev.values[2] - ev.values[0]);
      const ed::DenseState gs{b.N, ev.vectors[0]};
      const auto o = ed::measure(gs, gs);
      rows[k].Nz = o.Nz_staggered;
      rows[k].Mx = o.Mx;
    } catch (const std::exception& e) {
      rows[k].error = e.what();
    }
  });
  auto os = run.open("gaps.csv");
  csv::Writer w(os, {"omega_over_4J", "Jz_over_J", "gap1_Hz", "gap2_Hz", "Nz_staggered", "Mx", "error"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& r = rows[k];
    w << om[k / jz.size()] << jz[k % jz.size()];
    if (r.error.empty()) {
      w << r.g1 << r.g2 << r.Nz << r.Mx << "";
    } else {
      w << nan << nan << nan << nan << r.error;
      run.warn("gap point " + std::to_string(k) + " failed: " + r.error);
    }
    w.end_row();
  }
}

/// Evaporated and held chains for the motional sweep mode.
inline md::MotionalEnsemble sweep_motion(const config::SweepBlock& b, double T, int count, std::uint64_t seed,
                                         int threads) {
  const auto& m = b.motion;
  md::EvaporationConfig cfg;
  cfg.initial_atoms = m.initial_atoms;
  cfg.min_spacing = m.min_spacing_um;
  cfg.temperature = m.temperature_K;
  cfg.pair_neighbors = m.pair_neighbors;
  cfg.seed = seed;
  md::SequenceParams p = m.sequence;
  p.target_atoms = b.N;
  p.spacing = m.spacing_um;
  p.stop_after_evaporation = false;
  if (!(p.L_evaporated > 0))
    p.L_evaporated = md::evaporation_stop_length(b.N, p.left_height, p.right_height, p.waist, cfg.c6);
  return md::motional_ensemble(cfg, p, T, count, m.frame_interval_s, threads);
}

inline void run_sweep(Run& run) {
  const auto& b = run.cfg().sweep;
  ChainSpec c;
  c.N = b.N;
  c.J = b.J_Hz;
  c.Jz = b.Jz_over_J * b.J_Hz;
  c.delta_zeta = b.dzeta_over_J * b.J_Hz;
  const double T = b.JT / b.J_Hz;
  const auto ramp = ramps::generate_ramp(c, 4.0 * b.J_Hz * b.omega_max_over_4J, T, b.ramp);
  {
    auto os = run.open("ramp.csv");
    csv::Writer w(os, {"t_s", "omega_Hz"});
    for (std::size_t k = 0; k < ramp.t.size(); ++k) {
      w << ramp.t[k] << ramp.omega[k];
      w.end_row();
    }
  }
  ramps::SweepOptions opt;
  opt.dt_max = b.dt_max_s;
  opt.checkpoints = b.checkpoints;
  opt.threads = run.cfg().threads;
  json summary = {{"T_s", T}, {"JT", b.JT}, {"modes", json::object()}};
  auto os = run.open("sweep.csv");
  bool header = true;
  for (const auto& name : b.modes) {
    ramps::SweepResult r;
    if (name == "motional") {
      const auto ens = sweep_motion(b, T, run.cfg().realizations, run.cfg().seed, run.cfg().threads);
      if (!ens.rejected.empty())
        run.warn(std::to_string(ens.rejected.size()) + " evaporation realizations rejected for the motional ensemble");
      r = ramps::run_sweep(c, ramp, ramps::Mode::motional, ens.series, opt);
      summary["motion"] = {{"accepted", ens.accepted},
                           {"rejected", ens.rejected},
                           {"mean_I", ens.mean_I},
                           {"min_spacing_um", ens.min_spacing}};
    } else {
      r = ramps::run_sweep(c, ramp, name == "fixed" ? ramps::Mode::fixed : ramps::Mode::ideal, {}, opt);
    }
    r.write_csv(os, header);
    header = false;
    const auto ci = ramps::bootstrap_mean(r.final_fidelity, 0.95, 4000, run.cfg().seed);
    summary["modes"][name] = {{"final_fidelity_mean", ci.mean},
                              {"final_fidelity_ci95", {ci.lo, ci.hi}},
                              {"final_fidelity", r.final_fidelity},
                              {"realizations", r.realizations}};
  }
  auto ss = run.open("summary.json");
  ss << summary.dump(2) << '\n';
}

inline void run_evaporate(Run& run) {
  const auto& b = run.cfg().evaporate;
  md::EvaporationConfig cfg = b.model;
  cfg.seed = run.cfg().seed;
  if (b.use_sequence) cfg.schedule = md::make_sequence(b.sequence, cfg.c6, cfg.mass);
  const int R = std::max(2, run.cfg().realizations);
  if (run.cfg().realizations < 2) run.warn("evaporate needs two realizations; running 2");
  std::vector<md::Trajectory> runs;
  const auto curve = md::evaporation_curve(cfg, R, run.cfg().threads, &runs);
  {
    auto os = run.open("curve.csv");
    csv::Writer w(os, {"L_um", "N_mean", "N_var"});
    for (const auto& row : curve.rows) {
      w << row.L << row.N_mean << row.N_var;
      w.end_row();
    }
  }
  {
    auto os = run.open("energies.csv");
    csv::Writer w(os, {"t_s", "L_um", "N_mean", "kinetic_per_atom_Hz", "pair_per_atom_Hz"});
    for (std::size_t f = 0; f < runs.front().frames.size(); ++f) {
      double n = 0, k = 0, p = 0;
      int alive = 0;
      for (const auto& r : runs) {
        const auto& fr = r.frames[f];
        n += static_cast<double>(fr.x.size());
        if (!fr.x.empty()) {
          k += fr.kinetic_per_atom;
          p += fr.pair_per_atom;
          ++alive;
        }
      }
      const auto& fr = runs.front().frames[f];
      w << fr.t << fr.L << n / R << (alive ? k / alive : 0.0) << (alive ? p / alive : 0.0);
      w.end_row();
    }
  }
  for (int i = 0; i < std::min(b.export_trajectories, R); ++i) {
    auto os = run.open("trajectory_" + std::to_string(i) + ".csv");
    csv::Writer w(os, {"t_s", "atom_id", "x_um", "v_um_per_s"});
    for (const auto& fr : runs[i].frames)
      for (std::size_t a = 0; a < fr.x.size(); ++a) {
        w << fr.t << fr.id[a] << fr.x[a] << fr.v[a];
        w.end_row();
      }
  }
  {
    auto os = run.open("ejections.csv");
    csv::Writer w(os, {"realization", "t_s", "atom_id", "side", "L_um", "v_um_per_s"});
    for (std::size_t i = 0; i < runs.size(); ++i)
      for (const auto& e : runs[i].ejections) {
        w << i << e.t << e.atom_id << (e.side > 0 ? "right" : "left") << e.L << e.velocity;
        w.end_row();
      }
  }
  json windows = json::array();
  for (const auto& [n, range] : curve.zero_variance_windows())
    windows.push_back({{"N", n}, {"L_min_um", range.first}, {"L_max_um", range.second}});
  double drift = 0.0;
  for (const auto& r : runs) drift = std::max(drift, r.max_static_drift);
  json survivors = json::array();
  for (const auto& r : runs) survivors.push_back(r.survivors());
  auto ss = run.open("summary.json");
  ss << json{{"realizations", R}, {"zero_variance_windows", windows}, {"survivors", survivors},
             {"max_static_energy_drift", drift}}
            .dump(2)
     << '\n';
}

inline void run_trap(Run& run) {
  const auto& b = run.cfg().trap;
  trap::TrapOptions opt;
  opt.fit_window = b.fit_window_um;
  opt.J_hz = b.J_Hz;
  const auto r = trap::trap_profile(b.beams, opt);
  json rep = {{"bound", r.bound}, {"diagnostic", r.diagnostic}};
  if (r.bound) {
    const auto orbit = trap::orbit_average(r);
    rep.update({{"x0_um", r.x0},
                {"y0_um", r.y0},
                {"z0_um", r.z0},
                {"depth_longitudinal_Hz", r.depth_longitudinal},
                {"depth_transverse_Hz", r.depth_transverse},
                {"nu_X_Hz", r.nu_X},
                {"nu_Y_Hz", r.nu_Y},
                {"nu_Z_Hz", r.nu_Z},
                {"lattice_spacing_um", r.lattice_spacing},
                {"ground_extent_X_nm", r.ground_extent_X},
                {"orbit_offset_Hz", orbit.offset},
                {"differential_offset_Hz", orbit.differential},
                {"eta", r.eta},
                {"beta", r.beta},
                {"fit_change", r.fit_change}});
    if (r.lattice_spacing > 0) {
      const auto a = trap::anharmonic_shift(b.beams, r, b.anharmonic_X_nm);
      rep["anharmonic_curvature_Hz_per_nm2"] = a.curvature;
      rep["anharmonic_shift_Hz"] = a.shift_at;
      rep["anharmonic_X_nm"] = b.anharmonic_X_nm;
    }
  } else {
    run.warn("no bound trap minimum: " + r.diagnostic);
  }
  {
    auto os = run.open("report.json");
    os << rep.dump(2) << '\n';
  }
  auto os = run.open("potential_map.csv");
  os.precision(10);
  trap::write_potential_map(os, b.beams, b.map_x_min, b.map_x_max, b.map_nx, b.map_z_min, b.map_z_max, b.map_nz);
}

inline void run_lifetime(Run& run) {
  const auto& b = run.cfg().lifetime;
  const auto budget = lifetime::combine(b.channels, b.atoms);
  auto os = run.open("lifetime.csv");
  csv::Writer w(os, {"channel", "lifetime_s", "origin"});
  for (const auto& c : budget.channels) {
    w << c.name << c.lifetime << (c.origin == lifetime::Origin::computed ? "computed" : "fixed_input");
    w.end_row();
  }
  w << "combined" << budget.combined << "";
  w.end_row();
  w << "chain_" + std::to_string(budget.atoms) << budget.chain << "";
  w.end_row();
}

// ---------------------------------------------------------------- entry

/// Output directory: --out, then RYDSIM_OUT, then the config value.
inline std::string resolve_output_dir(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("RYDSIM_OUT"); env && *env) return env;
  return from_config;
}

/// Exit codes: 0 success (warnings allowed), 1 run failure, 2 usage or config error.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"rydsim: circular-Rydberg spin-chain simulator"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  long long seed = -1;
  int realizations = 0, threads = 0;
  for (const auto& name : subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", config_path, "JSON config file (defaults when omitted)");
    sub->add_option("--seed", seed, "base seed")->check(CLI::NonNegativeNumber);
    sub->add_option("--realizations", realizations, "ensemble size")->check(CLI::PositiveNumber);
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory (overrides RYDSIM_OUT)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  config::RunConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) {
        err << config_path << ": cannot open config\n";
        return 2;
      }
      std::stringstream ss;
      ss << f.rdbuf();
      cfg = config::parse(ss.str(), config_path);
    }
  } catch (const config::LoadError& e) {
    err << e.what() << '\n';
    return 2;
  }
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (realizations > 0) cfg.realizations = realizations;
  if (threads > 0) cfg.threads = threads;
  cfg.output_dir = resolve_output_dir(out_dir, cfg.output_dir);

  try {
    Run run(name, cfg, err);
    if (name == "pair-coeffs") run_pair_coeffs(run);
    else if (name == "phase-diagram") run_phase_diagram(run);
    else if (name == "gaps") run_gaps(run);
    else if (name == "sweep") run_sweep(run);
    else if (name == "evaporate") run_evaporate(run);
    else if (name == "trap") run_trap(run);
    else if (name == "lifetime") run_lifetime(run);
    run.write_manifest();
    out << run.manifest_path().string() << '\n';
    if (run.warnings() > 0) err << "warnings: " << run.warnings() << '\n';
  } catch (const std::exception& e) {
    err << name << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace rydsim::cli
