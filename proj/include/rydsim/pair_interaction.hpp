#pragma once

// Dipole-dipole coefficients of the |48C>/|50C> pair and the spin couplings
// they induce on a chain with spacing d.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rydsim/constants.hpp"

namespace rydsim {

/// Pair-state interaction coefficients in GHz um^6, with the fields at which
/// they were evaluated.
struct CouplingSet {
  double c6_4848 = 0.0;
  double c6_4850 = 0.0;
  double c6_5050 = 0.0;
  double a6_4850 = 0.0;
  double field_F = 0.0;  // V/cm
  double field_B = 0.0;  // Gauss

  /// Values quoted for F = 9 V/cm, B = 13 G.
  static CouplingSet reference() { return {2.2, 2.66, 3.03, -0.539, 9.0, 13.0}; }
};

/// Spin-model couplings in Hz (H/h convention).
struct SpinCouplings {
  double J = 0.0;
  double Jz = 0.0;
  double delta_zeta = 0.0;
  double delta_E = 0.0;
  double spacing_d = 0.0;  // um
};

inline SpinCouplings spin_couplings(const CouplingSet& c, double d_um) {
  if (!(d_um > 0.0) || !std::isfinite(d_um))
    throw std::invalid_argument("spin_couplings: spacing must be positive");
  for (double v : {c.c6_4848, c.c6_4850, c.c6_5050, c.a6_4850})
    if (!std::isfinite(v)) throw std::invalid_argument("spin_couplings: non-finite coefficient");

  const double d6 = std::pow(d_um, 6);
  const double scale = constants::GHz / d6;
  SpinCouplings s;
  s.delta_E = scale * (c.c6_4848 + c.c6_5050 + 2.0 * c.a6_4850) / 4.0;
  s.delta_zeta = scale * (c.c6_4848 - c.c6_5050) / 2.0;
  s.Jz = scale * (c.c6_4848 - 2.0 * c.c6_4850 + c.c6_5050) / 4.0;
  s.J = scale * std::abs(c.a6_4850) / 2.0;
  s.spacing_d = d_um;
  return s;
}

/// tau_ex = 1/(4J), in seconds.
inline double exchange_time(double J_Hz) {
  if (!(J_Hz > 0.0)) throw std::invalid_argument("exchange_time: J must be positive");
  return 1.0 / (4.0 * J_Hz);
}

struct FieldCurveRow {
  double F = 0.0;  // V/cm
  double B = 0.0;  // Gauss
  double Jz_over_J = 0.0;
  double dzeta_over_J = 0.0;
};

/// Digitized Jz/J and dzeta/J versus (F, B). Rows are kept sorted by (B, F).
class FieldCurve {
 public:
  FieldCurve() = default;
  explicit FieldCurve(std::vector<FieldCurveRow> rows) : rows_(std::move(rows)) {
    for (const auto& r : rows_)
      if (!std::isfinite(r.F) || !std::isfinite(r.B) || !std::isfinite(r.Jz_over_J) ||
          !std::isfinite(r.dzeta_over_J))
        throw std::invalid_argument("FieldCurve: non-finite entry");
    std::sort(rows_.begin(), rows_.end(), [](const auto& a, const auto& b) {
      return a.B != b.B ? a.B < b.B : a.F < b.F;
    });
    for (std::size_t i = 1; i < rows_.size(); ++i)
      if (rows_[i].B == rows_[i - 1].B && rows_[i].F == rows_[i - 1].F)
        throw std::invalid_argument("FieldCurve: duplicate (F, B) row");
  }

  const std::vector<FieldCurveRow>& rows() const { return rows_; }

  /// Linear interpolation in F at a tabulated B. Returns {Jz/J, dzeta/J}.
  std::pair<double, double> ratios_at(double F, double B) const {
    constexpr double tol = 1e-9;
    auto first = std::find_if(rows_.begin(), rows_.end(),
                              [&](const auto& r) { return std::abs(r.B - B) <= tol; });
    if (first == rows_.end())
      throw std::out_of_range("FieldCurve: B = " + std::to_string(B) + " G is not tabulated");
    auto last = std::find_if(first, rows_.end(),
                             [&](const auto& r) { return std::abs(r.B - B) > tol; });
    if (F < first->F - tol || F > std::prev(last)->F + tol)
      throw std::out_of_range("FieldCurve: F = " + std::to_string(F) +
                              " V/cm outside tabulated range");
    for (auto it = first; it != last; ++it) {
      if (std::abs(it->F - F) <= tol) return {it->Jz_over_J, it->dzeta_over_J};
      auto next = std::next(it);
      if (next != last && F > it->F && F < next->F) {
        const double w = (F - it->F) / (next->F - it->F);
        return {(1 - w) * it->Jz_over_J + w * next->Jz_over_J,
                (1 - w) * it->dzeta_over_J + w * next->dzeta_over_J};
      }
    }
    throw std::out_of_range("FieldCurve: query not bracketed");
  }

  /// Reads a CSV with header `F_Vcm,B_gauss,Jz_over_J,dzeta_over_J`.
  static FieldCurve from_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("FieldCurve: empty CSV");
    auto trim = [](std::string s) {
      s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char ch) { return std::isspace(ch); }),
              s.end());
      return s;
    };
    if (trim(line) != "F_Vcm,B_gauss,Jz_over_J,dzeta_over_J")
      throw std::invalid_argument("FieldCurve: unexpected header '" + line + "'");
    std::vector<FieldCurveRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      std::stringstream ss(line);
      std::string cell;
      double v[4];
      for (int k = 0; k < 4; ++k) {
        if (!std::getline(ss, cell, ','))
          throw std::invalid_argument("FieldCurve: line " + std::to_string(lineno) +
                                      ": expected 4 columns");
        try {
          std::size_t pos = 0;
          v[k] = std::stod(cell, &pos);
          if (!trim(cell.substr(pos)).empty()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
          throw std::invalid_argument("FieldCurve: line " + std::to_string(lineno) +
                                      ": bad number '" + cell + "'");
        }
      }
      rows.push_back({v[0], v[1], v[2], v[3]});
    }
    return FieldCurve(std::move(rows));
  }

  static FieldCurve from_csv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("FieldCurve: cannot open " + path);
    return from_csv(f);
  }

 private:
  std::vector<FieldCurveRow> rows_;
};

/// Couplings at (F, B) from the tabulated ratios; J is field independent and
/// passes through unchanged.
inline SpinCouplings couplings_at_fields(const FieldCurve& curve, double F, double B, double J_Hz,
                                         double spacing_d = 0.0) {
  auto [jz, dz] = curve.ratios_at(F, B);
  SpinCouplings s;
  s.J = J_Hz;
  s.Jz = jz * J_Hz;
  s.delta_zeta = dz * J_Hz;
  s.spacing_d = spacing_d;
  return s;
}

}  // namespace rydsim
