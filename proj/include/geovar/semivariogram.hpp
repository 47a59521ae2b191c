#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geovar/dataset.hpp"
#include "geovar/geodesy.hpp"

namespace geovar {

/// 1 - u.v / (|u| |v|), clamped to [0, 2]. Throws on size mismatch or a
/// zero-norm argument.
template <typename DerivedU, typename DerivedV>
typename DerivedU::Scalar cosine_distance(const Eigen::MatrixBase<DerivedU>& u, const Eigen::MatrixBase<DerivedV>& v) {
  using Scalar = typename DerivedU::Scalar;
  if (u.size() != v.size()) throw std::invalid_argument("cosine_distance: dimension mismatch");
  const Scalar nu2 = u.squaredNorm();
  const Scalar nv2 = v.squaredNorm();
  if (!(nu2 > Scalar(0)) || !(nv2 > Scalar(0))) throw std::invalid_argument("cosine_distance: zero-norm vector");
  const Scalar d = Scalar(1) - u.dot(v) / std::sqrt(nu2 * nv2);
  return std::clamp(d, Scalar(0), Scalar(2));
}

struct VariogramBin {
  double h_lo = 0.0;
  double h_center = 0.0;
  double h_hi = 0.0;
  double gamma_hat = std::numeric_limits<double>::quiet_NaN();  // NaN iff pair_count == 0
  std::uint64_t pair_count = 0;

  bool empty() const { return pair_count == 0; }
};

/// Equal-width bins over [0, h_max]; gamma_hat is half the mean cosine
/// distance of the pairs that fell in the bin.
struct EmpiricalVariogram {
  std::vector<VariogramBin> bins;
  std::uint64_t total_pairs_sampled = 0;
  std::uint64_t seed = 0;

  double h_max() const { return bins.empty() ? 0.0 : bins.back().h_hi; }
  std::size_t nonempty_bins() const;
};

struct VariogramOptions {
  std::size_t n_bins = 50;
  double h_max_km = 5000.0;
  std::uint64_t max_pairs = 5'000'000;
  std::uint64_t seed = 0;
  unsigned workers = 0;  // 0: GEOVAR_THREADS / hardware
};

/// Estimates the binned embedding semivariogram. When C(n,2) exceeds
/// max_pairs, max_pairs distinct unordered pairs are drawn uniformly.
/// Results do not depend on the worker count.
EmpiricalVariogram estimate_empirical(const Eigen::MatrixXd& features, std::span<const GeoCoord> coords,
                                      const VariogramOptions& opts);
EmpiricalVariogram estimate_empirical(const Dataset& d, const VariogramOptions& opts);

/// Spherical variogram c0 + c (1.5 t - 0.5 t^3), t = h / a, flat at c0 + c
/// beyond the range. gamma(0) is the nugget c0 (right limit), not 0.
struct SphericalModel {
  double nugget = 0.0;
  double partial_sill = 0.0;
  double range_km = 1.0;

  double sill() const { return nugget + partial_sill; }
  void validate() const;

  friend bool operator==(const SphericalModel&, const SphericalModel&) = default;
};

template <typename Scalar>
Scalar evaluate_spherical(const SphericalModel& m, Scalar h) {
  if (h < Scalar(0) || std::isnan(h)) throw std::invalid_argument("evaluate_spherical: negative distance");
  if (h >= Scalar(m.range_km)) return Scalar(m.nugget + m.partial_sill);
  const Scalar t = h / Scalar(m.range_km);
  return Scalar(m.nugget) + Scalar(m.partial_sill) * (Scalar(1.5) * t - Scalar(0.5) * t * t * t);
}

struct FitResult {
  SphericalModel model;
  double objective = 0.0;
  SphericalModel seed_model;  // best coarse-grid point
  double seed_objective = 0.0;
  int iterations = 0;
  bool degenerate = false;
  std::string warning;
};

/// Pair-count weighted least squares over nonempty bins.
double fit_objective(const EmpiricalVariogram& ev, const SphericalModel& m);

/// Fits the spherical model by weighted least squares: a coarse grid over the
/// range (nugget and sill solved in closed form per grid point) seeds a
/// bounded Nelder-Mead refinement over (c0, c, a) with c0, c >= 0 and
/// a in (0, h_max]. Needs at least 3 nonempty bins.
FitResult fit_spherical(const EmpiricalVariogram& ev);

// Text formats.
std::string variogram_to_csv(const EmpiricalVariogram& ev);
EmpiricalVariogram variogram_from_csv(const std::string& text);
std::string model_to_text(const SphericalModel& m, double objective);
SphericalModel model_from_text(const std::string& text);

}  // namespace geovar
