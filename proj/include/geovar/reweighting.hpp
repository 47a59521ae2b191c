#pragma once

#include <optional>
#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "geovar/geodesy.hpp"
#include "geovar/semivariogram.hpp"

namespace geovar {

inline constexpr double kWeightMin = 0.05;
inline constexpr double kWeightMax = 20.0;

/// Hard/false-negative reweighting parameters. `delta_scale` multiplies the
/// fitted (half) variogram to produce the expected raw cosine distance.
struct ReweightConfig {
  double s1 = 0.5;
  double s2 = 0.5;
  double theta1_km = 2000.0;
  double theta2_km = 25.0;
  std::optional<SphericalModel> model;
  int delta_scale = 2;

  /// Throws std::invalid_argument when s1/s2 <= 0, theta2 > theta1,
  /// delta_scale not in {1, 2}, or the model is missing or invalid.
  void validate() const;
};

enum class NegativeClass { neutral, hard, false_negative };

std::string_view to_string(NegativeClass c);

/// Observed minus expected raw cosine distance at this separation.
double deviation(const ReweightConfig& cfg, double d_cos, double d_km);

NegativeClass classify(const ReweightConfig& cfg, double delta, double d_km);

/// Piecewise weight before clamping: exp(-delta/s1) for hard negatives,
/// exp(delta/s2) for false negatives, 1 otherwise.
double weight_unclamped(const ReweightConfig& cfg, double delta, double d_km);

/// weight_unclamped clamped to [kWeightMin, kWeightMax].
double weight(const ReweightConfig& cfg, double delta, double d_km);

/// Entry (i, j) weights negative j for anchor i. Features are columns.
/// `classes`, when given, receives the NegativeClass of every entry.
Eigen::MatrixXd weight_matrix(const ReweightConfig& cfg, const Eigen::MatrixXd& anchor_features,
                              std::span<const GeoCoord> anchor_coords, const Eigen::MatrixXd& negative_features,
                              std::span<const GeoCoord> negative_coords,
                              Eigen::Matrix<NegativeClass, Eigen::Dynamic, Eigen::Dynamic>* classes = nullptr);

}  // namespace geovar
