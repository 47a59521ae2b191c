#include "geovar/reweighting.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace geovar {

void ReweightConfig::validate() const {
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw std::invalid_argument("reweight: s1 and s2 must be positive");
  if (!(theta2_km <= theta1_km)) throw std::invalid_argument("reweight: theta2 must not exceed theta1");
  if (delta_scale != 1 && delta_scale != 2) throw std::invalid_argument("reweight: delta_scale must be 1 or 2");
  if (!model) throw std::invalid_argument("reweight: no fitted variogram model");
  model->validate();
}

std::string_view to_string(NegativeClass c) {
  switch (c) {
    case NegativeClass::hard:
      return "hard";
    case NegativeClass::false_negative:
      return "false";
    case NegativeClass::neutral:
      break;
  }
  return "neutral";
}

double deviation(const ReweightConfig& cfg, double d_cos, double d_km) {
  if (!cfg.model) throw std::invalid_argument("deviation: no fitted variogram model");
  return d_cos - cfg.delta_scale * evaluate_spherical(*cfg.model, d_km);
}

NegativeClass classify(const ReweightConfig& cfg, double delta, double d_km) {
  if (delta < 0.0) {
    if (d_km > cfg.theta1_km) return NegativeClass::hard;
    if (d_km < cfg.theta2_km) return NegativeClass::false_negative;
  }
  return NegativeClass::neutral;
}

double weight_unclamped(const ReweightConfig& cfg, double delta, double d_km) {
  switch (classify(cfg, delta, d_km)) {
    case NegativeClass::hard:
      return std::exp(-delta / cfg.s1);
    case NegativeClass::false_negative:
      return std::exp(delta / cfg.s2);
    case NegativeClass::neutral:
      break;
  }
  return 1.0;
}

double weight(const ReweightConfig& cfg, double delta, double d_km) {
  return std::clamp(weight_unclamped(cfg, delta, d_km), kWeightMin, kWeightMax);
}

Eigen::MatrixXd weight_matrix(const ReweightConfig& cfg, const Eigen::MatrixXd& anchor_features,
                              std::span<const GeoCoord> anchor_coords, const Eigen::MatrixXd& negative_features,
                              std::span<const GeoCoord> negative_coords,
                              Eigen::Matrix<NegativeClass, Eigen::Dynamic, Eigen::Dynamic>* classes) {
  if (anchor_features.rows() != negative_features.rows()) {
    throw std::invalid_argument("weight_matrix: feature dimension mismatch");
  }
  if (static_cast<std::size_t>(anchor_features.cols()) != anchor_coords.size() ||
      static_cast<std::size_t>(negative_features.cols()) != negative_coords.size()) {
    throw std::invalid_argument("weight_matrix: feature/coordinate count mismatch");
  }
  Eigen::MatrixXd w(anchor_features.cols(), negative_features.cols());
  if (classes) classes->resize(w.rows(), w.cols());
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      const double d_km = haversine_km(anchor_coords[i], negative_coords[j]);
      const double d_cos = cosine_distance(anchor_features.col(i), negative_features.col(j));
      const double delta = deviation(cfg, d_cos, d_km);
      w(i, j) = weight(cfg, delta, d_km);
      if (classes) (*classes)(i, j) = classify(cfg, delta, d_km);
    }
  }
  return w;
}

}  // namespace geovar
