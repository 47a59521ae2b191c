#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geovar/encoders.hpp"
#include "geovar/geodesy.hpp"

namespace geovar {

/// Candidate coordinates with their location embeddings (unit columns).
struct GpsGallery {
  std::vector<GeoCoord> coords;
  Eigen::MatrixXd embeddings;  // embed_dim x n

  std::size_t size() const { return coords.size(); }
};

GpsGallery build_gallery(std::span<const GeoCoord> coords, const DualEncoder& encoder);

struct Prediction {
  std::size_t index = 0;
  GeoCoord coord;
  double similarity = 0.0;
};

/// Highest dot product wins; exact ties go to the lowest gallery index.
Prediction predict(const GpsGallery& gallery, const Eigen::VectorXd& query);

struct EvalReport {
  double acc25 = 0.0;
  double acc200 = 0.0;
  double acc750 = 0.0;
  std::size_t n_queries = 0;
  double median_error_km = 0.0;  // not one of the standard thresholds
};

/// Scores per-query errors (km) against the 25/200/750 km thresholds;
/// an error equal to a threshold counts as correct.
EvalReport score_errors(std::vector<double> errors_km);

/// Queries are columns of `query_embeddings`, each paired with its true coordinate.
EvalReport evaluate(const GpsGallery& gallery, const Eigen::MatrixXd& query_embeddings,
                    std::span<const GeoCoord> truth);

/// `epoch,mean_loss,mean_weight,hard_count,false_count,val_acc25,val_acc200,val_acc750`
/// with the training columns left empty.
std::string report_csv_row(const EvalReport& r);
std::string report_text(const EvalReport& r);

}  // namespace geovar
