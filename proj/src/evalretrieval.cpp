#include "geovar/evalretrieval.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace geovar {

GpsGallery build_gallery(std::span<const GeoCoord> coords, const DualEncoder& encoder) {
  if (coords.empty()) throw std::invalid_argument("build_gallery: empty coordinate list");
  return {std::vector<GeoCoord>(coords.begin(), coords.end()), encode_locations(encoder, coords)};
}

namespace {

std::size_t argmax_first(const Eigen::VectorXd& sims) {
  std::size_t best = 0;
  for (Eigen::Index i = 1; i < sims.size(); ++i) {
    if (sims[i] > sims[static_cast<Eigen::Index>(best)]) best = static_cast<std::size_t>(i);
  }
  return best;
}

}  // namespace

Prediction predict(const GpsGallery& gallery, const Eigen::VectorXd& query) {
  if (gallery.size() == 0) throw std::invalid_argument("predict: empty gallery");
  if (query.size() != gallery.embeddings.rows()) throw std::invalid_argument("predict: query dimension mismatch");
  const Eigen::VectorXd sims = gallery.embeddings.transpose() * query;
  const std::size_t best = argmax_first(sims);
  return {best, gallery.coords[best], sims[static_cast<Eigen::Index>(best)]};
}

EvalReport score_errors(std::vector<double> errors) {
  if (errors.empty()) throw std::invalid_argument("evaluate: empty query set");
  EvalReport r;
  r.n_queries = errors.size();
  std::size_t c25 = 0, c200 = 0, c750 = 0;
  for (double e : errors) {
    c25 += e <= 25.0;
    c200 += e <= 200.0;
    c750 += e <= 750.0;
  }
  const double n = static_cast<double>(errors.size());
  r.acc25 = static_cast<double>(c25) / n;
  r.acc200 = static_cast<double>(c200) / n;
  r.acc750 = static_cast<double>(c750) / n;
  std::sort(errors.begin(), errors.end());
  const std::size_t mid = errors.size() / 2;
  r.median_error_km = errors.size() % 2 == 1 ? errors[mid] : 0.5 * (errors[mid - 1] + errors[mid]);
  return r;
}

EvalReport evaluate(const GpsGallery& gallery, const Eigen::MatrixXd& query_embeddings,
                    std::span<const GeoCoord> truth) {
  if (truth.empty() || query_embeddings.cols() == 0) throw std::invalid_argument("evaluate: empty query set");
  if (static_cast<std::size_t>(query_embeddings.cols()) != truth.size()) {
    throw std::invalid_argument("evaluate: query/truth count mismatch");
  }
  std::vector<double> errors;
  errors.reserve(truth.size());
  for (Eigen::Index q = 0; q < query_embeddings.cols(); ++q) {
    const Prediction p = predict(gallery, query_embeddings.col(q));
    errors.push_back(haversine_km(p.coord, truth[static_cast<std::size_t>(q)]));
  }
  return score_errors(std::move(errors));
}

std::string report_csv_row(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, ",,,,,%.6f,%.6f,%.6f", r.acc25, r.acc200, r.acc750);
  return buf;
}

std::string report_text(const EvalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "queries: %zu\nacc@25km: %.4f\nacc@200km: %.4f\nacc@750km: %.4f\nmedian error (km): %.3f\n",
                r.n_queries, r.acc25, r.acc200, r.acc750, r.median_error_km);
  return buf;
}

}  // namespace geovar
