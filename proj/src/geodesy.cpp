#include "geovar/geodesy.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace geovar {

GeoCoord::GeoCoord(double lat_deg, double lon_deg) {
  if (!std::isfinite(lat_deg) || !std::isfinite(lon_deg)) {
    throw std::invalid_argument("GeoCoord: non-finite coordinate");
  }
  if (lat_deg < -90.0 || lat_deg > 90.0) {
    throw std::invalid_argument("GeoCoord: latitude out of range: " + std::to_string(lat_deg));
  }
  if (lon_deg < -180.0 || lon_deg > 180.0) {
    lon_deg = std::remainder(lon_deg, 360.0);
  }
  lat_ = lat_deg;
  lon_ = lon_deg;
}

double haversine_km(const GeoCoord& a, const GeoCoord& b) {
  // Absolute differences keep the result bit-symmetric in (a, b).
  const double dlat = std::abs(a.lat_rad() - b.lat_rad());
  const double dlon = std::abs(a.lon_rad() - b.lon_rad());
  const double s_lat = std::sin(0.5 * dlat);
  const double s_lon = std::sin(0.5 * dlon);
  double h = s_lat * s_lat + std::cos(a.lat_rad()) * std::cos(b.lat_rad()) * s_lon * s_lon;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::atan2(std::sqrt(h), std::sqrt(1.0 - h));
}

ProjectedPoint equal_earth_project(const GeoCoord& g) {
  using namespace equal_earth;
  const double sqrt3 = std::numbers::sqrt3;
  // Evaluate on |lat| and restore the sign so the projection is exactly odd.
  const double phi = std::abs(g.lat_rad());
  const double lambda = g.lon_rad();

  const double theta = std::asin(0.5 * sqrt3 * std::sin(phi));
  const double t2 = theta * theta;
  const double t6 = t2 * t2 * t2;

  const double y = theta * (A1 + A2 * t2 + t6 * (A3 + A4 * t2));
  const double denom = 3.0 * (A1 + 3.0 * A2 * t2 + t6 * (7.0 * A3 + 9.0 * A4 * t2));
  const double x = 2.0 * sqrt3 * lambda * std::cos(theta) / denom;

  return {x, g.lat() < 0.0 ? -y : y};
}

}  // namespace geovar
