#pragma once

#include <cmath>
#include <numbers>

namespace geovar {

/// Mean Earth radius (IUGG), kilometers. Every distance threshold is read against it.
inline constexpr double kEarthRadiusKm = 6371.0088;

/// Latitude/longitude in degrees.
///
/// Construction rejects non-finite values and latitudes outside [-90, 90].
/// Longitudes outside [-180, 180] are wrapped into that interval, so
/// GeoCoord(lat, lon + 360) == GeoCoord(lat, lon); in-range longitudes are
/// stored unchanged.
class GeoCoord {
 public:
  GeoCoord() = default;
  GeoCoord(double lat_deg, double lon_deg);

  double lat() const { return lat_; }
  double lon() const { return lon_; }

  double lat_rad() const { return lat_ * (std::numbers::pi / 180.0); }
  double lon_rad() const { return lon_ * (std::numbers::pi / 180.0); }

  friend bool operator==(const GeoCoord&, const GeoCoord&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// Equal Earth map coordinates on the unit sphere (unitless).
struct ProjectedPoint {
  double x = 0.0;
  double y = 0.0;
};

/// Great-circle distance on the sphere of radius kEarthRadiusKm.
double haversine_km(const GeoCoord& a, const GeoCoord& b);

/// Equal Earth projection (Savric, Patterson, Jenny 2018), unit radius.
/// |x| <= ~2.7066, |y| <= ~1.3173.
ProjectedPoint equal_earth_project(const GeoCoord& g);

namespace equal_earth {
inline constexpr double A1 = 1.340264;
inline constexpr double A2 = -0.081106;
inline constexpr double A3 = 0.000893;
inline constexpr double A4 = 0.003796;
}  // namespace equal_earth

}  // namespace geovar
