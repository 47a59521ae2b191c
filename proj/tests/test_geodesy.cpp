#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "geovar/geodesy.hpp"
#include "oracles.hpp"

using namespace geovar;

namespace {

GeoCoord random_coord(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> lat(-90.0, 90.0), lon(-180.0, 180.0);
  return {lat(rng), lon(rng)};
}

}  // namespace

TEST(GeoCoord, RejectsInvalidInput) {
  EXPECT_THROW(GeoCoord(std::nan(""), 0.0), std::invalid_argument);
  EXPECT_THROW(GeoCoord(0.0, std::numeric_limits<double>::infinity()), std::invalid_argument);
  EXPECT_THROW(GeoCoord(91.0, 0.0), std::invalid_argument);
  EXPECT_THROW(GeoCoord(-90.5, 0.0), std::invalid_argument);
  EXPECT_NO_THROW(GeoCoord(90.0, 180.0));
}

TEST(GeoCoord, WrapsLongitude) {
  EXPECT_EQ(GeoCoord(10.0, 370.0), GeoCoord(10.0, 10.0));
  EXPECT_EQ(GeoCoord(10.0, -190.0).lon(), 170.0);
  EXPECT_EQ(GeoCoord(10.0, 123.456).lon(), 123.456);
}

TEST(Haversine, IdenticalPointsAreZero) { EXPECT_EQ(haversine_km({0, 0}, {0, 0}), 0.0); }

TEST(Haversine, HalfAndQuarterCircumference) {
  // pi * R and pi * R / 2 with R = 6371.0088 km.
  EXPECT_NEAR(haversine_km({0, 0}, {0, 180}), 20015.114442, 0.001);
  EXPECT_NEAR(haversine_km({0, 0}, {90, 0}), 10007.557221, 0.001);
}

TEST(Haversine, AgreesWithIndependentFormula) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto a = random_coord(rng), b = random_coord(rng);
    EXPECT_NEAR(haversine_km(a, b), oracle::great_circle_km(a, b), 1e-6);
  }
}

TEST(Haversine, SymmetricBitExactAndBounded) {
  std::mt19937_64 rng(11);
  const double bound = std::numbers::pi * kEarthRadiusKm;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_coord(rng), b = random_coord(rng);
    const double ab = haversine_km(a, b);
    ASSERT_EQ(ab, haversine_km(b, a));
    ASSERT_GE(ab, 0.0);
    ASSERT_LE(ab, bound);
  }
}

TEST(Haversine, TriangleInequality) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_coord(rng), b = random_coord(rng), c = random_coord(rng);
    ASSERT_LE(haversine_km(a, c), haversine_km(a, b) + haversine_km(b, c) + 1e-9);
  }
}

TEST(EqualEarth, OriginIsFixed) {
  const auto p = equal_earth_project({0, 0});
  EXPECT_EQ(p.x, 0.0);
  EXPECT_EQ(p.y, 0.0);
}

TEST(EqualEarth, MatchesHandEvaluatedPolynomial) {
  // Closed form evaluated at 30 digits for (45, 90).
  const auto p = equal_earth_project({45, 90});
  EXPECT_NEAR(p.x, 1.15985449910298353, 1e-12);
  EXPECT_NEAR(p.y, 0.860231085522010481, 1e-12);
}

TEST(EqualEarth, OddSymmetry) {
  EXPECT_EQ(equal_earth_project({-45, 90}).y, -equal_earth_project({45, 90}).y);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 5000; ++i) {
    const auto g = random_coord(rng);
    const auto p = equal_earth_project(g);
    ASSERT_EQ(equal_earth_project({-g.lat(), g.lon()}).y, -p.y);
    ASSERT_EQ(equal_earth_project({g.lat(), -g.lon()}).x, -p.x);
    ASSERT_TRUE(std::isfinite(p.x) && std::isfinite(p.y));
  }
}

TEST(EqualEarth, InjectiveOnOneDegreeGrid) {
  std::vector<ProjectedPoint> pts;
  for (int lat = -90; lat <= 90; ++lat)
    for (int lon = -180; lon <= 180; ++lon) pts.push_back(equal_earth_project({double(lat), double(lon)}));
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.x < b.x; });
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size() && pts[j].x - pts[i].x < 1e-9; ++j) {
      ASSERT_GE(std::hypot(pts[j].x - pts[i].x, pts[j].y - pts[i].y), 1e-9) << "collision at " << i << "," << j;
    }
  }
}
