#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "geovar/byte_io.hpp"
#include "geovar/geodesy.hpp"

namespace geovar {

struct GeoTaggedEmbedding {
  std::uint64_t id = 0;
  GeoCoord coord;
  std::vector<float> features;

  friend bool operator==(const GeoTaggedEmbedding&, const GeoTaggedEmbedding&) = default;
};

/// Ordered records with a common feature dimension. Iteration order is file order.
struct Dataset {
  std::vector<GeoTaggedEmbedding> records;
  std::uint32_t dim = 0;
  std::string name;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }

  /// Throws std::invalid_argument on dim < 2, ragged features, non-finite
  /// entries or duplicate ids.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Features as a dim x n matrix of doubles, one column per record.
Eigen::MatrixXd feature_matrix(const Dataset& d);
std::vector<GeoCoord> coordinates(const Dataset& d);

// .gemb: "GEMB", u16 version, u64 count, u32 dim, then per record
// (u64 id, f64 lat, f64 lon, dim x f32), all little-endian. A trailing
// u32-length-prefixed name block follows the records.
inline constexpr std::uint16_t kGembVersion = 1;
inline constexpr std::size_t kGembHeaderBytes = 4 + 2 + 8 + 4;

std::vector<std::uint8_t> encode_binary(const Dataset& d);
Dataset decode_binary(std::span<const std::uint8_t> bytes);
void save_binary(const Dataset& d, const std::string& path);
Dataset load_binary(const std::string& path);

/// Embedding block: u32 dim, u64 count, count x dim f32, little-endian.
void save_embedding_block(const std::vector<std::vector<float>>& rows, std::uint32_t dim, const std::string& path);
std::vector<std::vector<float>> load_embedding_block(const std::string& path, std::uint32_t* dim_out);

/// Joins an `id,lat,lon` CSV with an embedding block by row order.
Dataset load_csv(const std::string& coords_path, const std::string& embeddings_path);

/// Latitude/longitude bounding box, degrees.
struct Region {
  double lat_min = -30.0;
  double lat_max = 30.0;
  double lon_min = -30.0;
  double lon_max = 30.0;
};

struct SyntheticSpec {
  std::size_t n = 2000;
  std::uint32_t dim = 32;
  std::size_t latent_dim = 8;
  double cov_range_km = 2000.0;
  double cov_sill = 1.0;
  double cov_nugget = 0.1;
  std::uint64_t seed = 0;
  Region region;

  void validate() const;
};

/// Spherical correlation 1 - 1.5t + 0.5t^3 for t <= 1, else 0.
inline double spherical_correlation(double t) { return t >= 1.0 ? 0.0 : 1.0 - 1.5 * t + 0.5 * t * t * t; }

/// Coordinates plus the n x latent_dim Gaussian latent field before the
/// feature map. Exposed so the generator itself can be sanity-checked.
struct LatentField {
  std::vector<GeoCoord> coords;
  Eigen::MatrixXd latents;
  double jitter = 0.0;
};

LatentField generate_latent_field(const SyntheticSpec& spec);

/// Samples a spatial Gaussian process with spherical covariance, maps it
/// through a seeded linear map to `dim` features and L2-normalizes rows.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Seeded shuffle and prefix cut; the validation part holds llround(n * f)
/// records. Both parts keep the original record order.
std::pair<Dataset, Dataset> split(const Dataset& d, double val_fraction, std::uint64_t seed);

}  // namespace geovar
