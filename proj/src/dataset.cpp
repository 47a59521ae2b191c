#include "geovar/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace geovar {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

void Dataset::validate() const {
  if (dim < 2) throw std::invalid_argument("dataset dimension must be >= 2");
  std::unordered_set<std::uint64_t> ids;
  ids.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.features.size() != dim) {
      throw std::invalid_argument("record " + std::to_string(i) + " has " + std::to_string(r.features.size()) +
                                  " features, expected " + std::to_string(dim));
    }
    for (float f : r.features) {
      if (!std::isfinite(f)) throw std::invalid_argument("record " + std::to_string(i) + " has a non-finite feature");
    }
    if (!ids.insert(r.id).second) throw std::invalid_argument("duplicate id " + std::to_string(r.id));
  }
}

Eigen::MatrixXd feature_matrix(const Dataset& d) {
  Eigen::MatrixXd m(d.dim, static_cast<Eigen::Index>(d.size()));
  for (std::size_t j = 0; j < d.size(); ++j) {
    const auto& f = d.records[j].features;
    for (std::uint32_t i = 0; i < d.dim; ++i) m(i, static_cast<Eigen::Index>(j)) = f[i];
  }
  return m;
}

std::vector<GeoCoord> coordinates(const Dataset& d) {
  std::vector<GeoCoord> out;
  out.reserve(d.size());
  for (const auto& r : d.records) out.push_back(r.coord);
  return out;
}

// ---------------------------------------------------------------- .gemb

std::vector<std::uint8_t> encode_binary(const Dataset& d) {
  d.validate();
  ByteWriter w;
  w.put_bytes("GEMB");
  w.put<std::uint16_t>(kGembVersion);
  w.put<std::uint64_t>(d.size());
  w.put<std::uint32_t>(d.dim);
  for (const auto& r : d.records) {
    w.put<std::uint64_t>(r.id);
    w.put<double>(r.coord.lat());
    w.put<double>(r.coord.lon());
    for (float f : r.features) w.put<float>(f);
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(d.name.size()));
  w.put_bytes(d.name);
  return w.bytes();
}

Dataset decode_binary(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.get_bytes(4, "magic") != "GEMB") throw FormatError(Kind::bad_magic, 0, "bad magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kGembVersion) {
    throw FormatError(Kind::bad_version, 4, "unsupported .gemb version " + std::to_string(version));
  }
  const auto count = r.get<std::uint64_t>("record count");
  const std::size_t dim_offset = r.pos();
  const auto dim = r.get<std::uint32_t>("dimension");
  if (dim < 2) throw FormatError(Kind::dimension_mismatch, dim_offset, "dimension " + std::to_string(dim) + " < 2");

  const std::uint64_t record_bytes = 8 + 8 + 8 + 4ull * dim;
  if (count > r.remaining() / record_bytes) {
    throw FormatError(Kind::truncated, r.pos(),
                      "truncated file: header declares " + std::to_string(count) + " records of dimension " +
                          std::to_string(dim));
  }

  Dataset d;
  d.dim = dim;
  d.records.reserve(count);
  std::unordered_set<std::uint64_t> ids;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t start = r.pos();
    GeoTaggedEmbedding rec;
    rec.id = r.get<std::uint64_t>("id");
    const double lat = r.get<double>("lat");
    const double lon = r.get<double>("lon");
    if (!(std::isfinite(lat) && std::isfinite(lon) && std::abs(lat) <= 90.0 && std::abs(lon) <= 180.0)) {
      throw FormatError(Kind::bad_value, start + 8, "record " + std::to_string(i) + " has an invalid coordinate");
    }
    rec.coord = GeoCoord(lat, lon);
    rec.features.resize(dim);
    for (auto& f : rec.features) {
      const std::size_t at = r.pos();
      f = r.get<float>("features");
      if (!std::isfinite(f)) throw FormatError(Kind::bad_value, at, "record " + std::to_string(i) + " non-finite feature");
    }
    if (!ids.insert(rec.id).second) {
      throw FormatError(Kind::bad_value, start, "duplicate id " + std::to_string(rec.id));
    }
    d.records.push_back(std::move(rec));
  }
  if (r.remaining() > 0) {
    const auto len = r.get<std::uint32_t>("name length");
    d.name = r.get_bytes(len, "name");
    if (r.remaining() > 0) throw FormatError(Kind::trailing_bytes, r.pos(), "unexpected trailing bytes");
  }
  return d;
}

void save_binary(const Dataset& d, const std::string& path) { write_file_bytes(path, encode_binary(d)); }

Dataset load_binary(const std::string& path) { return decode_binary(read_file_bytes(path)); }

// --------------------------------------------------------- CSV + block

void save_embedding_block(const std::vector<std::vector<float>>& rows, std::uint32_t dim, const std::string& path) {
  ByteWriter w;
  w.put<std::uint32_t>(dim);
  w.put<std::uint64_t>(rows.size());
  for (const auto& row : rows) {
    if (row.size() != dim) throw std::invalid_argument("embedding row has wrong dimension");
    for (float f : row) w.put<float>(f);
  }
  write_file_bytes(path, w.bytes());
}

std::vector<std::vector<float>> load_embedding_block(const std::string& path, std::uint32_t* dim_out) {
  using Kind = FormatError::Kind;
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes);
  const auto dim = r.get<std::uint32_t>("dimension");
  if (dim < 2) throw FormatError(Kind::dimension_mismatch, 0, "dimension " + std::to_string(dim) + " < 2");
  const auto count = r.get<std::uint64_t>("count");
  if (count > r.remaining() / (4ull * dim)) {
    throw FormatError(Kind::truncated, r.pos(), "truncated embedding block");
  }
  std::vector<std::vector<float>> rows(count, std::vector<float>(dim));
  for (auto& row : rows)
    for (auto& f : row) f = r.get<float>("embedding");
  if (r.remaining() > 0) throw FormatError(Kind::trailing_bytes, r.pos(), "unexpected trailing bytes in embedding block");
  if (dim_out) *dim_out = dim;
  return rows;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view s, std::size_t row, const char* column) {
  T value{};
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw std::invalid_argument("coords CSV row " + std::to_string(row) + ": cannot parse " + column + " '" +
                                std::string(s) + "'");
  }
  return value;
}

}  // namespace

Dataset load_csv(const std::string& coords_path, const std::string& embeddings_path) {
  std::ifstream in(coords_path);
  if (!in) throw IoError("cannot open for reading: " + coords_path);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("coords CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "id,lat,lon") throw std::invalid_argument("coords CSV header must be 'id,lat,lon', got '" + line + "'");

  struct Row {
    std::uint64_t id;
    double lat, lon;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t row = rows.size();
    const auto fields = split_fields(line);
    if (fields.size() != 3) {
      throw std::invalid_argument("coords CSV row " + std::to_string(row) + ": expected 3 fields");
    }
    Row r{parse_number<std::uint64_t>(fields[0], row, "id"), parse_number<double>(fields[1], row, "lat"),
          parse_number<double>(fields[2], row, "lon")};
    if (!(std::abs(r.lat) <= 90.0)) {
      throw std::out_of_range("coords CSV row " + std::to_string(row) + ": latitude out of range");
    }
    if (!(std::abs(r.lon) <= 180.0)) {
      throw std::out_of_range("coords CSV row " + std::to_string(row) + ": longitude out of range");
    }
    rows.push_back(r);
  }

  std::uint32_t dim = 0;
  auto embeddings = load_embedding_block(embeddings_path, &dim);
  if (embeddings.size() != rows.size()) {
    throw std::invalid_argument("row-count mismatch: " + std::to_string(rows.size()) + " coordinates vs " +
                                std::to_string(embeddings.size()) + " embeddings");
  }

  Dataset d;
  d.dim = dim;
  d.name = coords_path;
  d.records.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    d.records.push_back({rows[i].id, GeoCoord(rows[i].lat, rows[i].lon), std::move(embeddings[i])});
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------- synthesis

void SyntheticSpec::validate() const {
  if (n < 2) throw std::invalid_argument("synthetic spec: n must be >= 2");
  if (dim < 2) throw std::invalid_argument("synthetic spec: dim must be >= 2");
  if (latent_dim < 1) throw std::invalid_argument("synthetic spec: latent_dim must be >= 1");
  if (!(cov_range_km > 0.0)) throw std::invalid_argument("synthetic spec: range must be > 0");
  if (!(cov_sill >= 0.0) || !(cov_nugget >= 0.0)) {
    throw std::invalid_argument("synthetic spec: sill and nugget must be >= 0");
  }
  if (cov_sill == 0.0 && cov_nugget == 0.0) {
    throw std::invalid_argument("synthetic spec: zero sill and zero nugget give a degenerate (all-zero) field");
  }
  const Region& g = region;
  if (!(g.lat_min >= -90.0 && g.lat_min < g.lat_max && g.lat_max <= 90.0 && g.lon_min >= -180.0 &&
        g.lon_min < g.lon_max && g.lon_max <= 180.0)) {
    throw std::invalid_argument("synthetic spec: invalid region");
  }
}

LatentField generate_latent_field(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  const auto n = static_cast<Eigen::Index>(spec.n);

  // Area-uniform within the box: sin(lat) is uniform.
  const double deg = std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> u_sin(std::sin(spec.region.lat_min * deg), std::sin(spec.region.lat_max * deg));
  std::uniform_real_distribution<double> u_lon(spec.region.lon_min, spec.region.lon_max);
  LatentField out;
  out.coords.reserve(spec.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lat = std::clamp(std::asin(u_sin(rng)) / deg, spec.region.lat_min, spec.region.lat_max);
    out.coords.emplace_back(lat, u_lon(rng));
  }

  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    cov(j, j) = spec.cov_sill + spec.cov_nugget;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const double h = haversine_km(out.coords[i], out.coords[j]);
      cov(i, j) = cov(j, i) = spec.cov_sill * spherical_correlation(h / spec.cov_range_km);
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 1e-10;
  for (;; jitter *= 2.0) {
    if (jitter > 1e-6) throw std::runtime_error("covariance not factorizable after maximum jitter 1e-6");
    Eigen::MatrixXd k = cov;
    k.diagonal().array() += jitter;
    llt.compute(k);
    if (llt.info() == Eigen::Success) break;
  }
  out.jitter = jitter;

  std::normal_distribution<double> normal;
  Eigen::MatrixXd white(n, static_cast<Eigen::Index>(spec.latent_dim));
  for (Eigen::Index c = 0; c < white.cols(); ++c)
    for (Eigen::Index r = 0; r < n; ++r) white(r, c) = normal(rng);
  out.latents = llt.matrixL() * white;
  return out;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  LatentField field = generate_latent_field(spec);
  // The feature map gets its own stream so changing n leaves it unchanged.
  std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd map(static_cast<Eigen::Index>(spec.latent_dim), spec.dim);
  for (Eigen::Index c = 0; c < map.cols(); ++c)
    for (Eigen::Index r = 0; r < map.rows(); ++r) map(r, c) = normal(rng);

  const Eigen::MatrixXd features = field.latents * map;
  Dataset d;
  d.dim = spec.dim;
  d.name = "synthetic";
  d.records.reserve(spec.n);
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    if (!(norm > 0.0)) throw std::runtime_error("synthetic feature vector has zero norm");
    GeoTaggedEmbedding rec;
    rec.id = static_cast<std::uint64_t>(i);
    rec.coord = field.coords[static_cast<std::size_t>(i)];
    rec.features.resize(spec.dim);
    for (Eigen::Index k = 0; k < features.cols(); ++k) rec.features[k] = static_cast<float>(features(i, k) / norm);
    d.records.push_back(std::move(rec));
  }
  return d;
}

std::pair<Dataset, Dataset> split(const Dataset& d, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw std::invalid_argument("split fraction must be in (0, 1)");
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(d.size()) * val_fraction));
  const auto cut = order.begin() + static_cast<std::ptrdiff_t>(d.size() - n_val);
  std::sort(order.begin(), cut);
  std::sort(cut, order.end());

  Dataset train, val;
  train.dim = val.dim = d.dim;
  train.name = d.name + ":train";
  val.name = d.name + ":val";
  for (auto it = order.begin(); it != cut; ++it) train.records.push_back(d.records[*it]);
  for (auto it = cut; it != order.end(); ++it) val.records.push_back(d.records[*it]);
  return {std::move(train), std::move(val)};
}

}  // namespace geovar
