#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include "geovar/byte_io.hpp"
#include "geovar/dataset.hpp"
#include "geovar/geodesy.hpp"

using namespace geovar;
namespace fs = std::filesystem;

namespace {

Dataset tiny() {
  Dataset d;
  d.dim = 3;
  d.name = "tiny";
  d.records = {{7, {10.0, 20.0}, {1.0f, 0.0f, -0.5f}},
               {3, {-45.5, 179.0}, {0.25f, 2.0f, 3.0f}},
               {11, {0.0, -120.0}, {1e-20f, -7.0f, 0.0f}}};
  return d;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("geovar_test_" + std::to_string(::getpid()) + "_" + name);
}

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST(Gemb, RoundTripIsBitExact) {
  const Dataset d = tiny();
  const auto bytes = encode_binary(d);
  const Dataset back = decode_binary(bytes);
  ASSERT_EQ(back.size(), d.size());
  EXPECT_EQ(back.dim, d.dim);
  EXPECT_EQ(back.name, "tiny");
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back.records[i].id, d.records[i].id);
    EXPECT_EQ(back.records[i].coord, d.records[i].coord);
    EXPECT_EQ(back.records[i].features, d.records[i].features);
  }
  EXPECT_EQ(encode_binary(back), bytes);
}

TEST(Gemb, SizeMatchesLayout) {
  const Dataset d = tiny();
  EXPECT_EQ(encode_binary(d).size(), kGembHeaderBytes + 3 * (8 + 8 + 8 + 4 * 3) + 4 + 4);
}

TEST(Gemb, HeaderIsLittleEndian) {
  const auto bytes = encode_binary(tiny());
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GEMB");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[6], 3);  // count
  EXPECT_EQ(bytes[14], 3);  // dim
}

TEST(Gemb, NameBlockIsOptional) {
  auto bytes = encode_binary(tiny());
  bytes.resize(bytes.size() - 8);
  const Dataset d = decode_binary(bytes);
  EXPECT_EQ(d.size(), 3u);
  EXPECT_EQ(d.name, "");
}

TEST(Gemb, BadMagicAndVersion) {
  auto bytes = encode_binary(tiny());
  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_binary(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::bad_magic);
  }
  bad = bytes;
  bad[4] = 9;
  try {
    decode_binary(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::bad_version);
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(Gemb, TruncationIsReportedNotCrashing) {
  const auto bytes = encode_binary(tiny());
  for (std::size_t cut = 0; cut < kGembHeaderBytes + 2 * 36; ++cut) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + cut);
    EXPECT_THROW(decode_binary(part), FormatError) << "cut at " << cut;
  }
}

TEST(Gemb, TruncatedErrorNamesOffset) {
  auto bytes = encode_binary(tiny());
  bytes.resize(kGembHeaderBytes + 36 + 10);
  try {
    decode_binary(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::truncated);
    EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
  }
}

TEST(Gemb, RejectsNonFiniteFeatureAndTrailingBytes) {
  auto bytes = encode_binary(tiny());
  auto bad = bytes;
  const float nan = std::nanf("");
  std::memcpy(&bad[kGembHeaderBytes + 24], &nan, 4);
  EXPECT_THROW(decode_binary(bad), FormatError);
  bad = bytes;
  bad.push_back(0);
  try {
    decode_binary(bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatError::Kind::trailing_bytes);
  }
}

TEST(Gemb, FileRoundTripAndMissingFile) {
  const auto p = temp_path("rt.gemb");
  save_binary(tiny(), p.string());
  EXPECT_EQ(load_binary(p.string()).records[1].id, 3u);
  fs::remove(p);
  EXPECT_THROW(load_binary(p.string()), IoError);
}

TEST(Dataset, ValidateCatchesBadRecords) {
  Dataset d = tiny();
  d.records[1].features.pop_back();
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d = tiny();
  d.records[2].id = 7;
  EXPECT_THROW(d.validate(), std::invalid_argument);
  d = tiny();
  d.records[0].features[0] = INFINITY;
  EXPECT_THROW(d.validate(), std::invalid_argument);
}

TEST(Csv, LoadsCoordinatesWithEmbeddingBlock) {
  const auto coords = temp_path("c.csv"), emb = temp_path("e.bin");
  write_text(coords, "id,lat,lon\n5,1.5,-2.25\n9,-80,179.5\n");
  save_embedding_block({{1, 2}, {3, 4}}, 2, emb.string());
  const Dataset d = load_csv(coords.string(), emb.string());
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.records[0].id, 5u);
  EXPECT_EQ(d.records[1].coord, GeoCoord(-80, 179.5));
  EXPECT_EQ(d.records[1].features, (std::vector<float>{3, 4}));
  fs::remove(coords);
  fs::remove(emb);
}

TEST(Csv, OutOfRangeLatitudeNamesRow) {
  const auto coords = temp_path("c2.csv"), emb = temp_path("e2.bin");
  write_text(coords, "id,lat,lon\n0,0,0\n1,91.0,0\n");
  save_embedding_block({{1, 2}, {3, 4}}, 2, emb.string());
  try {
    load_csv(coords.string(), emb.string());
    FAIL();
  } catch (const std::out_of_range& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
  fs::remove(coords);
  fs::remove(emb);
}

TEST(Csv, RowCountMismatch) {
  const auto coords = temp_path("c3.csv"), emb = temp_path("e3.bin");
  write_text(coords, "id,lat,lon\n0,0,0\n1,1,1\n2,2,2\n");
  save_embedding_block({{1, 2}, {3, 4}}, 2, emb.string());
  try {
    load_csv(coords.string(), emb.string());
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("row-count mismatch"), std::string::npos);
  }
  fs::remove(coords);
  fs::remove(emb);
}

TEST(Csv, BadHeaderAndGarbage) {
  const auto coords = temp_path("c4.csv"), emb = temp_path("e4.bin");
  save_embedding_block({{1, 2}}, 2, emb.string());
  write_text(coords, "lat,lon,id\n0,0,0\n");
  EXPECT_THROW(load_csv(coords.string(), emb.string()), std::invalid_argument);
  write_text(coords, "id,lat,lon\n0,abc,0\n");
  EXPECT_THROW(load_csv(coords.string(), emb.string()), std::invalid_argument);
  fs::remove(coords);
  fs::remove(emb);
}

TEST(Synthetic, DeterministicPerSeed) {
  SyntheticSpec s;
  s.n = 300;
  const auto a = generate_synthetic(s), b = generate_synthetic(s);
  EXPECT_EQ(encode_binary(a), encode_binary(b));
  s.seed = 1;
  EXPECT_NE(encode_binary(generate_synthetic(s)), encode_binary(a));
}

TEST(Synthetic, ShapeRegionAndUnitRows) {
  SyntheticSpec s;
  s.n = 400;
  s.dim = 12;
  s.region = {-10, 5, 100, 130};
  const auto d = generate_synthetic(s);
  ASSERT_EQ(d.size(), 400u);
  EXPECT_EQ(d.dim, 12u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& r = d.records[i];
    EXPECT_EQ(r.id, i);
    EXPECT_GE(r.coord.lat(), -10.0);
    EXPECT_LE(r.coord.lat(), 5.0);
    EXPECT_GE(r.coord.lon(), 100.0);
    EXPECT_LE(r.coord.lon(), 130.0);
    double n2 = 0;
    for (float f : r.features) n2 += double(f) * f;
    EXPECT_NEAR(n2, 1.0, 1e-6);
  }
}

TEST(Synthetic, LatentCovarianceFollowsModel) {
  // Nearby pairs correlate, pairs beyond the range do not.
  SyntheticSpec s;
  s.n = 800;
  s.latent_dim = 32;
  s.cov_range_km = 1500;
  s.cov_nugget = 0.0;
  const auto f = generate_latent_field(s);
  double near_sum = 0, far_sum = 0;
  int near_n = 0, far_n = 0;
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = i + 1; j < s.n; ++j) {
      const double h = haversine_km(f.coords[i], f.coords[j]);
      const double c = f.latents.row(i).dot(f.latents.row(j)) / double(s.latent_dim);
      if (h < 150) near_sum += c, ++near_n;
      if (h > 1600) far_sum += c, ++far_n;
    }
  }
  ASSERT_GT(near_n, 50);
  EXPECT_NEAR(near_sum / near_n, spherical_correlation(75.0 / 1500.0), 0.15);
  EXPECT_NEAR(far_sum / far_n, 0.0, 0.05);
}

TEST(Synthetic, RejectsDegenerateSpecs) {
  SyntheticSpec s;
  s.cov_sill = 0;
  s.cov_nugget = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.n = 1;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.region.lat_min = 40;
  s.region.lat_max = 30;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Split, PartitionsDeterministically) {
  SyntheticSpec s;
  s.n = 101;
  const auto d = generate_synthetic(s);
  const auto [tr, va] = split(d, 0.2, 4);
  EXPECT_EQ(va.size(), 20u);
  EXPECT_EQ(tr.size(), 81u);
  std::set<std::uint64_t> ids;
  for (const auto& r : tr.records) ids.insert(r.id);
  for (const auto& r : va.records) EXPECT_TRUE(ids.insert(r.id).second);
  EXPECT_EQ(ids.size(), 101u);
  for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_LT(tr.records[i - 1].id, tr.records[i].id);
  const auto again = split(d, 0.2, 4);
  EXPECT_EQ(encode_binary(again.second), encode_binary(va));
  EXPECT_NE(encode_binary(split(d, 0.2, 5).second), encode_binary(va));
  EXPECT_THROW(split(d, 0.0, 0), std::invalid_argument);
  EXPECT_THROW(split(d, 1.0, 0), std::invalid_argument);
}
