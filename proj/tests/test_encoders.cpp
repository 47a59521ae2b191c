#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "geovar/byte_io.hpp"
#include "geovar/encoders.hpp"
#include "oracles.hpp"

using namespace geovar;

namespace {

EncoderConfig small_config() {
  EncoderConfig c;
  c.input_dim = 8;
  c.hidden = 6;
  c.embed_dim = 4;
  c.scales = 2;
  c.fourier = 3;
  c.seed = 5;
  return c;
}

std::vector<GeoCoord> some_coords(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> lat(-60, 60), lon(-180, 180);
  std::vector<GeoCoord> out;
  for (int i = 0; i < n; ++i) out.emplace_back(lat(rng), lon(rng));
  return out;
}

Eigen::MatrixXd random_matrix(int r, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

double max_relative_gradient_error(DualEncoder& e, const std::function<double()>& f, const EncoderParams& analytic) {
  auto views = e.params.views();
  const auto grads = analytic.views();
  double worst = 0.0;
  for (std::size_t k = 0; k < views.size(); ++k) {
    const Eigen::VectorXd fd = oracle::central_differences(views[k], f);
    for (Eigen::Index i = 0; i < fd.size(); ++i) worst = std::max(worst, oracle::relative_error(fd[i], grads[k][i]));
  }
  return worst;
}

}  // namespace

TEST(Gelu, ValuesAndDerivative) {
  EXPECT_EQ(gelu(0.0), 0.0);
  EXPECT_NEAR(gelu(1.0), 0.8413447460685429, 1e-15);
  EXPECT_NEAR(gelu(-1.0), -0.15865525393145707, 1e-15);
  for (double x = -5; x <= 5; x += 0.37) {
    EXPECT_NEAR(gelu_derivative(x), (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6, 1e-8);
  }
}

TEST(Normalize, UnitColumns) {
  const auto m = l2_normalize_columns(random_matrix(5, 7, 1));
  for (int j = 0; j < 7; ++j) EXPECT_NEAR(m.col(j).norm(), 1.0, 1e-15);
  EXPECT_TRUE(l2_normalize_columns(Eigen::MatrixXd::Zero(3, 1)).allFinite());
}

TEST(Init, SeededAndShaped) {
  const auto c = small_config();
  const auto a = DualEncoder::init(c), b = DualEncoder::init(c);
  EXPECT_EQ(a.params.image_head, b.params.image_head);
  EXPECT_EQ(a.params.image_head.w1.rows(), 6);
  EXPECT_EQ(a.params.image_head.w1.cols(), 8);
  ASSERT_EQ(a.location_scales.size(), 2u);
  EXPECT_EQ(a.location_scales[0].projection.rows(), 3);
  EXPECT_EQ(a.location_scales[0].sigma, 1.0);
  EXPECT_EQ(a.location_scales[1].sigma, 256.0);
  EXPECT_EQ(a.params.location_heads[1].w1.cols(), 6);
  auto c2 = c;
  c2.seed = 6;
  EXPECT_FALSE(DualEncoder::init(c2).params.image_head == a.params.image_head);
  EXPECT_EQ(a.params.parameter_count(), std::size_t((6 * 8 + 6 + 4 * 6 + 4) + 2 * (6 * 6 + 6 + 4 * 6 + 4)));
}

TEST(Init, NineScalesAreDyadic) {
  const auto e = DualEncoder::init(EncoderConfig{});
  ASSERT_EQ(e.location_scales.size(), 9u);
  for (int k = 0; k < 9; ++k) EXPECT_EQ(e.location_scales[k].sigma, std::ldexp(1.0, k));
}

TEST(Forward, UnitNormDeterministicOutputs) {
  const auto e = DualEncoder::init(small_config());
  const auto coords = some_coords(10, 1);
  const auto feats = random_matrix(8, 10, 2);
  const auto img = encode_images(e, feats), loc = encode_locations(e, coords);
  for (int j = 0; j < 10; ++j) {
    EXPECT_NEAR(img.col(j).norm(), 1.0, 1e-12);
    EXPECT_NEAR(loc.col(j).norm(), 1.0, 1e-12);
  }
  EXPECT_EQ(img, encode_images(e, feats));
  EXPECT_EQ(loc, encode_locations(e, coords));
  EXPECT_TRUE(img.col(3).isApprox(encode_image(e, feats.col(3)), 1e-14));
  EXPECT_TRUE(loc.col(4).isApprox(encode_location(e, coords[4]), 1e-14));
}

TEST(Forward, LocationIsNormalizedSumOfHeads) {
  const auto e = DualEncoder::init(small_config());
  const auto coords = some_coords(5, 3);
  const auto x = projected_inputs(e, coords);
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(4, 5);
  for (std::size_t k = 0; k < e.location_scales.size(); ++k) {
    const auto& h = e.params.location_heads[k];
    const Eigen::MatrixXd r = rff_features(e.location_scales[k], x);
    Eigen::MatrixXd pre = (h.w1 * r).colwise() + h.b1;
    sum += (h.w2 * pre.unaryExpr([](double v) { return gelu(v); })).colwise() + h.b2;
  }
  for (int j = 0; j < 5; ++j) EXPECT_TRUE(encode_locations(e, coords).col(j).isApprox(sum.col(j).normalized(), 1e-12));
}

TEST(Forward, ProjectedInputsAndFeatures) {
  const auto e = DualEncoder::init(small_config());
  const std::vector<GeoCoord> g{{45, 90}};
  const auto x = projected_inputs(e, g);
  EXPECT_NEAR(x(0, 0), 1.15985449910298353 / 2.7, 1e-12);
  EXPECT_NEAR(x(1, 0), 0.860231085522010481 / 2.7, 1e-12);
  const auto f = rff_features(e.location_scales[0], x);
  ASSERT_EQ(f.rows(), 6);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(f(i, 0) * f(i, 0) + f(i + 3, 0) * f(i + 3, 0), 1.0, 1e-14);
  const double arg = 2 * std::numbers::pi * e.location_scales[0].projection.row(1).dot(x.col(0));
  EXPECT_NEAR(f(1, 0), std::cos(arg), 1e-14);
  EXPECT_NEAR(f(4, 0), std::sin(arg), 1e-14);
}

TEST(Forward, RejectsWrongInputDimension) {
  const auto e = DualEncoder::init(small_config());
  EXPECT_THROW(encode_images(e, random_matrix(7, 2, 0)), std::invalid_argument);
}

TEST(Backward, ImageHeadMatchesFiniteDifferences) {
  auto e = DualEncoder::init(small_config());
  const auto feats = random_matrix(8, 4, 7);
  const auto probe = random_matrix(4, 4, 8);
  ImageTape tape;
  encode_images(e, feats, &tape);
  EncoderParams grad = e.params.zeros_like();
  backward_images(e, tape, probe, grad);
  auto f = [&] { return encode_images(e, feats).cwiseProduct(probe).sum(); };
  EXPECT_LE(max_relative_gradient_error(e, f, grad), 1e-5);
}

TEST(Backward, LocationHeadsMatchFiniteDifferences) {
  auto e = DualEncoder::init(small_config());
  const auto coords = some_coords(4, 9);
  const auto probe = random_matrix(4, 4, 10);
  LocationTape tape;
  encode_locations(e, coords, &tape);
  EncoderParams grad = e.params.zeros_like();
  backward_locations(e, tape, probe, grad);
  auto f = [&] { return encode_locations(e, coords).cwiseProduct(probe).sum(); };
  EXPECT_LE(max_relative_gradient_error(e, f, grad), 1e-5);
}

TEST(Backward, AccumulatesAndRequiresTape) {
  auto e = DualEncoder::init(small_config());
  const auto feats = random_matrix(8, 3, 1);
  const auto probe = random_matrix(4, 3, 2);
  ImageTape tape;
  encode_images(e, feats, &tape);
  EncoderParams once = e.params.zeros_like(), twice = e.params.zeros_like();
  backward_images(e, tape, probe, once);
  backward_images(e, tape, probe, twice);
  backward_images(e, tape, probe, twice);
  EXPECT_TRUE(twice.image_head.w1.isApprox(2 * once.image_head.w1));
  EXPECT_EQ(once.location_heads[0].w1.norm(), 0.0);
  ImageTape empty;
  EXPECT_THROW(backward_images(e, empty, probe, once), std::logic_error);
  LocationTape empty_loc;
  EXPECT_THROW(backward_locations(e, empty_loc, probe, once), std::logic_error);
}

TEST(Checkpoint, RoundTripIsExact) {
  auto c = small_config();
  c.tau = 0.05;
  const auto e = DualEncoder::init(c);
  const auto bytes = encode_checkpoint(e);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "GCKP");
  const auto back = decode_checkpoint(bytes);
  EXPECT_EQ(back.config.tau, 0.05);
  EXPECT_EQ(back.config.seed, 5u);
  EXPECT_EQ(back.params.image_head, e.params.image_head);
  EXPECT_EQ(back.params.location_heads, e.params.location_heads);
  EXPECT_EQ(back.location_scales[1].projection, e.location_scales[1].projection);
  EXPECT_EQ(encode_checkpoint(back), bytes);
  const auto coords = some_coords(3, 0);
  EXPECT_EQ(encode_locations(back, coords), encode_locations(e, coords));
}

TEST(Checkpoint, CorruptInputIsRejected) {
  const auto bytes = encode_checkpoint(DualEncoder::init(small_config()));
  auto bad = bytes;
  bad[1] = 'X';
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{30}, bytes.size() - 1}) {
    std::vector<std::uint8_t> part(bytes.begin(), bytes.begin() + cut);
    EXPECT_THROW(decode_checkpoint(part), FormatError);
  }
  bad = bytes;
  bad.push_back(1);
  EXPECT_THROW(decode_checkpoint(bad), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/x.gckpt"), IoError);
}
