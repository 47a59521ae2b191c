#include "geovar/encoders.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "geovar/byte_io.hpp"

namespace geovar {

namespace {

constexpr double kNormEpsilon = 1e-24;

template <typename Params, typename MapT>
std::vector<MapT> collect_views(Params& p) {
  std::vector<MapT> out;
  auto add_mlp = [&out](auto& m) {
    out.emplace_back(m.w1.data(), m.w1.size());
    out.emplace_back(m.b1.data(), m.b1.size());
    out.emplace_back(m.w2.data(), m.w2.size());
    out.emplace_back(m.b2.data(), m.b2.size());
  };
  add_mlp(p.image_head);
  for (auto& h : p.location_heads) add_mlp(h);
  return out;
}

Eigen::MatrixXd mlp_forward(const Mlp& m, const Eigen::MatrixXd& x, MlpTape* tape) {
  Eigen::MatrixXd pre = m.w1 * x;
  pre.colwise() += m.b1;
  Eigen::MatrixXd act = pre.unaryExpr([](double v) { return gelu(v); });
  Eigen::MatrixXd out = m.w2 * act;
  out.colwise() += m.b2;
  if (tape) {
    tape->input = x;
    tape->pre = std::move(pre);
    tape->act = std::move(act);
  }
  return out;
}

void mlp_backward(const Mlp& m, const MlpTape& tape, const Eigen::MatrixXd& d_out, Mlp& grad) {
  grad.w2.noalias() += d_out * tape.act.transpose();
  grad.b2 += d_out.rowwise().sum();
  Eigen::MatrixXd d_pre = m.w2.transpose() * d_out;
  d_pre.array() *= tape.pre.unaryExpr([](double v) { return gelu_derivative(v); }).array();
  grad.w1.noalias() += d_pre * tape.input.transpose();
  grad.b1 += d_pre.rowwise().sum();
}

Eigen::MatrixXd normalize_backward(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& d_out) {
  Eigen::MatrixXd d_raw(raw.rows(), raw.cols());
  for (Eigen::Index j = 0; j < raw.cols(); ++j) {
    const double n2 = raw.col(j).squaredNorm() + kNormEpsilon;
    const double n = std::sqrt(n2);
    d_raw.col(j) = d_out.col(j) / n - raw.col(j) * (raw.col(j).dot(d_out.col(j)) / (n2 * n));
  }
  return d_raw;
}

void fill_normal(Eigen::MatrixXd& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
}

Mlp random_mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, std::mt19937_64& rng) {
  Mlp m = Mlp::zeros(in, hidden, out);
  fill_normal(m.w1, std::sqrt(2.0 / static_cast<double>(in)), rng);
  fill_normal(m.w2, std::sqrt(1.0 / static_cast<double>(hidden)), rng);
  return m;
}

}  // namespace

void EncoderConfig::validate() const {
  if (input_dim < 1 || hidden < 1 || embed_dim < 1 || scales < 1 || fourier < 1) {
    throw std::invalid_argument("encoder config: all dimensions must be positive");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("encoder config: tau must be positive");
  if (!(eep_scale > 0.0)) throw std::invalid_argument("encoder config: eep_scale must be positive");
}

Mlp Mlp::zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out) {
  return {Eigen::MatrixXd::Zero(hidden, in), Eigen::VectorXd::Zero(hidden), Eigen::MatrixXd::Zero(out, hidden),
          Eigen::VectorXd::Zero(out)};
}

EncoderParams EncoderParams::zeros_like() const {
  EncoderParams z;
  auto zero = [](const Mlp& m) { return Mlp::zeros(m.w1.cols(), m.w1.rows(), m.w2.rows()); };
  z.image_head = zero(image_head);
  for (const auto& h : location_heads) z.location_heads.push_back(zero(h));
  return z;
}

std::vector<Eigen::Map<Eigen::VectorXd>> EncoderParams::views() {
  return collect_views<EncoderParams, Eigen::Map<Eigen::VectorXd>>(*this);
}

std::vector<Eigen::Map<const Eigen::VectorXd>> EncoderParams::views() const {
  return collect_views<const EncoderParams, Eigen::Map<const Eigen::VectorXd>>(*this);
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& v : views()) n += static_cast<std::size_t>(v.size());
  return n;
}

DualEncoder DualEncoder::init(const EncoderConfig& config) {
  config.validate();
  DualEncoder e;
  e.config = config;
  std::mt19937_64 rng(config.seed);
  for (std::uint32_t k = 0; k < config.scales; ++k) {
    RffScale s;
    s.sigma = config.scales == 1 ? 1.0 : std::exp2(8.0 * k / (config.scales - 1));
    s.projection.resize(config.fourier, 2);
    fill_normal(s.projection, s.sigma, rng);
    e.location_scales.push_back(std::move(s));
  }
  e.params.image_head = random_mlp(config.input_dim, config.hidden, config.embed_dim, rng);
  for (std::uint32_t k = 0; k < config.scales; ++k) {
    e.params.location_heads.push_back(random_mlp(2 * config.fourier, config.hidden, config.embed_dim, rng));
  }
  return e;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
  return cdf + x * pdf;
}

Eigen::MatrixXd l2_normalize_columns(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) out.col(j) = x.col(j) / std::sqrt(x.col(j).squaredNorm() + kNormEpsilon);
  return out;
}

Eigen::MatrixXd encode_images(const DualEncoder& e, const Eigen::MatrixXd& features, ImageTape* tape) {
  if (features.rows() != static_cast<Eigen::Index>(e.config.input_dim)) {
    throw std::invalid_argument("encode_images: expected input dimension " + std::to_string(e.config.input_dim) +
                                ", got " + std::to_string(features.rows()));
  }
  Eigen::MatrixXd raw = mlp_forward(e.params.image_head, features, tape ? &tape->head : nullptr);
  Eigen::MatrixXd out = l2_normalize_columns(raw);
  if (tape) {
    tape->raw = std::move(raw);
    tape->recorded = true;
  }
  return out;
}

Eigen::MatrixXd projected_inputs(const DualEncoder& e, std::span<const GeoCoord> coords) {
  Eigen::MatrixXd x(2, static_cast<Eigen::Index>(coords.size()));
  for (std::size_t j = 0; j < coords.size(); ++j) {
    const auto p = equal_earth_project(coords[j]);
    x(0, static_cast<Eigen::Index>(j)) = p.x * e.config.eep_scale;
    x(1, static_cast<Eigen::Index>(j)) = p.y * e.config.eep_scale;
  }
  return x;
}

Eigen::MatrixXd rff_features(const RffScale& scale, const Eigen::MatrixXd& projected) {
  const Eigen::MatrixXd z = (2.0 * std::numbers::pi) * (scale.projection * projected);
  const Eigen::Index f = z.rows();
  Eigen::MatrixXd out(2 * f, z.cols());
  out.topRows(f) = z.array().cos().matrix();
  out.bottomRows(f) = z.array().sin().matrix();
  return out;
}

Eigen::MatrixXd encode_locations(const DualEncoder& e, std::span<const GeoCoord> coords, LocationTape* tape) {
  const Eigen::MatrixXd x = projected_inputs(e, coords);
  Eigen::MatrixXd raw = Eigen::MatrixXd::Zero(e.config.embed_dim, x.cols());
  if (tape) tape->heads.assign(e.location_scales.size(), MlpTape{});
  for (std::size_t k = 0; k < e.location_scales.size(); ++k) {
    raw += mlp_forward(e.params.location_heads[k], rff_features(e.location_scales[k], x), tape ? &tape->heads[k] : nullptr);
  }
  Eigen::MatrixXd out = l2_normalize_columns(raw);
  if (tape) {
    tape->raw = std::move(raw);
    tape->recorded = true;
  }
  return out;
}

Eigen::VectorXd encode_image(const DualEncoder& e, const Eigen::VectorXd& features) {
  return encode_images(e, features).col(0);
}

Eigen::VectorXd encode_location(const DualEncoder& e, const GeoCoord& g) {
  return encode_locations(e, std::span<const GeoCoord>(&g, 1)).col(0);
}

void backward_images(const DualEncoder& e, const ImageTape& tape, const Eigen::MatrixXd& d_out, EncoderParams& grad) {
  if (!tape.recorded) throw std::logic_error("backward_images: no recorded forward pass");
  if (d_out.rows() != tape.raw.rows() || d_out.cols() != tape.raw.cols()) {
    throw std::invalid_argument("backward_images: gradient shape does not match the recorded outputs");
  }
  mlp_backward(e.params.image_head, tape.head, normalize_backward(tape.raw, d_out), grad.image_head);
}

void backward_locations(const DualEncoder& e, const LocationTape& tape, const Eigen::MatrixXd& d_out,
                        EncoderParams& grad) {
  if (!tape.recorded) throw std::logic_error("backward_locations: no recorded forward pass");
  if (d_out.rows() != tape.raw.rows() || d_out.cols() != tape.raw.cols()) {
    throw std::invalid_argument("backward_locations: gradient shape does not match the recorded outputs");
  }
  const Eigen::MatrixXd d_raw = normalize_backward(tape.raw, d_out);
  // The sum over scales fans the same gradient out to every head.
  for (std::size_t k = 0; k < tape.heads.size(); ++k) {
    mlp_backward(e.params.location_heads[k], tape.heads[k], d_raw, grad.location_heads[k]);
  }
}

// ------------------------------------------------------------ checkpoint

std::vector<std::uint8_t> encode_checkpoint(const DualEncoder& e) {
  ByteWriter w;
  w.put_bytes("GCKP");
  w.put<std::uint16_t>(kCheckpointVersion);
  const auto& c = e.config;
  w.put<std::uint32_t>(c.input_dim);
  w.put<std::uint32_t>(c.hidden);
  w.put<std::uint32_t>(c.embed_dim);
  w.put<std::uint32_t>(c.scales);
  w.put<std::uint32_t>(c.fourier);
  w.put<double>(c.tau);
  w.put<double>(c.eep_scale);
  w.put<std::uint64_t>(c.seed);
  for (const auto& s : e.location_scales) {
    w.put<double>(s.sigma);
    for (Eigen::Index i = 0; i < s.projection.size(); ++i) w.put<double>(s.projection.data()[i]);
  }
  for (const auto& v : e.params.views())
    for (Eigen::Index i = 0; i < v.size(); ++i) w.put<double>(v[i]);
  return w.bytes();
}

DualEncoder decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using Kind = FormatError::Kind;
  ByteReader r(bytes);
  if (r.remaining() < 4 || r.get_bytes(4, "magic") != "GCKP") throw FormatError(Kind::bad_magic, 0, "bad magic");
  const auto version = r.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(Kind::bad_version, 4, "unsupported checkpoint version " + std::to_string(version));
  }
  EncoderConfig c;
  c.input_dim = r.get<std::uint32_t>("input_dim");
  c.hidden = r.get<std::uint32_t>("hidden");
  c.embed_dim = r.get<std::uint32_t>("embed_dim");
  c.scales = r.get<std::uint32_t>("scales");
  c.fourier = r.get<std::uint32_t>("fourier");
  c.tau = r.get<double>("tau");
  c.eep_scale = r.get<double>("eep_scale");
  c.seed = r.get<std::uint64_t>("seed");
  try {
    c.validate();
  } catch (const std::invalid_argument& ex) {
    throw FormatError(Kind::dimension_mismatch, 6, ex.what());
  }
  // Guard against absurd dimensions before allocating.
  const std::uint64_t per_head = 2ull * c.fourier * c.hidden + c.hidden + 1ull * c.hidden * c.embed_dim + c.embed_dim;
  const std::uint64_t expected =
      8ull * (c.scales * (1ull + 2ull * c.fourier) + 1ull * c.input_dim * c.hidden + c.hidden +
              1ull * c.hidden * c.embed_dim + c.embed_dim + c.scales * per_head);
  if (expected != r.remaining()) {
    throw FormatError(expected > r.remaining() ? Kind::truncated : Kind::trailing_bytes, r.pos(),
                      "checkpoint payload is " + std::to_string(r.remaining()) + " bytes, dimensions imply " +
                          std::to_string(expected));
  }

  DualEncoder e;
  e.config = c;
  for (std::uint32_t k = 0; k < c.scales; ++k) {
    RffScale s;
    s.sigma = r.get<double>("sigma");
    s.projection.resize(c.fourier, 2);
    for (Eigen::Index i = 0; i < s.projection.size(); ++i) s.projection.data()[i] = r.get<double>("projection");
    e.location_scales.push_back(std::move(s));
  }
  e.params.image_head = Mlp::zeros(c.input_dim, c.hidden, c.embed_dim);
  for (std::uint32_t k = 0; k < c.scales; ++k) e.params.location_heads.push_back(Mlp::zeros(2 * c.fourier, c.hidden, c.embed_dim));
  for (auto& v : e.params.views())
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = r.get<double>("parameters");
  return e;
}

void save_checkpoint(const DualEncoder& e, const std::string& path) { write_file_bytes(path, encode_checkpoint(e)); }

DualEncoder load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace geovar
