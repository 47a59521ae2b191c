#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geovar/geodesy.hpp"

namespace geovar {

struct EncoderConfig {
  std::uint32_t input_dim = 32;
  std::uint32_t hidden = 64;
  std::uint32_t embed_dim = 16;
  std::uint32_t scales = 9;   // RFF frequency scales 2^0 .. 2^8
  std::uint32_t fourier = 16; // cos/sin pairs per scale
  double tau = 0.07;
  double eep_scale = 1.0 / 2.7;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Two-layer perceptron: out = W2 gelu(W1 x + b1) + b2.
struct Mlp {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  Eigen::VectorXd b2;

  static Mlp zeros(Eigen::Index in, Eigen::Index hidden, Eigen::Index out);
  friend bool operator==(const Mlp&, const Mlp&) = default;
};

/// One Random Fourier Feature scale; the projection is frozen.
struct RffScale {
  double sigma = 1.0;
  Eigen::MatrixXd projection;  // fourier x 2, entries ~ N(0, sigma^2)
};

/// Trainable parameters. Gradients use the same type.
struct EncoderParams {
  Mlp image_head;
  std::vector<Mlp> location_heads;

  EncoderParams zeros_like() const;
  /// Flat views over every parameter block, in declaration order.
  std::vector<Eigen::Map<Eigen::VectorXd>> views();
  std::vector<Eigen::Map<const Eigen::VectorXd>> views() const;
  std::size_t parameter_count() const;
};

struct DualEncoder {
  EncoderConfig config;
  EncoderParams params;
  std::vector<RffScale> location_scales;

  /// Seeded random initialization (He-scaled weights, zero biases).
  static DualEncoder init(const EncoderConfig& config);
};

double gelu(double x);
double gelu_derivative(double x);

/// x / sqrt(|x|^2 + 1e-24), column-wise.
Eigen::MatrixXd l2_normalize_columns(const Eigen::MatrixXd& x);

struct MlpTape {
  Eigen::MatrixXd input;
  Eigen::MatrixXd pre;
  Eigen::MatrixXd act;
};

struct ImageTape {
  bool recorded = false;
  MlpTape head;
  Eigen::MatrixXd raw;
};

struct LocationTape {
  bool recorded = false;
  std::vector<MlpTape> heads;
  Eigen::MatrixXd raw;
};

/// Column-batched forward passes. Inputs and outputs are one column per
/// sample; outputs are unit-norm. Pass a tape to record activations.
Eigen::MatrixXd encode_images(const DualEncoder& e, const Eigen::MatrixXd& features, ImageTape* tape = nullptr);
Eigen::MatrixXd encode_locations(const DualEncoder& e, std::span<const GeoCoord> coords, LocationTape* tape = nullptr);

Eigen::VectorXd encode_image(const DualEncoder& e, const Eigen::VectorXd& features);
Eigen::VectorXd encode_location(const DualEncoder& e, const GeoCoord& g);

/// Equal Earth coordinates scaled by eep_scale, one column per coordinate.
Eigen::MatrixXd projected_inputs(const DualEncoder& e, std::span<const GeoCoord> coords);
/// [cos(2 pi B x); sin(2 pi B x)] for one scale.
Eigen::MatrixXd rff_features(const RffScale& scale, const Eigen::MatrixXd& projected);

/// Reverse-mode gradients. Each call adds into `grad`. Throws
/// std::logic_error when the tape holds no recorded forward pass.
void backward_images(const DualEncoder& e, const ImageTape& tape, const Eigen::MatrixXd& d_out, EncoderParams& grad);
void backward_locations(const DualEncoder& e, const LocationTape& tape, const Eigen::MatrixXd& d_out,
                        EncoderParams& grad);

// .gckpt: "GCKP", u16 version, u32 input/hidden/embed/scales/fourier,
// f64 tau, f64 eep_scale, u64 seed, then per scale (f64 sigma, fourier x 2
// f64 projection, column-major), then every trainable block in
// declaration order as f64. Little-endian throughout.
inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const DualEncoder& e);
DualEncoder decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const DualEncoder& e, const std::string& path);
DualEncoder load_checkpoint(const std::string& path);

}  // namespace geovar
