#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "geovar/dataset.hpp"
#include "geovar/encoders.hpp"
#include "geovar/evalretrieval.hpp"
#include "geovar/reweighting.hpp"

namespace geovar {

// ------------------------------------------------------------------ losses

/// -log softmax of the positive logit v.l_pos/tau against v.l_neg/tau for
/// each column of `negatives`. Max-subtracted.
double info_nce(const Eigen::VectorXd& v, const Eigen::VectorXd& l_pos, const Eigen::MatrixXd& negatives, double tau);

/// As info_nce, with negative j's logit multiplied by weights[j] inside the
/// exponent: exp(w_j * v.l_j / tau).
double reweighted_info_nce(const Eigen::VectorXd& v, const Eigen::VectorXd& l_pos, const Eigen::MatrixXd& negatives,
                           std::span<const double> weights, double tau);

struct BatchLoss {
  double loss = 0.0;           // mean over anchors
  Eigen::MatrixXd d_images;    // d loss / d image embeddings
  Eigen::MatrixXd d_locations; // d loss / d location embeddings
};

/// Anchor i (column i of `images`) is positive with column i of
/// `locations`; every other location column is a negative carrying
/// weight(i, j). Weights are constants for the gradient.
BatchLoss contrastive_loss(const Eigen::MatrixXd& images, const Eigen::MatrixXd& locations,
                           const Eigen::MatrixXd& weights, double tau);

// ------------------------------------------------------------------ state

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t epochs = 30;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t queue_capacity = 256;
  std::size_t augmentations = 2;
  double tau = 0.07;
  std::optional<ReweightConfig> reweight;  // absent: plain InfoNCE
  double augment_noise_sigma = 0.01;
  bool force_unit_weights = false;  // reweighting path with every weight = 1
  std::size_t checkpoint_every = 0;
  std::string checkpoint_prefix;

  void validate() const;
};

/// FIFO of past samples: frozen features and coordinates. Their location
/// embeddings are recomputed with current parameters every step.
class NegativeQueue {
 public:
  explicit NegativeQueue(std::size_t capacity = 0) : capacity_(capacity) {}

  void push(const Eigen::VectorXd& features, const GeoCoord& coord);
  std::size_t size() const { return coords_.size(); }
  std::size_t capacity() const { return capacity_; }
  /// Oldest first.
  const std::deque<GeoCoord>& coords() const { return coords_; }
  const std::deque<Eigen::VectorXd>& features() const { return features_; }

 private:
  std::size_t capacity_;
  std::deque<Eigen::VectorXd> features_;
  std::deque<GeoCoord> coords_;
};

struct AdamState {
  std::vector<Eigen::VectorXd> m;
  std::vector<Eigen::VectorXd> v;
  std::uint64_t t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void adam_update(EncoderParams& params, const EncoderParams& grad, AdamState& state, double learning_rate);

struct TrainState {
  TrainConfig config;
  DualEncoder encoder;
  NegativeQueue queue;
  AdamState adam;
  std::mt19937_64 rng;
  std::size_t step = 0;

  TrainState(TrainConfig cfg, DualEncoder enc);
};

struct StepReport {
  std::size_t step = 0;
  double loss = 0.0;
  double mean_weight = 1.0;
  double max_weight = 1.0;
  std::size_t negatives_per_anchor = 0;
  std::size_t hard_count = 0;
  std::size_t false_count = 0;

  friend bool operator==(const StepReport&, const StepReport&) = default;
};

/// Loss and parameter gradient for one batch. `noise_rng` null: no
/// augmentation (one un-noised view). Uses the state's queue as extra negatives.
struct LossEvaluation {
  double loss = 0.0;
  EncoderParams grad;
  StepReport stats;
};
LossEvaluation batch_loss_and_gradient(const TrainState& state, const Dataset& data, std::span<const std::size_t> batch,
                                       std::mt19937_64* noise_rng);

/// One optimizer step on `batch` (indices into `data`), then enqueue it.
StepReport train_step(TrainState& state, const Dataset& data, std::span<const std::size_t> batch);

struct EpochReport {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_weight = 1.0;
  std::size_t hard_count = 0;
  std::size_t false_count = 0;
  std::optional<EvalReport> validation;
};

inline constexpr const char* kEpochLogHeader =
    "epoch,mean_loss,mean_weight,hard_count,false_count,val_acc25,val_acc200,val_acc750";
std::string epoch_csv_row(const EpochReport& r);

struct TrainResult {
  DualEncoder encoder;
  std::vector<EpochReport> epochs;
};

/// Runs `epochs` passes of shuffled mini-batches. When `validation` is
/// given, each epoch is scored on it with the training coordinates as the
/// gallery. `on_epoch` sees every report as soon as it exists.
TrainResult train(const TrainConfig& cfg, const Dataset& train_set, DualEncoder encoder,
                  const Dataset* validation = nullptr,
                  const std::function<void(const EpochReport&)>& on_epoch = {});

/// Encodes the query features and scores them against the gallery.
EvalReport evaluate_dataset(const DualEncoder& encoder, const GpsGallery& gallery, const Dataset& queries);

}  // namespace geovar
