#include "geovar/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace geovar {

namespace {

double log_sum_exp(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  return m + std::log((z.array() - m).exp().sum());
}

void check_embedding_args(const Eigen::VectorXd& v, const Eigen::VectorXd& l_pos, const Eigen::MatrixXd& negatives,
                          double tau) {
  if (v.size() == 0 || l_pos.size() == 0) throw std::invalid_argument("info_nce: empty embedding");
  if (v.size() != l_pos.size() || (negatives.cols() > 0 && negatives.rows() != v.size())) {
    throw std::invalid_argument("info_nce: embedding dimension mismatch");
  }
  if (!(tau > 0.0)) throw std::invalid_argument("info_nce: tau must be positive");
}

}  // namespace

double info_nce(const Eigen::VectorXd& v, const Eigen::VectorXd& l_pos, const Eigen::MatrixXd& negatives, double tau) {
  check_embedding_args(v, l_pos, negatives, tau);
  Eigen::VectorXd z(1 + negatives.cols());
  z[0] = v.dot(l_pos) / tau;
  for (Eigen::Index j = 0; j < negatives.cols(); ++j) z[1 + j] = v.dot(negatives.col(j)) / tau;
  return log_sum_exp(z) - z[0];
}

double reweighted_info_nce(const Eigen::VectorXd& v, const Eigen::VectorXd& l_pos, const Eigen::MatrixXd& negatives,
                           std::span<const double> weights, double tau) {
  check_embedding_args(v, l_pos, negatives, tau);
  if (weights.size() != static_cast<std::size_t>(negatives.cols())) {
    throw std::invalid_argument("reweighted_info_nce: weight count does not match negative count");
  }
  Eigen::VectorXd z(1 + negatives.cols());
  z[0] = v.dot(l_pos) / tau;
  for (Eigen::Index j = 0; j < negatives.cols(); ++j) {
    if (!(weights[j] > 0.0)) throw std::invalid_argument("reweighted_info_nce: weights must be positive");
    z[1 + j] = weights[j] * (v.dot(negatives.col(j)) / tau);
  }
  return log_sum_exp(z) - z[0];
}

BatchLoss contrastive_loss(const Eigen::MatrixXd& images, const Eigen::MatrixXd& locations,
                           const Eigen::MatrixXd& weights, double tau) {
  const Eigen::Index b = images.cols();
  const Eigen::Index n = locations.cols();
  if (b == 0 || images.rows() == 0) throw std::invalid_argument("contrastive_loss: empty batch");
  if (images.rows() != locations.rows() || n < b) throw std::invalid_argument("contrastive_loss: shape mismatch");
  if (weights.rows() != b || weights.cols() != n) throw std::invalid_argument("contrastive_loss: weight shape mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");

  const Eigen::MatrixXd s = (images.transpose() * locations) / tau;
  Eigen::MatrixXd d_s(b, n);
  double total = 0.0;
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) z[j] = j == i ? s(i, j) : weights(i, j) * s(i, j);
    const double lse = log_sum_exp(z);
    total += lse - z[i];
    for (Eigen::Index j = 0; j < n; ++j) {
      const double p = std::exp(z[j] - lse);
      d_s(i, j) = j == i ? p - 1.0 : p * weights(i, j);
    }
  }
  const double inv = 1.0 / static_cast<double>(b);
  d_s *= inv / tau;
  BatchLoss out;
  out.loss = total * inv;
  out.d_images = locations * d_s.transpose();
  out.d_locations = images * d_s;
  return out;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("train config: batch size must be >= 2");
  if (augmentations < 1) throw std::invalid_argument("train config: augmentations must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train config: learning rate must be positive");
  if (!(tau > 0.0)) throw std::invalid_argument("train config: tau must be positive");
  if (!(augment_noise_sigma >= 0.0)) throw std::invalid_argument("train config: noise sigma must be >= 0");
  if (reweight) reweight->validate();
}

void NegativeQueue::push(const Eigen::VectorXd& features, const GeoCoord& coord) {
  if (capacity_ == 0) return;
  if (coords_.size() == capacity_) {
    coords_.pop_front();
    features_.pop_front();
  }
  coords_.push_back(coord);
  features_.push_back(features);
}

void adam_update(EncoderParams& params, const EncoderParams& grad, AdamState& st, double lr) {
  auto p = params.views();
  const auto g = grad.views();
  if (st.m.empty()) {
    for (const auto& v : p) {
      st.m.push_back(Eigen::VectorXd::Zero(v.size()));
      st.v.push_back(Eigen::VectorXd::Zero(v.size()));
    }
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < p.size(); ++k) {
    st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * g[k];
    st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * g[k].cwiseProduct(g[k]);
    p[k].array() -= lr * (st.m[k].array() / c1) / ((st.v[k].array() / c2).sqrt() + st.epsilon);
  }
}

TrainState::TrainState(TrainConfig cfg, DualEncoder enc)
    : config(std::move(cfg)), encoder(std::move(enc)), queue(config.queue_capacity), rng(config.seed) {
  config.validate();
  encoder.config.tau = config.tau;
}

LossEvaluation batch_loss_and_gradient(const TrainState& state, const Dataset& data, std::span<const std::size_t> batch,
                                       std::mt19937_64* noise_rng) {
  const TrainConfig& cfg = state.config;
  const DualEncoder& enc = state.encoder;
  const auto b = static_cast<Eigen::Index>(batch.size());
  if (b < 1) throw std::invalid_argument("train_step: empty batch");
  if (data.dim != enc.config.input_dim) throw std::invalid_argument("train_step: dataset dimension != encoder input");
  const auto q = static_cast<Eigen::Index>(state.queue.size());

  Eigen::MatrixXd neg_features(data.dim, b + q);
  std::vector<GeoCoord> neg_coords;
  neg_coords.reserve(static_cast<std::size_t>(b + q));
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& rec = data.records.at(batch[static_cast<std::size_t>(i)]);
    for (std::uint32_t k = 0; k < data.dim; ++k) neg_features(k, i) = rec.features[k];
    neg_coords.push_back(rec.coord);
  }
  for (Eigen::Index j = 0; j < q; ++j) {
    neg_features.col(b + j) = state.queue.features()[static_cast<std::size_t>(j)];
    neg_coords.push_back(state.queue.coords()[static_cast<std::size_t>(j)]);
  }
  const Eigen::MatrixXd anchor_features = neg_features.leftCols(b);
  const std::span<const GeoCoord> anchor_coords(neg_coords.data(), static_cast<std::size_t>(b));

  LossEvaluation out;
  out.grad = enc.params.zeros_like();
  StepReport& st = out.stats;
  st.step = state.step;
  st.negatives_per_anchor = static_cast<std::size_t>(b + q - 1);

  Eigen::MatrixXd weights = Eigen::MatrixXd::Ones(b, b + q);
  if (cfg.reweight && !cfg.force_unit_weights) {
    Eigen::Matrix<NegativeClass, Eigen::Dynamic, Eigen::Dynamic> classes;
    weights = weight_matrix(*cfg.reweight, anchor_features, anchor_coords, neg_features, neg_coords, &classes);
    for (Eigen::Index i = 0; i < b; ++i) {
      for (Eigen::Index j = 0; j < b + q; ++j) {
        if (i == j) continue;
        st.hard_count += classes(i, j) == NegativeClass::hard;
        st.false_count += classes(i, j) == NegativeClass::false_negative;
      }
    }
  }
  double wsum = 0.0, wmax = 0.0;
  std::size_t wcount = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b + q; ++j) {
      if (i == j) continue;
      wsum += weights(i, j);
      wmax = std::max(wmax, weights(i, j));
      ++wcount;
    }
  }
  st.mean_weight = wcount ? wsum / static_cast<double>(wcount) : 1.0;
  st.max_weight = wcount ? wmax : 1.0;

  LocationTape ltape;
  const Eigen::MatrixXd locations = encode_locations(enc, neg_coords, &ltape);
  Eigen::MatrixXd d_locations = Eigen::MatrixXd::Zero(locations.rows(), locations.cols());

  const std::size_t views = noise_rng ? cfg.augmentations : 1;
  const double inv_views = 1.0 / static_cast<double>(views);
  std::normal_distribution<double> noise(0.0, cfg.augment_noise_sigma);
  for (std::size_t p = 0; p < views; ++p) {
    Eigen::MatrixXd x = anchor_features;
    if (noise_rng && cfg.augment_noise_sigma > 0.0) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double norm = x.col(j).norm();
        for (Eigen::Index k = 0; k < x.rows(); ++k) x(k, j) += noise(*noise_rng);
        const double noisy = x.col(j).norm();
        if (noisy > 0.0) x.col(j) *= norm / noisy;
      }
    }
    ImageTape itape;
    const Eigen::MatrixXd images = encode_images(enc, x, &itape);
    const BatchLoss bl = contrastive_loss(images, locations, weights, cfg.tau);
    out.loss += bl.loss * inv_views;
    backward_images(enc, itape, bl.d_images * inv_views, out.grad);
    d_locations += bl.d_locations * inv_views;
  }
  backward_locations(enc, ltape, d_locations, out.grad);
  st.loss = out.loss;
  if (!std::isfinite(st.loss)) throw std::runtime_error("train_step: non-finite loss");
  return out;
}

StepReport train_step(TrainState& state, const Dataset& data, std::span<const std::size_t> batch) {
  LossEvaluation ev = batch_loss_and_gradient(state, data, batch, &state.rng);
  adam_update(state.encoder.params, ev.grad, state.adam, state.config.learning_rate);
  for (std::size_t idx : batch) {
    const auto& rec = data.records[idx];
    Eigen::VectorXd f(data.dim);
    for (std::uint32_t k = 0; k < data.dim; ++k) f[k] = rec.features[k];
    state.queue.push(f, rec.coord);
  }
  ++state.step;
  return ev.stats;
}

std::string epoch_csv_row(const EpochReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,%zu,%zu", r.epoch, r.mean_loss, r.mean_weight, r.hard_count,
                r.false_count);
  std::string row = buf;
  if (r.validation) {
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f", r.validation->acc25, r.validation->acc200, r.validation->acc750);
    row += buf;
  } else {
    row += ",,,";
  }
  return row;
}

EvalReport evaluate_dataset(const DualEncoder& encoder, const GpsGallery& gallery, const Dataset& queries) {
  const Eigen::MatrixXd embeddings = encode_images(encoder, feature_matrix(queries));
  const auto truth = coordinates(queries);
  return evaluate(gallery, embeddings, truth);
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_set, DualEncoder encoder, const Dataset* validation,
                  const std::function<void(const EpochReport&)>& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  TrainState state(cfg, std::move(encoder));
  TrainResult result;
  const auto gallery_coords = coordinates(train_set);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);
    EpochReport rep;
    rep.epoch = epoch;
    double loss_sum = 0.0, weight_sum = 0.0;
    std::size_t steps = 0, weight_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      if (len < 2) break;
      const StepReport s = train_step(state, train_set, std::span<const std::size_t>(order.data() + start, len));
      loss_sum += s.loss;
      const std::size_t negs = len * s.negatives_per_anchor;
      weight_sum += s.mean_weight * static_cast<double>(negs);
      weight_count += negs;
      rep.hard_count += s.hard_count;
      rep.false_count += s.false_count;
      ++steps;
    }
    if (steps == 0) throw std::invalid_argument("train: training set too small for a batch of 2");
    rep.mean_loss = loss_sum / static_cast<double>(steps);
    rep.mean_weight = weight_count ? weight_sum / static_cast<double>(weight_count) : 1.0;
    if (validation && !validation->empty()) {
      rep.validation = evaluate_dataset(state.encoder, build_gallery(gallery_coords, state.encoder), *validation);
    }
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_prefix.empty() && epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(state.encoder, cfg.checkpoint_prefix + ".epoch" + std::to_string(epoch) + ".gckpt");
    }
    if (on_epoch) on_epoch(rep);
    result.epochs.push_back(rep);
  }
  result.encoder = std::move(state.encoder);
  return result;
}

}  // namespace geovar
