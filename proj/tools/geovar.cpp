// geovar: synthetic data, variogram estimation/fitting, reweighted
// contrastive training and retrieval evaluation from the command line.
//
// Exit codes: 0 ok, 1 usage, 2 I/O, 3 numeric failure.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "geovar/dataset.hpp"
#include "geovar/encoders.hpp"
#include "geovar/evalretrieval.hpp"
#include "geovar/parallel.hpp"
#include "geovar/reweighting.hpp"
#include "geovar/semivariogram.hpp"
#include "geovar/training.hpp"

using namespace geovar;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Resolved configuration, echoed to stdout and written next to the primary output.
class ResolvedConfig {
 public:
  explicit ResolvedConfig(std::string command) { add("command", std::move(command)); }
  void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, num(value)); }
  void add(const std::string& key, std::uint64_t value) { add(key, std::to_string(value)); }

  void emit(const std::string& primary_output) const {
    std::string text;
    for (const auto& [k, v] : entries_) text += k + "=" + v + "\n";
    std::cout << "# resolved configuration\n" << text << std::flush;
    write_text(primary_output + ".config", text);
  }

  static void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
  }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Dataset load_dataset(const std::string& path) {
  try {
    return load_binary(path);
  } catch (const FormatError& e) {
    throw IoError(path + ": " + e.what());
  }
}

SphericalModel load_model(const std::string& path) {
  try {
    return model_from_text(read_text(path));
  } catch (const std::invalid_argument& e) {
    throw IoError(path + ": " + e.what());
  }
}

FitResult fit_or_fail(const EmpiricalVariogram& ev) {
  try {
    return fit_spherical(ev);
  } catch (const std::invalid_argument& e) {
    throw NumericFailure(e.what());
  }
}

// -------------------------------------------------------------------- svg

std::string variogram_svg(const EmpiricalVariogram& ev, const SphericalModel* model) {
  const double w = 640, h = 400, left = 60, right = 20, top = 20, bottom = 50;
  const double h_max = ev.h_max();
  double y_max = 0.0;
  for (const auto& b : ev.bins)
    if (!b.empty()) y_max = std::max(y_max, b.gamma_hat);
  if (model) y_max = std::max(y_max, model->sill());
  y_max = y_max > 0.0 ? 1.1 * y_max : 1.0;
  auto px = [&](double x) { return left + (w - left - right) * x / h_max; };
  auto py = [&](double y) { return h - bottom - (h - top - bottom) * y / y_max; };
  char buf[256];
  std::string svg;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%g\" height=\"%g\" viewBox=\"0 0 %g %g\">\n", w, h,
                w, h);
  svg += buf;
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<polyline fill=\"none\" stroke=\"black\" points=\"%g,%g %g,%g %g,%g\"/>\n", left, top,
                left, h - bottom, w - right, h - bottom);
  svg += buf;
  for (int t = 0; t <= 5; ++t) {
    const double hx = h_max * t / 5.0, gy = y_max * t / 5.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"middle\">%.0f</text>\n",
                  px(hx), h - bottom + 16, hx);
    svg += buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%g\" y=\"%g\" font-size=\"11\" text-anchor=\"end\">%.3f</text>\n",
                  left - 6, py(gy) + 4, gy);
    svg += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" font-size=\"12\" text-anchor=\"middle\">distance (km)</text>\n"
                "<text x=\"14\" y=\"%g\" font-size=\"12\" transform=\"rotate(-90 14 %g)\" "
                "text-anchor=\"middle\">semivariance</text>\n",
                (left + w - right) / 2, h - 10, (top + h - bottom) / 2, (top + h - bottom) / 2);
  svg += buf;

  std::string points;
  for (const auto& b : ev.bins) {
    if (b.empty()) continue;
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(b.h_center), py(b.gamma_hat));
    points += buf;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"steelblue\"/>\n", px(b.h_center),
                  py(b.gamma_hat));
    svg += buf;
  }
  svg += "<polyline fill=\"none\" stroke=\"steelblue\" points=\"" + points + "\"/>\n";
  if (model) {
    std::string curve;
    for (int i = 0; i <= 200; ++i) {
      const double x = h_max * i / 200.0;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", px(x), py(evaluate_spherical(*model, x)));
      curve += buf;
    }
    svg += "<polyline fill=\"none\" stroke=\"firebrick\" stroke-dasharray=\"6 3\" points=\"" + curve + "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

// ------------------------------------------------------------ shared flags

struct ReweightFlags {
  double s1 = 0.5;
  double s2 = 0.5;
  double theta1 = -1.0;  // < 0: fitted range
  double theta2 = 25.0;
  int delta_scale = 2;

  void attach(CLI::App* app) {
    app->add_option("--s1", s1, "hard-negative scale")->capture_default_str();
    app->add_option("--s2", s2, "false-negative scale")->capture_default_str();
    app->add_option("--theta1", theta1, "hard-negative distance (km); negative = fitted range")->capture_default_str();
    app->add_option("--theta2", theta2, "false-negative distance (km)")->capture_default_str();
    app->add_option("--delta-scale", delta_scale, "multiplier on the fitted curve in the deviation")
        ->check(CLI::IsMember({1, 2}))
        ->capture_default_str();
  }

  ReweightConfig resolve(const SphericalModel& m) const {
    ReweightConfig cfg;
    cfg.s1 = s1;
    cfg.s2 = s2;
    cfg.theta1_km = theta1 < 0.0 ? m.range_km : theta1;
    cfg.theta2_km = theta2;
    cfg.model = m;
    cfg.delta_scale = delta_scale;
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return cfg;
  }

  static void record(ResolvedConfig& rc, const ReweightConfig& cfg) {
    rc.add("s1", cfg.s1);
    rc.add("s2", cfg.s2);
    rc.add("theta1_km", cfg.theta1_km);
    rc.add("theta2_km", cfg.theta2_km);
    rc.add("delta_scale", static_cast<std::uint64_t>(cfg.delta_scale));
    rc.add("model.nugget", cfg.model->nugget);
    rc.add("model.partial_sill", cfg.model->partial_sill);
    rc.add("model.range_km", cfg.model->range_km);
  }
};

struct VariogramFlags {
  std::size_t bins = 50;
  double hmax = 5000.0;
  std::uint64_t max_pairs = 5'000'000;
  std::uint64_t seed = 0;

  void attach(CLI::App* app) {
    app->add_option("--bins", bins, "number of equal-width distance bins")->capture_default_str();
    app->add_option("--hmax", hmax, "maximum lag distance (km)")->capture_default_str();
    app->add_option("--max-pairs", max_pairs, "pair sampling cap")->capture_default_str();
    app->add_option("--seed", seed, "pair sampling seed")->capture_default_str();
  }

  VariogramOptions options() const { return {bins, hmax, max_pairs, seed, 0}; }

  void record(ResolvedConfig& rc) const {
    rc.add("bins", static_cast<std::uint64_t>(bins));
    rc.add("hmax_km", hmax);
    rc.add("max_pairs", max_pairs);
    rc.add("variogram_seed", seed);
  }
};

EmpiricalVariogram estimate_or_fail(const Dataset& d, const VariogramOptions& opts) {
  try {
    return estimate_empirical(d, opts);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

// ----------------------------------------------------------- subcommands

struct GenCmd {
  SyntheticSpec spec;
  std::string out = "synthetic.gemb";

  void attach(CLI::App* app) {
    app->add_option("--n", spec.n, "number of points")->required();
    app->add_option("--dim", spec.dim, "feature dimension")->capture_default_str();
    app->add_option("--latent-dim", spec.latent_dim, "latent field count")->capture_default_str();
    app->add_option("--range-km", spec.cov_range_km, "spherical covariance range (km)")->capture_default_str();
    app->add_option("--sill", spec.cov_sill, "partial sill")->capture_default_str();
    app->add_option("--nugget", spec.cov_nugget, "nugget")->capture_default_str();
    app->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    app->add_option("--lat-min", spec.region.lat_min)->capture_default_str();
    app->add_option("--lat-max", spec.region.lat_max)->capture_default_str();
    app->add_option("--lon-min", spec.region.lon_min)->capture_default_str();
    app->add_option("--lon-max", spec.region.lon_max)->capture_default_str();
    app->add_option("--out", out, "output .gemb path")->capture_default_str();
  }

  void run() const {
    ResolvedConfig rc("gen");
    rc.add("n", static_cast<std::uint64_t>(spec.n));
    rc.add("dim", static_cast<std::uint64_t>(spec.dim));
    rc.add("latent_dim", static_cast<std::uint64_t>(spec.latent_dim));
    rc.add("range_km", spec.cov_range_km);
    rc.add("sill", spec.cov_sill);
    rc.add("nugget", spec.cov_nugget);
    rc.add("seed", spec.seed);
    rc.add("lat_min", spec.region.lat_min);
    rc.add("lat_max", spec.region.lat_max);
    rc.add("lon_min", spec.region.lon_min);
    rc.add("lon_max", spec.region.lon_max);
    rc.add("out", out);
    rc.emit(out);
    try {
      spec.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    save_binary(generate_synthetic(spec), out);
    std::cout << "wrote " << spec.n << " records to " << out << "\n";
  }
};

struct VariogramCmd {
  std::string data;
  VariogramFlags vf;
  std::string out = "variogram.csv";
  std::string svg;
  std::string fit;

  void attach(CLI::App* app) {
    app->add_option("--data", data, "input .gemb dataset")->required();
    vf.attach(app);
    app->add_option("--out", out, "variogram CSV path")->capture_default_str();
    app->add_option("--svg", svg, "SVG plot path (default: <out>.svg)");
    app->add_option("--fit", fit, "also fit the spherical model and write it here");
  }

  void run() const {
    ResolvedConfig rc("variogram");
    rc.add("data", data);
    vf.record(rc);
    const std::string svg_path = svg.empty() ? out + ".svg" : svg;
    rc.add("out", out);
    rc.add("svg", svg_path);
    rc.add("fit", fit);
    rc.emit(out);

    const Dataset d = load_dataset(data);
    const EmpiricalVariogram ev = estimate_or_fail(d, vf.options());
    ResolvedConfig::write_text(out, variogram_to_csv(ev));
    std::optional<FitResult> fitted;
    if (!fit.empty()) {
      fitted = fit_or_fail(ev);
      if (!fitted->warning.empty()) std::cerr << "warning: " << fitted->warning << "\n";
      ResolvedConfig::write_text(fit, model_to_text(fitted->model, fitted->objective));
    }
    ResolvedConfig::write_text(svg_path, variogram_svg(ev, fitted ? &fitted->model : nullptr));
    std::cout << "pairs examined: " << ev.total_pairs_sampled << ", nonempty bins: " << ev.nonempty_bins() << "\n";
  }
};

struct FitCmd {
  std::string variogram;
  std::string out = "model.txt";

  void attach(CLI::App* app) {
    app->add_option("--variogram", variogram, "variogram CSV")->required();
    app->add_option("--out", out, "model output path")->capture_default_str();
  }

  void run() const {
    ResolvedConfig rc("fit");
    rc.add("variogram", variogram);
    rc.add("out", out);
    rc.emit(out);
    EmpiricalVariogram ev;
    try {
      ev = variogram_from_csv(read_text(variogram));
    } catch (const std::invalid_argument& e) {
      throw IoError(variogram + ": " + e.what());
    }
    const FitResult r = fit_or_fail(ev);
    if (!r.warning.empty()) std::cerr << "warning: " << r.warning << "\n";
    ResolvedConfig::write_text(out, model_to_text(r.model, r.objective));
    std::cout << model_to_text(r.model, r.objective);
  }
};

struct ModelFlags {
  std::uint32_t hidden = 64;
  std::uint32_t emb = 16;
  std::uint32_t scales = 9;
  std::uint32_t fourier = 16;
  void attach(CLI::App* app) {
    app->add_option("--hidden", hidden)->capture_default_str();
    app->add_option("--emb", emb, "embedding dimension")->capture_default_str();
    app->add_option("--scales", scales, "RFF scales spanning 2^0..2^8")->capture_default_str();
    app->add_option("--fourier", fourier, "Fourier pairs per scale")->capture_default_str();
  }
};

struct SplitFlags {
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
  void attach(CLI::App* app) {
    app->add_option("--val-fraction", val_fraction, "held-out query fraction")->capture_default_str();
    app->add_option("--split-seed", split_seed)->capture_default_str();
  }
  std::pair<Dataset, Dataset> apply(const Dataset& d) const {
    try {
      return split(d, val_fraction, split_seed);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
};

struct TrainCmd {
  std::string data;
  std::string model;
  bool no_reweight = false;
  TrainConfig tc;
  ReweightFlags rw;
  VariogramFlags vf;
  ModelFlags mf;
  SplitFlags sf;
  std::string out = "model.gckpt";
  std::string log = "epochs.csv";

  void attach(CLI::App* app) {
    app->add_option("--data", data, "training .gemb dataset")->required();
    auto* m = app->add_option("--model", model, "fitted variogram model (default: fit on the training split)");
    app->add_flag("--no-reweight", no_reweight, "plain InfoNCE baseline")->excludes(m);
    app->add_option("--epochs", tc.epochs)->capture_default_str();
    app->add_option("--batch-size", tc.batch_size)->capture_default_str();
    app->add_option("--lr", tc.learning_rate)->capture_default_str();
    app->add_option("--seed", tc.seed, "training and initialization seed")->capture_default_str();
    app->add_option("--queue", tc.queue_capacity, "negative queue capacity")->capture_default_str();
    app->add_option("--augmentations", tc.augmentations)->capture_default_str();
    app->add_option("--tau", tc.tau)->capture_default_str();
    app->add_option("--noise", tc.augment_noise_sigma, "feature augmentation noise sigma")->capture_default_str();
    app->add_option("--checkpoint-every", tc.checkpoint_every, "epochs between checkpoints (0: final only)")
        ->capture_default_str();
    rw.attach(app);
    app->add_option("--bins", vf.bins)->capture_default_str();
    app->add_option("--hmax", vf.hmax)->capture_default_str();
    app->add_option("--max-pairs", vf.max_pairs)->capture_default_str();
    mf.attach(app);
    sf.attach(app);
    app->add_option("--out", out, "final checkpoint path")->capture_default_str();
    app->add_option("--log", log, "epoch log CSV path")->capture_default_str();
  }

  void run() {
    const Dataset d = load_dataset(data);
    const auto [train_set, val_set] = sf.apply(d);

    ResolvedConfig rc("train");
    rc.add("data", data);
    rc.add("epochs", static_cast<std::uint64_t>(tc.epochs));
    rc.add("batch_size", static_cast<std::uint64_t>(tc.batch_size));
    rc.add("lr", tc.learning_rate);
    rc.add("seed", tc.seed);
    rc.add("queue", static_cast<std::uint64_t>(tc.queue_capacity));
    rc.add("augmentations", static_cast<std::uint64_t>(tc.augmentations));
    rc.add("tau", tc.tau);
    rc.add("noise", tc.augment_noise_sigma);
    rc.add("hidden", static_cast<std::uint64_t>(mf.hidden));
    rc.add("emb", static_cast<std::uint64_t>(mf.emb));
    rc.add("scales", static_cast<std::uint64_t>(mf.scales));
    rc.add("fourier", static_cast<std::uint64_t>(mf.fourier));
    rc.add("val_fraction", sf.val_fraction);
    rc.add("split_seed", sf.split_seed);
    rc.add("reweight", no_reweight ? "off" : "on");

    if (!no_reweight) {
      SphericalModel m;
      if (!model.empty()) {
        m = load_model(model);
        rc.add("model_source", model);
      } else {
        const FitResult fr = fit_or_fail(estimate_or_fail(train_set, vf.options()));
        if (fr.degenerate) throw NumericFailure("variogram fit is degenerate: " + fr.warning);
        m = fr.model;
        rc.add("model_source", "fitted on training split");
        vf.record(rc);
      }
      tc.reweight = rw.resolve(m);
      ReweightFlags::record(rc, *tc.reweight);
    }
    rc.add("out", out);
    rc.add("log", log);
    rc.emit(out);
    tc.checkpoint_prefix = out;

    EncoderConfig ec;
    ec.input_dim = d.dim;
    ec.hidden = mf.hidden;
    ec.embed_dim = mf.emb;
    ec.scales = mf.scales;
    ec.fourier = mf.fourier;
    ec.tau = tc.tau;
    ec.seed = tc.seed;
    try {
      tc.validate();
      ec.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }

    std::ofstream log_out(log, std::ios::binary | std::ios::trunc);
    if (!log_out) throw IoError("cannot open for writing: " + log);
    log_out << kEpochLogHeader << "\n";
    const auto result = train(tc, train_set, DualEncoder::init(ec), val_set.empty() ? nullptr : &val_set,
                              [&](const EpochReport& r) {
                                log_out << epoch_csv_row(r) << "\n" << std::flush;
                                std::cout << kEpochLogHeader << "\n" << epoch_csv_row(r) << "\n";
                              });
    if (!log_out) throw IoError("write failed: " + log);
    save_checkpoint(result.encoder, out);
    std::cout << "wrote checkpoint " << out << "\n";
  }
};

struct EvalCmd {
  std::string checkpoint;
  std::string data;
  SplitFlags sf;
  std::size_t gallery_sample = 0;
  std::uint64_t gallery_seed = 0;
  std::string out = "report.csv";

  void attach(CLI::App* app) {
    app->add_option("--checkpoint", checkpoint, ".gckpt checkpoint")->required();
    app->add_option("--data", data, ".gemb dataset (split like train)")->required();
    sf.attach(app);
    app->add_option("--gallery-sample", gallery_sample, "seeded gallery subsample size (0: all training coords)")
        ->capture_default_str();
    app->add_option("--gallery-seed", gallery_seed)->capture_default_str();
    app->add_option("--out", out, "report CSV path")->capture_default_str();
  }

  void run() const {
    ResolvedConfig rc("eval");
    rc.add("checkpoint", checkpoint);
    rc.add("data", data);
    rc.add("val_fraction", sf.val_fraction);
    rc.add("split_seed", sf.split_seed);
    rc.add("gallery_sample", static_cast<std::uint64_t>(gallery_sample));
    rc.add("gallery_seed", gallery_seed);
    rc.add("out", out);
    rc.emit(out);

    DualEncoder enc;
    try {
      enc = load_checkpoint(checkpoint);
    } catch (const FormatError& e) {
      throw IoError(checkpoint + ": " + e.what());
    }
    const Dataset d = load_dataset(data);
    if (d.dim != enc.config.input_dim) throw UsageError("dataset dimension does not match the checkpoint");
    const auto [train_set, val_set] = sf.apply(d);
    if (val_set.empty()) throw UsageError("validation split is empty");
    std::vector<GeoCoord> gallery_coords = coordinates(train_set);
    if (gallery_sample > 0 && gallery_sample < gallery_coords.size()) {
      std::mt19937_64 rng(gallery_seed);
      std::vector<GeoCoord> picked;
      std::sample(gallery_coords.begin(), gallery_coords.end(), std::back_inserter(picked), gallery_sample, rng);
      gallery_coords = std::move(picked);
    }
    const EvalReport r = evaluate_dataset(enc, build_gallery(gallery_coords, enc), val_set);
    ResolvedConfig::write_text(out, std::string(kEpochLogHeader) + "\n" + report_csv_row(r) + "\n");
    std::cout << report_text(r);
  }
};

struct AuditCmd {
  std::string data;
  std::string model;
  ReweightFlags rw;
  std::size_t sample = 10000;
  std::uint64_t seed = 0;
  std::string out = "audit.csv";

  void attach(CLI::App* app) {
    app->add_option("--data", data, ".gemb dataset")->required();
    app->add_option("--model", model, "fitted variogram model")->required();
    rw.attach(app);
    app->add_option("--sample", sample, "number of random (anchor, negative) pairs")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--out", out, "audit CSV path")->capture_default_str();
  }

  void run() const {
    const SphericalModel m = load_model(model);
    const ReweightConfig cfg = rw.resolve(m);
    ResolvedConfig rc("weights audit");
    rc.add("data", data);
    rc.add("model_source", model);
    ReweightFlags::record(rc, cfg);
    rc.add("sample", static_cast<std::uint64_t>(sample));
    rc.add("seed", seed);
    rc.add("out", out);
    rc.emit(out);

    const Dataset d = load_dataset(data);
    if (d.size() < 2) throw UsageError("audit needs at least 2 records");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, d.size() - 1);
    std::string csv = "anchor_id,neg_id,d_km,d_cos,gamma_expected,delta,weight,class\n";
    for (std::size_t s = 0; s < sample; ++s) {
      const std::size_t i = pick(rng);
      std::size_t j = pick(rng);
      while (j == i) j = pick(rng);
      const auto& a = d.records[i];
      const auto& b = d.records[j];
      const double d_km = haversine_km(a.coord, b.coord);
      const Eigen::Map<const Eigen::VectorXf> fa(a.features.data(), d.dim), fb(b.features.data(), d.dim);
      const double d_cos = cosine_distance(fa.cast<double>(), fb.cast<double>());
      const double expected = cfg.delta_scale * evaluate_spherical(*cfg.model, d_km);
      const double delta = deviation(cfg, d_cos, d_km);
      csv += std::to_string(a.id) + ',' + std::to_string(b.id) + ',' + num(d_km) + ',' + num(d_cos) + ',' +
             num(expected) + ',' + num(delta) + ',' + num(weight(cfg, delta, d_km)) + ',' +
             std::string(to_string(classify(cfg, delta, d_km))) + '\n';
    }
    ResolvedConfig::write_text(out, csv);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"geovar: semivariogram-guided contrastive geolocalization"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  GenCmd gen;
  VariogramCmd variogram;
  FitCmd fit;
  TrainCmd train_cmd;
  EvalCmd eval;
  AuditCmd audit;

  auto* gen_app = app.add_subcommand("gen", "generate a synthetic spatial dataset");
  gen.attach(gen_app);
  auto* var_app = app.add_subcommand("variogram", "estimate the empirical embedding semivariogram");
  variogram.attach(var_app);
  auto* fit_app = app.add_subcommand("fit", "fit the spherical model to a variogram CSV");
  fit.attach(fit_app);
  auto* train_app = app.add_subcommand("train", "train the dual encoder");
  train_cmd.attach(train_app);
  auto* eval_app = app.add_subcommand("eval", "retrieval accuracy at 25/200/750 km");
  eval.attach(eval_app);
  auto* weights_app = app.add_subcommand("weights", "reweighting diagnostics");
  weights_app->require_subcommand(1);
  auto* audit_app = weights_app->add_subcommand("audit", "per-pair deviation/weight CSV");
  audit.attach(audit_app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen_app) gen.run();
    else if (*var_app) variogram.run();
    else if (*fit_app) fit.run();
    else if (*train_app) train_cmd.run();
    else if (*eval_app) eval.run();
    else if (*audit_app) audit.run();
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  }
}
