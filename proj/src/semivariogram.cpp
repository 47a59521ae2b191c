#include "geovar/semivariogram.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <random>
#include <sstream>

#include "geovar/parallel.hpp"

namespace geovar {

std::size_t EmpiricalVariogram::nonempty_bins() const {
  return static_cast<std::size_t>(std::count_if(bins.begin(), bins.end(), [](const auto& b) { return !b.empty(); }));
}

namespace {

constexpr std::size_t kChunkPairs = 1 << 16;

struct BinAccumulator {
  std::vector<double> sums;
  std::vector<std::uint64_t> counts;
  std::uint64_t examined = 0;
};

/// Draws m distinct values uniformly from [0, total), returned sorted.
/// Repeated draw-with-replacement plus dedup; the distinct set of an iid
/// prefix is uniform over m-subsets.
std::vector<std::uint64_t> sample_distinct(std::uint64_t total, std::uint64_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, total - 1);
  std::vector<std::uint64_t> out;
  out.reserve(m);
  while (out.size() < m) {
    const std::size_t need = m - out.size();
    const std::size_t old = out.size();
    for (std::size_t i = 0; i < need; ++i) out.push_back(pick(rng));
    std::sort(out.begin() + static_cast<std::ptrdiff_t>(old), out.end());
    std::inplace_merge(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(old), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  return out;
}

}  // namespace

EmpiricalVariogram estimate_empirical(const Eigen::MatrixXd& features, std::span<const GeoCoord> coords,
                                      const VariogramOptions& opts) {
  const auto n = static_cast<std::uint64_t>(coords.size());
  if (n == 0) throw std::invalid_argument("estimate_empirical: empty dataset");
  if (n < 2) throw std::invalid_argument("estimate_empirical: need at least 2 records");
  if (opts.n_bins < 1) throw std::invalid_argument("estimate_empirical: bin count must be positive");
  if (!(opts.h_max_km > 0.0)) throw std::invalid_argument("estimate_empirical: h_max must be positive");
  if (static_cast<std::uint64_t>(features.cols()) != n) {
    throw std::invalid_argument("estimate_empirical: feature/coordinate count mismatch");
  }

  Eigen::MatrixXd unit = features;
  for (Eigen::Index j = 0; j < unit.cols(); ++j) {
    const double norm = unit.col(j).norm();
    if (!(norm > 0.0)) throw std::invalid_argument("estimate_empirical: zero-norm feature vector");
    unit.col(j) /= norm;
  }

  const std::size_t n_bins = opts.n_bins;
  const double width = opts.h_max_km / static_cast<double>(n_bins);
  auto accumulate = [&](BinAccumulator& acc, std::uint64_t i, std::uint64_t j) {
    ++acc.examined;
    const double h = haversine_km(coords[i], coords[j]);
    if (h > opts.h_max_km) return;
    const auto b = std::min(static_cast<std::size_t>(h / width), n_bins - 1);
    const double dcos = std::clamp(1.0 - unit.col(static_cast<Eigen::Index>(i)).dot(unit.col(static_cast<Eigen::Index>(j))), 0.0, 2.0);
    acc.sums[b] += dcos;
    acc.counts[b] += 1;
  };

  const std::uint64_t total_pairs = n * (n - 1) / 2;
  const unsigned workers = opts.workers == 0 ? worker_count() : opts.workers;
  std::vector<BinAccumulator> chunks;

  auto fresh = [&] { return BinAccumulator{std::vector<double>(n_bins, 0.0), std::vector<std::uint64_t>(n_bins, 0), 0}; };

  if (total_pairs <= opts.max_pairs) {
    // One chunk per anchor row: pairs (i, j > i).
    chunks.resize(n - 1);
    parallel_for(n - 1, workers, [&](std::size_t i) {
      BinAccumulator acc = fresh();
      for (std::uint64_t j = i + 1; j < n; ++j) accumulate(acc, i, j);
      chunks[i] = std::move(acc);
    });
  } else {
    const auto picks = sample_distinct(total_pairs, opts.max_pairs, opts.seed);
    const std::size_t n_chunks = (picks.size() + kChunkPairs - 1) / kChunkPairs;
    chunks.resize(n_chunks);
    parallel_for(n_chunks, workers, [&](std::size_t c) {
      BinAccumulator acc = fresh();
      const std::size_t begin = c * kChunkPairs;
      const std::size_t end = std::min(picks.size(), begin + kChunkPairs);
      // Row-major pair index p -> (i, j), i < j; row i starts at i*n - i(i+1)/2.
      auto row_start = [n](std::uint64_t i) { return i * n - i * (i + 1) / 2; };
      const double nd = static_cast<double>(n);
      std::uint64_t i = static_cast<std::uint64_t>(
          std::max(0.0, std::floor(nd - 0.5 - std::sqrt((nd - 0.5) * (nd - 0.5) - 2.0 * static_cast<double>(picks[begin])))));
      while (i > 0 && row_start(i) > picks[begin]) --i;
      while (i + 1 < n && row_start(i + 1) <= picks[begin]) ++i;
      for (std::size_t k = begin; k < end; ++k) {
        while (row_start(i + 1) <= picks[k]) ++i;
        const std::uint64_t j = i + 1 + (picks[k] - row_start(i));
        accumulate(acc, i, j);
      }
      chunks[c] = std::move(acc);
    });
  }

  BinAccumulator total = fresh();
  for (const auto& c : chunks) {
    for (std::size_t b = 0; b < n_bins; ++b) {
      total.sums[b] += c.sums[b];
      total.counts[b] += c.counts[b];
    }
    total.examined += c.examined;
  }

  EmpiricalVariogram ev;
  ev.seed = opts.seed;
  ev.total_pairs_sampled = total.examined;
  ev.bins.resize(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = ev.bins[b];
    bin.h_lo = width * static_cast<double>(b);
    bin.h_hi = b + 1 == n_bins ? opts.h_max_km : width * static_cast<double>(b + 1);
    bin.h_center = 0.5 * (bin.h_lo + bin.h_hi);
    bin.pair_count = total.counts[b];
    if (bin.pair_count > 0) bin.gamma_hat = total.sums[b] / (2.0 * static_cast<double>(bin.pair_count));
  }
  return ev;
}

EmpiricalVariogram estimate_empirical(const Dataset& d, const VariogramOptions& opts) {
  if (d.empty()) throw std::invalid_argument("estimate_empirical: empty dataset");
  const auto coords = coordinates(d);
  return estimate_empirical(feature_matrix(d), coords, opts);
}

void SphericalModel::validate() const {
  if (!(nugget >= 0.0) || !(partial_sill >= 0.0)) throw std::invalid_argument("spherical model: negative nugget or sill");
  if (!(range_km > 0.0) || !std::isfinite(range_km)) throw std::invalid_argument("spherical model: range must be > 0");
}

double fit_objective(const EmpiricalVariogram& ev, const SphericalModel& m) {
  double sum = 0.0;
  for (const auto& b : ev.bins) {
    if (b.empty()) continue;
    const double r = b.gamma_hat - evaluate_spherical(m, b.h_center);
    sum += static_cast<double>(b.pair_count) * r * r;
  }
  return sum;
}

namespace {

struct WeightedPoint {
  double h, y, w;
};

/// For a fixed range, nugget and partial sill enter linearly; solve the
/// nonnegative weighted least squares in closed form.
SphericalModel solve_linear_part(const std::vector<WeightedPoint>& pts, double range) {
  double sw = 0, sf = 0, sff = 0, sy = 0, sfy = 0;
  for (const auto& p : pts) {
    const double f = evaluate_spherical(SphericalModel{0.0, 1.0, range}, p.h);
    sw += p.w;
    sf += p.w * f;
    sff += p.w * f * f;
    sy += p.w * p.y;
    sfy += p.w * f * p.y;
  }
  auto sse = [&](double c0, double c) {
    double s = 0;
    for (const auto& p : pts) {
      const double r = p.y - c0 - c * evaluate_spherical(SphericalModel{0.0, 1.0, range}, p.h);
      s += p.w * r * r;
    }
    return s;
  };
  std::vector<std::array<double, 2>> candidates;
  const double det = sw * sff - sf * sf;
  if (std::abs(det) > 1e-14 * sw * sff) {
    const double c0 = (sff * sy - sf * sfy) / det;
    const double c = (sw * sfy - sf * sy) / det;
    if (c0 >= 0.0 && c >= 0.0) candidates.push_back({c0, c});
  }
  candidates.push_back({std::max(0.0, sy / sw), 0.0});
  if (sff > 0.0) candidates.push_back({0.0, std::max(0.0, sfy / sff)});
  std::array<double, 2> best = candidates.front();
  double best_sse = sse(best[0], best[1]);
  for (const auto& c : candidates) {
    const double s = sse(c[0], c[1]);
    if (s < best_sse) {
      best_sse = s;
      best = c;
    }
  }
  return {best[0], best[1], range};
}

}  // namespace

FitResult fit_spherical(const EmpiricalVariogram& ev) {
  std::vector<WeightedPoint> pts;
  for (const auto& b : ev.bins) {
    if (!b.empty()) pts.push_back({b.h_center, b.gamma_hat, static_cast<double>(b.pair_count)});
  }
  if (pts.size() < 3) throw std::invalid_argument("fit_spherical: need at least 3 nonempty bins");
  const double h_max = ev.h_max();

  FitResult result;
  if (std::all_of(pts.begin(), pts.end(), [](const auto& p) { return p.y == 0.0; })) {
    result.model = {0.0, 0.0, h_max};
    result.seed_model = result.model;
    result.degenerate = true;
    result.warning = "all gamma_hat are zero; returning a zero model";
    return result;
  }

  // Heuristic start.
  const std::size_t tail = std::max<std::size_t>(1, pts.size() / 5);
  double sill0 = 0.0;
  for (std::size_t i = pts.size() - tail; i < pts.size(); ++i) sill0 += pts[i].y;
  sill0 /= static_cast<double>(tail);
  double a0 = 0.5 * h_max;
  for (const auto& p : pts) {
    if (p.y >= 0.95 * sill0) {
      a0 = p.h;
      break;
    }
  }
  const double range_lo = 1e-6 * h_max;
  SphericalModel heuristic{pts.front().y, std::max(0.0, sill0 - pts.front().y), std::clamp(a0, range_lo, h_max)};

  // Coarse grid over the range.
  SphericalModel seed = heuristic;
  double seed_obj = fit_objective(ev, heuristic);
  constexpr int kGrid = 40;
  for (int g = 1; g <= kGrid; ++g) {
    const SphericalModel cand = solve_linear_part(pts, h_max * g / kGrid);
    const double obj = fit_objective(ev, cand);
    if (obj < seed_obj) {
      seed_obj = obj;
      seed = cand;
    }
  }
  result.seed_model = seed;
  result.seed_objective = seed_obj;

  // Bounded Nelder-Mead in scaled coordinates (c0/s, c/s, a/h_max).
  double scale = 0.0;
  for (const auto& p : pts) scale = std::max(scale, std::abs(p.y));
  using Vec = std::array<double, 3>;
  auto project = [&](Vec v) {
    v[0] = std::max(0.0, v[0]);
    v[1] = std::max(0.0, v[1]);
    v[2] = std::clamp(v[2], range_lo / h_max, 1.0);
    return v;
  };
  auto to_model = [&](const Vec& v) { return SphericalModel{v[0] * scale, v[1] * scale, v[2] * h_max}; };
  auto f = [&](const Vec& v) { return fit_objective(ev, to_model(v)); };

  Vec best{seed.nugget / scale, seed.partial_sill / scale, seed.range_km / h_max};
  double best_f = seed_obj;
  int iterations = 0;
  for (int restart = 0; restart < 8; ++restart) {
    std::array<Vec, 4> simplex;
    std::array<double, 4> fv;
    simplex[0] = best;
    for (int k = 0; k < 3; ++k) {
      Vec v = best;
      const double step = std::max(0.05 * std::abs(v[k]), restart == 0 ? 0.05 : 1e-4);
      v[k] += (k == 2 && v[k] + step > 1.0) ? -step : step;
      simplex[k + 1] = project(v);
    }
    for (int k = 0; k < 4; ++k) fv[k] = f(simplex[k]);

    for (int it = 0; it < 4000; ++it, ++iterations) {
      std::array<int, 4> idx{0, 1, 2, 3};
      std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fv[a] < fv[b]; });
      std::array<Vec, 4> s2;
      std::array<double, 4> f2;
      for (int k = 0; k < 4; ++k) {
        s2[k] = simplex[idx[k]];
        f2[k] = fv[idx[k]];
      }
      simplex = s2;
      fv = f2;

      double diameter = 0.0;
      for (int k = 1; k < 4; ++k)
        for (int c = 0; c < 3; ++c) diameter = std::max(diameter, std::abs(simplex[k][c] - simplex[0][c]));
      if (diameter < 1e-12) break;

      Vec centroid{0, 0, 0};
      for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 3; ++c) centroid[c] += simplex[k][c] / 3.0;
      auto along = [&](double t) {
        Vec v;
        for (int c = 0; c < 3; ++c) v[c] = centroid[c] + t * (simplex[3][c] - centroid[c]);
        return project(v);
      };

      const Vec xr = along(-1.0);
      const double fr = f(xr);
      if (fr < fv[0]) {
        const Vec xe = along(-2.0);
        const double fe = f(xe);
        if (fe < fr) {
          simplex[3] = xe;
          fv[3] = fe;
        } else {
          simplex[3] = xr;
          fv[3] = fr;
        }
      } else if (fr < fv[2]) {
        simplex[3] = xr;
        fv[3] = fr;
      } else {
        const bool outside = fr < fv[3];
        const Vec xc = along(outside ? -0.5 : 0.5);
        const double fc = f(xc);
        if (fc < (outside ? fr : fv[3])) {
          simplex[3] = xc;
          fv[3] = fc;
        } else {
          for (int k = 1; k < 4; ++k) {
            Vec v;
            for (int c = 0; c < 3; ++c) v[c] = simplex[0][c] + 0.5 * (simplex[k][c] - simplex[0][c]);
            simplex[k] = project(v);
            fv[k] = f(simplex[k]);
          }
        }
      }
    }
    const int k_best = static_cast<int>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    const bool improved = fv[k_best] < best_f;
    if (improved) {
      const bool material = best_f - fv[k_best] > 1e-15 * (1.0 + best_f);
      best = simplex[k_best];
      best_f = fv[k_best];
      if (!material && restart > 0) break;
    } else if (restart > 0) {
      break;
    }
  }

  SphericalModel model = to_model(best);
  // A range shorter than the first populated lag is indistinguishable from a
  // pure nugget; report it in that canonical form.
  if (model.range_km <= pts.front().h && model.partial_sill > 0.0) {
    const SphericalModel folded{model.nugget + model.partial_sill, 0.0, model.range_km};
    if (fit_objective(ev, folded) <= best_f) model = folded;
  }
  result.model = model;
  result.objective = fit_objective(ev, model);
  result.iterations = iterations;
  return result;
}

// ---------------------------------------------------------------- text I/O

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view s, const std::string& what) {
  double v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("cannot parse " + what + ": '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

std::string variogram_to_csv(const EmpiricalVariogram& ev) {
  std::string out = "h_lo,h_center,h_hi,gamma_hat,pair_count\n";
  for (const auto& b : ev.bins) {
    out += fmt(b.h_lo) + ',' + fmt(b.h_center) + ',' + fmt(b.h_hi) + ',' + (b.empty() ? "" : fmt(b.gamma_hat)) + ',' +
           std::to_string(b.pair_count) + '\n';
  }
  return out;
}

EmpiricalVariogram variogram_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "h_lo,h_center,h_hi,gamma_hat,pair_count") {
    throw std::invalid_argument("variogram CSV: bad header");
  }
  EmpiricalVariogram ev;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw std::invalid_argument("variogram CSV row " + std::to_string(row) + ": expected 5 fields");
    VariogramBin b;
    const std::string where = " in variogram CSV row " + std::to_string(row);
    b.h_lo = parse_double(f[0], "h_lo" + where);
    b.h_center = parse_double(f[1], "h_center" + where);
    b.h_hi = parse_double(f[2], "h_hi" + where);
    b.pair_count = static_cast<std::uint64_t>(parse_double(f[4], "pair_count" + where));
    if (b.pair_count > 0) {
      b.gamma_hat = parse_double(f[3], "gamma_hat" + where);
    } else if (!f[3].empty()) {
      throw std::invalid_argument("variogram CSV row " + std::to_string(row) + ": empty bin carries a value");
    }
    ev.bins.push_back(b);
    ++row;
  }
  return ev;
}

std::string model_to_text(const SphericalModel& m, double objective) {
  return "nugget=" + fmt(m.nugget) + "\npartial_sill=" + fmt(m.partial_sill) + "\nrange_km=" + fmt(m.range_km) +
         "\nobjective=" + fmt(objective) + "\n";
}

SphericalModel model_from_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  SphericalModel m;
  int seen = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("model file: expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    const double v = parse_double(std::string_view(line).substr(eq + 1), key);
    if (key == "nugget") {
      m.nugget = v;
      seen |= 1;
    } else if (key == "partial_sill") {
      m.partial_sill = v;
      seen |= 2;
    } else if (key == "range_km") {
      m.range_km = v;
      seen |= 4;
    }
  }
  if (seen != 7) throw std::invalid_argument("model file: missing nugget, partial_sill or range_km");
  m.validate();
  return m;
}

}  // namespace geovar
