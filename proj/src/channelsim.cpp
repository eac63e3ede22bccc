#include "csigpt/channelsim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace csigpt::channelsim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

void ArrayGeometry::validate() const {
  if (n_rows < 1) throw ConfigError("geometry.n_rows", "must be >= 1");
  if (n_cols < 1) throw ConfigError("geometry.n_cols", "must be >= 1");
  if (!(element_spacing > 0.0)) throw ConfigError("geometry.element_spacing", "must be > 0");
}

ScenarioConfig ScenarioConfig::preset(const std::string& label) {
  ScenarioConfig s;
  s.label = label;
  if (label == "A-like") {
    // Rich NLOS scattering over a wide sector.
    s.n_clusters = 8;
    s.rays_per_cluster = 6;
    s.angular_spread = 4.0;
    s.azimuth_center = -20.0;
    s.azimuth_range = 50.0;
    s.elevation_center = 0.0;
    s.elevation_range = 20.0;
  } else if (label == "B-like") {
    // Few clusters confined to a narrower, offset sector.
    s.n_clusters = 3;
    s.rays_per_cluster = 6;
    s.angular_spread = 8.0;
    s.azimuth_center = 30.0;
    s.azimuth_range = 20.0;
    s.elevation_center = 15.0;
    s.elevation_range = 10.0;
  } else if (label == "C-like") {
    // Dominant line-of-sight path plus a handful of weak clusters.
    s.n_clusters = 4;
    s.rays_per_cluster = 4;
    s.angular_spread = 3.0;
    s.los = true;
    s.los_k_factor = 2.0;
    s.azimuth_center = 0.0;
    s.azimuth_range = 60.0;
    s.elevation_center = 0.0;
    s.elevation_range = 20.0;
  } else {
    throw ConfigError("scenario.label", "unknown preset '" + label + "'");
  }
  return s;
}

std::vector<std::string> ScenarioConfig::preset_labels() {
  return {"A-like", "B-like", "C-like"};
}

void ScenarioConfig::validate() const {
  geometry.validate();
  if (n_subcarriers < 1) throw ConfigError("scenario.n_subcarriers", "must be >= 1");
  if (!(delay_spread > 0.0)) throw ConfigError("scenario.delay_spread", "must be > 0");
  if (n_clusters < 1) throw ConfigError("scenario.n_clusters", "must be >= 1");
  if (rays_per_cluster < 1) throw ConfigError("scenario.rays_per_cluster", "must be >= 1");
  if (!(subcarrier_spacing > 0.0)) throw ConfigError("scenario.subcarrier_spacing", "must be > 0");
  if (angular_spread < 0.0) throw ConfigError("scenario.angular_spread", "must be >= 0");
  if (los && los_k_factor < 0.0) throw ConfigError("scenario.los_k_factor", "must be >= 0");
}

CVector steering_vector(const ArrayGeometry& geometry, double azimuth,
                        double elevation) {
  geometry.validate();
  const double u = std::sin(azimuth) * std::cos(elevation);
  const double v = std::sin(elevation);
  const double d = geometry.element_spacing;
  CVector row_part(geometry.n_rows);
  CVector col_part(geometry.n_cols);
  for (int r = 0; r < geometry.n_rows; ++r) row_part(r) = std::polar(1.0, kTwoPi * d * r * v);
  for (int c = 0; c < geometry.n_cols; ++c) col_part(c) = std::polar(1.0, kTwoPi * d * c * u);
  CVector a(geometry.n_antennas());
  for (int r = 0; r < geometry.n_rows; ++r)
    for (int c = 0; c < geometry.n_cols; ++c) a(r * geometry.n_cols + c) = row_part(r) * col_part(c);
  return a;
}

std::vector<PathComponent> draw_paths(const ScenarioConfig& scenario, Rng& rng) {
  scenario.validate();
  std::vector<PathComponent> paths;
  std::vector<double> powers;
  const int rays = scenario.rays_per_cluster;
  for (int c = 0; c < scenario.n_clusters; ++c) {
    double tau = -scenario.delay_spread * std::log(1.0 - uniform01(rng));
    double shadow_db = 3.0 * standard_normal(rng);
    double p_cluster = std::exp(-tau / scenario.delay_spread) * std::pow(10.0, -shadow_db / 10.0);
    double az_c = scenario.azimuth_center + scenario.azimuth_range * (2.0 * uniform01(rng) - 1.0);
    double el_c = scenario.elevation_center + scenario.elevation_range * (2.0 * uniform01(rng) - 1.0);
    for (int r = 0; r < rays; ++r) {
      PathComponent p;
      p.azimuth = (az_c + scenario.angular_spread * standard_normal(rng)) * kDeg;
      p.elevation = std::clamp(el_c + scenario.angular_spread * standard_normal(rng), -89.0, 89.0) * kDeg;
      p.delay = tau + 0.05 * scenario.delay_spread * uniform01(rng);
      p.gain = std::polar(1.0, kTwoPi * uniform01(rng));
      paths.push_back(p);
      powers.push_back(p_cluster / rays);
    }
  }
  double nlos_total = 0.0;
  for (double p : powers) nlos_total += p;
  double nlos_share = 1.0;
  if (scenario.los) {
    const double k = scenario.los_k_factor;
    nlos_share = 1.0 / (k + 1.0);
    PathComponent los;
    los.azimuth = scenario.azimuth_center * kDeg;
    los.elevation = scenario.elevation_center * kDeg;
    los.delay = 0.0;
    los.gain = std::polar(std::sqrt(k / (k + 1.0)), kTwoPi * uniform01(rng));
    for (std::size_t i = 0; i < paths.size(); ++i)
      paths[i].gain *= std::sqrt(nlos_share * powers[i] / nlos_total);
    paths.insert(paths.begin(), los);
    return paths;
  }
  for (std::size_t i = 0; i < paths.size(); ++i) paths[i].gain *= std::sqrt(powers[i] / nlos_total);
  return paths;
}

CMatrix synthesize_channel(const ScenarioConfig& scenario,
                           std::span<const PathComponent> paths) {
  scenario.validate();
  const int P = scenario.n_subcarriers;
  const int N = scenario.geometry.n_antennas();
  CMatrix h = CMatrix::Zero(P, N);
  for (const PathComponent& path : paths) {
    CVector a = steering_vector(scenario.geometry, path.azimuth, path.elevation);
    for (int p = 0; p < P; ++p) {
      Complex phase = std::polar(1.0, -kTwoPi * p * scenario.subcarrier_spacing * path.delay);
      h.row(p) += (path.gain * phase) * a.transpose();
    }
  }
  return h;
}

CMatrix generate_channel(const ScenarioConfig& scenario, Rng& rng) {
  auto paths = draw_paths(scenario, rng);
  return synthesize_channel(scenario, paths);
}

CMatrix dft_matrix(const ArrayGeometry& geometry) {
  geometry.validate();
  const int R = geometry.n_rows, C = geometry.n_cols, N = R * C;
  const double norm = 1.0 / std::sqrt(static_cast<double>(N));
  CMatrix f(N, N);
  for (int n = 0; n < N; ++n) {
    const int rn = n / C, cn = n % C;
    for (int m = 0; m < N; ++m) {
      const int rm = m / C, cm = m % C;
      double ph = -kTwoPi * (static_cast<double>(rn * rm) / R + static_cast<double>(cn * cm) / C);
      f(n, m) = std::polar(norm, ph);
    }
  }
  return f;
}

CMatrix to_angular(const CMatrix& h_spatial, const ArrayGeometry& geometry) {
  if (h_spatial.cols() != geometry.n_antennas()) {
    throw ShapeError("to_angular: column count does not match the array size");
  }
  return h_spatial * dft_matrix(geometry);
}

CMatrix from_angular(const CMatrix& h_angular, const ArrayGeometry& geometry) {
  if (h_angular.cols() != geometry.n_antennas()) {
    throw ShapeError("from_angular: column count does not match the array size");
  }
  return h_angular * dft_matrix(geometry).adjoint();
}

double noise_variance(const CMatrix& pilot, double snr_db, double channel_power) {
  if (std::isinf(snr_db) && snr_db > 0) return 0.0;
  const double snr = std::pow(10.0, snr_db / 10.0);
  return channel_power * pilot.squaredNorm() / (static_cast<double>(pilot.cols()) * snr);
}

Observation observe(const CMatrix& h_angular, const CMatrix& pilot, double snr_db,
                    Rng& rng, double channel_power) {
  if (!all_finite(pilot)) throw std::invalid_argument("observe: pilot has non-finite entries");
  if (pilot.rows() != h_angular.cols()) throw ShapeError("observe: pilot rows must equal N_BS");
  if (pilot.cols() > pilot.rows()) throw ShapeError("observe: M must not exceed N_BS");
  Observation obs;
  obs.snr_db = snr_db;
  obs.y = h_angular * pilot;
  const double var = noise_variance(pilot, snr_db, channel_power);
  if (var > 0.0) {
    const double s = std::sqrt(var / 2.0);
    for (Eigen::Index j = 0; j < obs.y.cols(); ++j)
      for (Eigen::Index i = 0; i < obs.y.rows(); ++i) {
        double re = standard_normal(rng);
        double im = standard_normal(rng);
        obs.y(i, j) += Complex(s * re, s * im);
      }
  }
  return obs;
}

double to_db(double linear) {
  if (linear <= 0.0) return -std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(linear);
}

NmseResult nmse(const CMatrix& estimate, const CMatrix& reference) {
  if (estimate.rows() != reference.rows() || estimate.cols() != reference.cols()) {
    throw ShapeError("nmse: shape mismatch");
  }
  const double ref = reference.squaredNorm();
  if (!(ref > 0.0)) throw std::invalid_argument("nmse: reference channel has zero norm");
  NmseResult r;
  r.linear = (estimate - reference).squaredNorm() / ref;
  r.db = to_db(r.linear);
  return r;
}

std::vector<ChannelSample> generate_dataset(const ScenarioConfig& scenario,
                                            int n_samples,
                                            std::uint64_t master_seed) {
  if (n_samples < 1) throw std::invalid_argument("generate_dataset: n_samples must be >= 1");
  scenario.validate();
  std::vector<ChannelSample> out;
  out.reserve(static_cast<std::size_t>(n_samples));
  const CMatrix f = dft_matrix(scenario.geometry);
  for (int i = 0; i < n_samples; ++i) {
    Rng rng(derive_seed(master_seed, static_cast<std::uint64_t>(i)));
    CMatrix hs = generate_channel(scenario, rng);
    out.push_back({hs * f, scenario.label});
  }
  return out;
}

Vector angular_power_profile(std::span<const ChannelSample> samples) {
  if (samples.empty()) throw std::invalid_argument("angular_power_profile: empty sample set");
  Vector prof = Vector::Zero(samples.front().h.cols());
  for (const auto& s : samples) {
    if (s.h.cols() != prof.size()) throw ShapeError("angular_power_profile: inconsistent N_BS");
    prof += s.h.cwiseAbs2().colwise().sum().transpose();
  }
  const double total = prof.sum();
  if (total > 0) prof /= total;
  return prof;
}

double profile_distance(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) throw ShapeError("profile_distance: length mismatch");
  return 0.5 * (a - b).cwiseAbs().sum();
}

double mean_frobenius_sq(std::span<const ChannelSample> samples) {
  if (samples.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : samples) s += x.h.squaredNorm();
  return s / static_cast<double>(samples.size());
}

}  // namespace csigpt::channelsim
