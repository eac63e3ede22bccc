#pragma once

// Synthetic clustered multipath MIMO-OFDM channels for a uniform planar
// array, the frequency-spatial <-> frequency-angular transform, the pilot
// observation model and NMSE.

#include "csigpt/core.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace csigpt::channelsim {

struct ArrayGeometry {
  int n_rows = 8;
  int n_cols = 8;
  double element_spacing = 0.5;  // wavelengths

  int n_antennas() const { return n_rows * n_cols; }
  void validate() const;
};

struct ScenarioConfig {
  std::string label = "A-like";
  ArrayGeometry geometry{};
  int n_subcarriers = 32;
  double carrier_freq = 28e9;
  double subcarrier_spacing = 240e3;
  double delay_spread = 30e-9;
  int n_clusters = 8;
  int rays_per_cluster = 6;
  double angular_spread = 4.0;  // degrees, per-ray spread around a cluster
  bool los = false;
  double los_k_factor = 0.0;  // linear Rician K when los is set
  // Cluster centres are drawn uniformly in centre +/- range (degrees).
  double azimuth_center = 0.0;
  double azimuth_range = 60.0;
  double elevation_center = 0.0;
  double elevation_range = 20.0;
  std::uint64_t seed = 1;

  // Named cluster-statistics presets: "A-like", "B-like", "C-like".
  static ScenarioConfig preset(const std::string& label);
  static std::vector<std::string> preset_labels();
  void validate() const;
};

struct ChannelSample {
  CMatrix h;  // frequency-angular channel, P x N_BS
  std::string scenario_label;
};

struct Observation {
  CMatrix y;  // P x M
  double snr_db = std::numeric_limits<double>::infinity();
};

struct PathComponent {
  Complex gain;
  double delay = 0.0;      // seconds
  double azimuth = 0.0;    // radians
  double elevation = 0.0;  // radians
};

struct NmseResult {
  double linear = 0.0;
  double db = 0.0;  // -inf when linear == 0
};

constexpr double kNoiseDisabled = std::numeric_limits<double>::infinity();

// Unit-modulus UPA response; element (r, c) sits at index r * n_cols + c with
// phase 2*pi*d*(c*sin(az)*cos(el) + r*sin(el)).
CVector steering_vector(const ArrayGeometry& geometry, double azimuth,
                        double elevation);

// Draws cluster/ray parameters. Gains are normalized so that the sum of
// squared magnitudes is 1, giving unit average power per channel entry.
std::vector<PathComponent> draw_paths(const ScenarioConfig& scenario, Rng& rng);

// H_s[p, :] = sum_l gain_l * exp(-j 2 pi p df tau_l) * a(az_l, el_l)^T.
CMatrix synthesize_channel(const ScenarioConfig& scenario,
                           std::span<const PathComponent> paths);

CMatrix generate_channel(const ScenarioConfig& scenario, Rng& rng);

// Unitary 2-D DFT matching the array factorization: kron(F_rows, F_cols).
CMatrix dft_matrix(const ArrayGeometry& geometry);
CMatrix to_angular(const CMatrix& h_spatial, const ArrayGeometry& geometry);
CMatrix from_angular(const CMatrix& h_angular, const ArrayGeometry& geometry);

// Per-entry complex noise variance giving the requested SNR for a channel of
// average per-entry power `channel_power`.
double noise_variance(const CMatrix& pilot, double snr_db,
                      double channel_power = 1.0);

// Y = H_a X + N. `snr_db` = kNoiseDisabled gives the exact product.
Observation observe(const CMatrix& h_angular, const CMatrix& pilot,
                    double snr_db, Rng& rng, double channel_power = 1.0);

NmseResult nmse(const CMatrix& estimate, const CMatrix& reference);
double to_db(double linear);

// n independent samples; sample i uses a generator seeded from
// derive_seed(master_seed, i).
std::vector<ChannelSample> generate_dataset(const ScenarioConfig& scenario,
                                            int n_samples,
                                            std::uint64_t master_seed);

// Mean per-column power of H_a, normalized to sum to one.
Vector angular_power_profile(std::span<const ChannelSample> samples);
// Total-variation distance between two normalized profiles.
double profile_distance(const Vector& a, const Vector& b);

double mean_frobenius_sq(std::span<const ChannelSample> samples);

}  // namespace csigpt::channelsim
