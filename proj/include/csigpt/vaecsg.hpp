#pragma once

// Variational channel-sample generator. Dense GELU encoder/decoder over the
// flattened two-channel real view of H_a, Gaussian latent with a standard
// normal prior.

#include "csigpt/autograd.hpp"
#include "csigpt/channelsim.hpp"
#include "csigpt/params.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace csigpt::vaecsg {

using channelsim::ChannelSample;

struct VaeConfig {
  int latent_dim = 64;
  double kl_weight = 0.00025;  // l
  std::vector<int> hidden{512, 256};  // encoder widths; decoder mirrors them
  double learning_rate = 1e-3;
  double finetune_lr_ratio = 0.1;
  int batch_size = 32;
  std::uint64_t init_seed = 1;
  std::uint64_t seed = 11;

  void validate() const;
};

struct LatentStats {
  Vector mu;
  Vector logvar;
};

constexpr double kLogvarMin = -10.0;
constexpr double kLogvarMax = 10.0;

// z = mu + exp(logvar / 2) * eps, eps ~ N(0, I).
Vector reparameterize(const LatentStats& stats, Rng& rng);
// KL(N(mu, diag(exp(logvar))) || N(0, I)).
double kl_divergence(const LatentStats& stats);
// ||H_hat - H||_F^2 + l * KL.
double vae_loss(const CMatrix& h, const CMatrix& h_hat, const LatentStats& stats,
                double l);

class Vae {
 public:
  Vae(VaeConfig config, int n_subcarriers, int n_antennas);

  const VaeConfig& config() const { return config_; }
  int n_subcarriers() const { return p_; }
  int n_antennas() const { return n_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  // Inputs are multiplied by data_scale before entering the network and the
  // decoder output is divided by it.
  double data_scale() const { return data_scale_; }
  void set_data_scale(double s);
  // Mean ||H||_F^2 of the most recent training set; generate() matches it.
  double reference_power() const { return reference_power_; }
  void set_reference_power(double p);

  LatentStats encode(const CMatrix& h) const;
  CMatrix decode(const Vector& z) const;

  // Graph builders over a batch of flattened, scaled rows (n x 2PN).
  // Returns {mu, logvar} with logvar clipped.
  std::pair<ag::Var, ag::Var> build_encoder(ag::Tape& tape, const ag::Var& x);
  ag::Var build_decoder(ag::Tape& tape, const ag::Var& z);
  // Sum over the batch of ||dec(z) - x||^2 + l * KL, in scaled units. `eps`
  // is n x latent_dim.
  ag::Var build_loss(ag::Tape& tape, const Matrix& x, const Matrix& eps);

  Matrix flatten_batch(std::span<const ChannelSample> samples) const;

 private:
  ag::Var param(ag::Tape& tape, const std::string& name);

  VaeConfig config_;
  int p_ = 0;
  int n_ = 0;
  ParamSet params_;
  double data_scale_ = 1.0;
  double reference_power_ = 0.0;
};

struct VaeEpoch {
  int epoch = 0;
  double loss = 0.0;  // mean per-sample loss in scaled units
};

// Minimize the mean loss with Adam at the configured rate. When the model has
// never been trained, data_scale is fixed from this dataset so that its mean
// ||H||_F^2 becomes 1.
std::vector<VaeEpoch> train(Vae& vae, std::span<const ChannelSample> data, int epochs);
// Same objective over all parameters at learning_rate * finetune_lr_ratio.
std::vector<VaeEpoch> finetune(Vae& vae, std::span<const ChannelSample> data, int epochs);

// Mean squared reconstruction error through the posterior mean, in the
// original channel units, divided by mean ||H||_F^2 (an NMSE).
double reconstruction_nmse(const Vae& vae, std::span<const ChannelSample> data);

// Decode n prior draws; sample i uses derive_seed(seed, i). The set is
// rescaled so that its mean ||H||_F^2 equals reference_power().
std::vector<ChannelSample> generate(const Vae& vae, int n, std::uint64_t seed,
                                    const std::string& label = "generated");

}  // namespace csigpt::vaecsg
