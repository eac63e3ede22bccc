#pragma once

// Federated tuning of a trainable parameter subset: client sampling, local
// full-batch SGD, noisy over-the-air averaging and FedAMS server steps, plus
// the centralized baseline trainer.

#include "csigpt/channelsim.hpp"
#include "csigpt/swtcan.hpp"

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace csigpt::fedtune {

using channelsim::ChannelSample;

struct FedConfig {
  int n_ues = 60;                // U
  double participation = 0.1;
  int local_epochs = 2;          // K
  double eta_l = 1e-3;
  double eta = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  int rounds = 100;              // T
  double aircomp_snr_db = 20.0;  // +inf disables aggregation noise
  int samples_per_ue = 10;       // N_FL
  // v_t = v_{t-1} + (1 - beta2) delta^2 instead of the max-stabilized EMA.
  bool literal_variance = false;
  std::uint64_t seed = 3;

  void validate() const;
};

struct FedState {
  long t = 0;
  Vector theta;
  Vector m;
  Vector v;
  Vector v_hat;  // EMA of delta^2 feeding the max-stabilized v

  static FedState init(const Vector& theta0);
};

struct ClientShard {
  int ue_id = 0;
  std::vector<ChannelSample> local_samples;
};

// A model whose trainable subset is exposed as a flat vector.
class FederatedModel {
 public:
  virtual ~FederatedModel() = default;
  virtual Eigen::Index dim() const = 0;
  virtual Vector trainable() const = 0;
  virtual void set_trainable(const Vector& theta) = 0;
  // Mean loss over `samples` and its gradient w.r.t. the trainable vector.
  virtual double loss_and_gradient(std::span<const ChannelSample> samples, Vector& grad,
                                   Rng& rng) = 0;
  // Evaluation metric (linear NMSE for SWTCAN); deterministic.
  virtual double evaluate(std::span<const ChannelSample> samples) const = 0;
  virtual std::unique_ptr<FederatedModel> clone() const = 0;
};

// SWTCAN with a fixed parameter partition; frozen tensors are never written.
class SwtcanFederated final : public FederatedModel {
 public:
  SwtcanFederated(const swtcan::Swtcan& model, swtcan::ParamPartition partition,
                  std::uint64_t eval_seed = 1234);

  Eigen::Index dim() const override;
  Vector trainable() const override;
  void set_trainable(const Vector& theta) override;
  double loss_and_gradient(std::span<const ChannelSample> samples, Vector& grad,
                           Rng& rng) override;
  double evaluate(std::span<const ChannelSample> samples) const override;
  std::unique_ptr<FederatedModel> clone() const override;

  const swtcan::Swtcan& model() const { return model_; }
  const swtcan::ParamPartition& partition() const { return partition_; }

 private:
  swtcan::Swtcan model_;
  swtcan::ParamPartition partition_;
  std::uint64_t eval_seed_;
};

// Sorted ids of round(U * participation) distinct clients.
std::vector<int> sample_clients(int n_ues, double participation, Rng& rng);

// K full-batch gradient steps from theta0 on the shard; returns theta_K - theta0.
// Throws DivergenceError on a non-finite loss or gradient.
Vector local_update(FederatedModel& model, const Vector& theta0, const ClientShard& shard,
                    int local_epochs, double eta_l, Rng& rng);

// Mean of the deltas (summed in the given order) plus Gaussian noise whose
// per-coordinate variance is mean(delta^2 over all clients) / 10^(snr/10).
Vector aircomp_aggregate(std::span<const Vector> deltas, double snr_db, Rng& rng);

void server_update(FedState& state, const Vector& delta, const FedConfig& config);

struct RoundRecord {
  int round = 0;
  double nmse_db = 0.0;
  std::uint64_t uplink_reals_cum = 0;
  double wall_model_seconds = 0.0;
  int participants = 0;
  int dropped = 0;
};

struct FedHistory {
  std::vector<RoundRecord> rounds;
  double initial_nmse_db = 0.0;
};

struct FedRunOptions {
  double seconds_per_round = 0.0;  // modeled UE compute time per round
};

// T rounds of broadcast, local updates, aggregation and server update. The
// model ends holding theta_T.
FedHistory run_federated_tuning(FederatedModel& model, std::span<const ClientShard> shards,
                                const FedConfig& config,
                                std::span<const ChannelSample> eval_set,
                                const FedRunOptions& options = {});

struct CentralOptions {
  double learning_rate = 1e-4;
  int batch_size = 16;
  std::uint64_t seed = 5;
  std::uint64_t eval_seed = 1234;
};

struct CentralEpoch {
  int epoch = 0;
  double nmse_db = 0.0;
};

struct CentralHistory {
  std::vector<CentralEpoch> epochs;
  double initial_nmse_db = 0.0;
  std::uint64_t uplink_reals = 0;  // 2 * P * N_BS * N_CL
  std::size_t trainable_count = 0;
};

// K_CL epochs of Adam over every SWTCAN parameter on the collected samples.
CentralHistory run_centralized_baseline(swtcan::Swtcan& model,
                                        std::span<const ChannelSample> collected, int k_cl,
                                        std::span<const ChannelSample> eval_set,
                                        const CentralOptions& options = {});

}  // namespace csigpt::fedtune
