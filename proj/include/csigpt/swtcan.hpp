#pragma once

// Window-attention channel acquisition network: a learnable pilot, a
// shifted-window transformer compressor producing an L-element code in
// (0, 1), a uniform b-bit quantizer, and a mirrored reconstructor with
// patch-expanding upsampling back to the P x N_BS angular channel.

#include "csigpt/autograd.hpp"
#include "csigpt/channelsim.hpp"
#include "csigpt/params.hpp"

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace csigpt::swtcan {

using channelsim::ChannelSample;
using channelsim::Observation;

struct SwtcanConfig {
  int n_subcarriers = 32;
  channelsim::ArrayGeometry geometry{8, 8, 0.5};
  int pilot_slots = 8;  // M
  int feedback_bits = 512;  // B
  int bits_per_element = 2;  // b
  int embed_dim = 32;
  int window_size = 4;
  std::vector<int> depths{2, 2};
  std::vector<int> heads{2, 4};
  int patch_size = 2;
  int mlp_ratio = 2;
  bool relative_position_bias = true;
  double snr_db = 20.0;
  std::uint64_t init_seed = 1;

  int n_antennas() const { return geometry.n_antennas(); }
  int code_len() const { return feedback_bits / bits_per_element; }
  double compression_ratio() const {
    return static_cast<double>(n_antennas()) / pilot_slots;
  }
  void validate() const;
};

struct BitCodeword {
  std::vector<std::uint8_t> bits;  // each 0 or 1, MSB first per element
};

struct ParamPartition {
  std::string spec;
  std::vector<std::string> frozen;
  std::vector<std::string> trainable;
  std::size_t d = 0;
  std::size_t total = 0;
};

// Uniform b-bit scalar quantizer: index = floor(x * 2^b) clipped to 2^b - 1.
BitCodeword quantize(const Vector& code, int bits_per_element);
// Midpoint reconstruction (index + 0.5) / 2^b.
Vector dequantize(const BitCodeword& word, int bits_per_element);

// NMSE between complex estimate and reference (the training loss).
double loss_nmse(const CMatrix& estimate, const CMatrix& reference);
double batch_loss_nmse(std::span<const CMatrix> estimates,
                       std::span<const ChannelSample> references);

// Complex <-> two-channel real: [Re | Im] side by side.
Matrix to_real_stack(const CMatrix& m);
CMatrix from_real_stack(const Matrix& m);

class Swtcan {
 public:
  explicit Swtcan(SwtcanConfig config);

  const SwtcanConfig& config() const { return config_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  CMatrix pilot() const;
  // Rescale the pilot to unit average per-element power.
  void project_pilot();

  Observation pilot_forward(const CMatrix& h_angular, double snr_db, Rng& rng) const;
  Vector compress(const Observation& obs) const;
  CMatrix reconstruct(const Vector& code_hat) const;
  // pilot -> compress -> quantize -> dequantize -> reconstruct.
  CMatrix acquire(const CMatrix& h_angular, Rng& rng) const;

  // Forward + backward of weight * NMSE for one sample; gradients are added to
  // every parameter with requires_grad. Returns the sample NMSE (linear).
  double accumulate_gradients(const ChannelSample& sample, Rng& rng, double weight);

  // Graph builders. `noise` is the P x M complex noise already scaled.
  ag::Var build_observation(ag::Tape& tape, const CMatrix& h_angular,
                            const CMatrix& noise);
  ag::Var build_compressor(ag::Tape& tape, const ag::Var& y_real);
  ag::Var build_reconstructor(ag::Tape& tape, const ag::Var& code_hat);
  ag::Var build_quantizer(ag::Tape& tape, const ag::Var& code);
  ag::Var build_loss(ag::Tape& tape, const ChannelSample& sample, Rng& rng);

  // Decoder layer names, input to output.
  std::vector<std::string> decoder_layers() const;

 private:
  struct BlockPlan {
    std::string prefix;
    int dim = 0;
    int heads = 0;
    std::shared_ptr<const std::vector<int>> to_windows;    // T x dim gather
    std::shared_ptr<const std::vector<int>> from_windows;  // inverse
    std::shared_ptr<const ag::WindowLayout> layout;
  };
  struct ResizePlan {
    std::string prefix;
    int in_dim = 0;
    int out_dim = 0;
    int out_tokens = 0;
    std::shared_ptr<const std::vector<int>> index;
  };

  void build_plans();
  void init_params();
  void add_block_params(const BlockPlan& plan, Rng& rng);
  ag::Var block_forward(ag::Tape& tape, const ag::Var& x, const BlockPlan& plan);
  ag::Var param(ag::Tape& tape, const std::string& name);

  SwtcanConfig config_;
  ParamSet params_;
  int grid_h_ = 0, grid_w_ = 0;
  std::shared_ptr<const std::vector<int>> patch_partition_;
  std::shared_ptr<const std::vector<int>> patch_unpartition_;
  std::shared_ptr<const std::vector<int>> flatten_index_;
  std::shared_ptr<const std::vector<int>> unflatten_index_;
  std::vector<std::vector<BlockPlan>> enc_blocks_;  // per stage
  std::vector<std::vector<BlockPlan>> dec_blocks_;  // per stage
  std::vector<ResizePlan> merges_;   // stage s -> s + 1
  std::vector<ResizePlan> expands_;  // stage s -> s - 1, indexed by s
  int last_tokens_ = 0;
  int last_dim_ = 0;
};

// Mean NMSE (linear) over `samples`; observation noise for sample i is drawn
// from derive_seed(seed, i) so evaluation is deterministic.
double evaluate_nmse(const Swtcan& model, std::span<const ChannelSample> samples,
                     std::uint64_t seed);

struct TrainOptions {
  int epochs = 20;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double lr_floor_ratio = 0.05;
  std::uint64_t seed = 7;
  std::uint64_t eval_seed = 1234;
};

struct EpochRecord {
  int epoch = 0;
  double train_nmse_db = 0.0;
  double val_nmse_db = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  int best_epoch = -1;  // -1 when no epoch ran
  double best_val_nmse_db = 0.0;
};

// Adam with cosine decay on mean NMSE over mini-batches. The pilot is
// re-projected after every step. On return `model` holds the parameters of
// the epoch with the lowest validation NMSE.
TrainResult train_e2e(Swtcan& model, std::span<const ChannelSample> train_set,
                      std::span<const ChannelSample> val_set,
                      const TrainOptions& options);

// spec: "all", "none", "last-two-decoder-layers", or a comma-separated list
// of layer or parameter names.
ParamPartition partition_params(const Swtcan& model, const std::string& spec);

}  // namespace csigpt::swtcan
