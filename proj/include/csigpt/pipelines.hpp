#pragma once

// Experiment recipes: dataset generation for named splits, the feedback-size
// sweep, the pre-training ablation (Schemes A, B, C and Proposed) and the
// federated-tuning versus centralized comparison under matched budgets.

#include "csigpt/config.hpp"
#include "csigpt/metrics.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace csigpt::expcli {

using channelsim::ChannelSample;

enum class Split : std::uint64_t {
  Train = 1,
  Val = 2,
  Test = 3,
  Abundant = 4,
  Scarce = 5,
  FlPool = 6,
  ClPool = 7,
};

std::string split_name(Split s);
Split parse_split(const std::string& name);

// Samples of `scenario` ("mixed" draws config.scenario.mixture in equal
// shares, interleaved) for the split, seeded from (seed, scenario, split).
std::vector<ChannelSample> generate_split(const ExperimentConfig& config, const std::string& scenario,
                                          Split split, int n, std::uint64_t seed);

// Copy of the config's SWTCAN/training settings for one (bits, seed) run.
swtcan::SwtcanConfig swtcan_for(const ExperimentConfig& config, int bits, std::uint64_t seed);
swtcan::TrainOptions train_for(const ExperimentConfig& config, std::uint64_t seed);

struct SweepRun {
  int bits = 0;
  std::uint64_t seed = 0;
  double best_val_nmse_db = 0.0;
  int best_epoch = -1;
};

struct SweepReport {
  std::vector<SweepRun> runs;
  std::vector<int> bits;
  std::vector<double> median_db;  // per entry of `bits`
  bool non_increasing = false;
};

// SWTCAN trained on target-scenario data for every (bits, seed) of the sweep
// section; validation NMSE of the best epoch.
SweepReport run_bits_sweep(const ExperimentConfig& config, MetricsWriter* metrics = nullptr);

struct SchemeResult {
  std::string label;  // "Scheme A", "Scheme B", "Scheme C", "Proposed"
  std::string data_source;
  bool ok = false;
  std::string error;
  double test_nmse_db = 0.0;
  double best_val_nmse_db = 0.0;
  int best_epoch = -1;
  std::string setup_hash;  // SWTCAN architecture + optimizer + seed
  std::shared_ptr<swtcan::Swtcan> model;
};

struct AblationReport {
  int bits = 0;
  std::uint64_t seed = 0;
  std::vector<SchemeResult> schemes;  // A, B, C, Proposed

  const SchemeResult& scheme(const std::string& label) const;
  bool fair() const;  // every scheme shares one setup hash
};

struct AblationOptions {
  // When set, checkpoints "<dir>/<scheme>.ckpt" and the VAEs are written here.
  std::optional<fs::path> checkpoint_dir;
};

// One ablation at (bits, seed). A: abundant pretrain-scenario data. B: the
// scarce target samples. C: VAE trained on the scarce samples, SWTCAN on its
// output. Proposed: VAE trained on the abundant data, fine-tuned on the scarce
// samples, SWTCAN on its output. All are tested on held-out target data.
AblationReport run_pretraining_ablation(const ExperimentConfig& config, int bits, std::uint64_t seed,
                                        MetricsWriter* metrics = nullptr,
                                        const AblationOptions& options = {});

struct FlPoint {
  int round = 0;
  std::uint64_t uplink_reals = 0;
  double nmse_db = 0.0;
};

struct ClPoint {
  int t0 = 0;
  std::uint64_t n_cl = 0;
  std::uint64_t k_cl = 0;
  double k_cl_exact = 0.0;
  std::uint64_t uplink_reals = 0;
  double nmse_db = 0.0;
};

struct ClCurve {
  double gamma = 1.0;
  std::vector<ClPoint> points;
  std::vector<std::string> warnings;
  double final_nmse_db() const { return points.empty() ? 0.0 : points.back().nmse_db; }
  std::uint64_t final_uplink() const { return points.empty() ? 0 : points.back().uplink_reals; }
  // First federated round whose NMSE is at or below this curve's final NMSE.
  std::optional<FlPoint> fl_match;
  // fl_match uplink / final CL uplink; empty when never matched.
  std::optional<double> uplink_ratio;
};

struct FlVsClReport {
  std::uint64_t d = 0;
  std::uint64_t total_params = 0;
  double trainable_fraction = 0.0;
  double initial_nmse_db = 0.0;
  std::vector<FlPoint> fl;
  std::vector<ClCurve> cl;

  const ClCurve& curve(double gamma) const;
};

struct FedtuneResult {
  swtcan::ParamPartition partition;
  fedtune::FedHistory history;
  std::shared_ptr<swtcan::Swtcan> model;  // holds the tuned parameters
};

// fed.rounds rounds of federated tuning from `pretrained` on U target-scenario
// shards of N_FL samples, evaluated on the target test split.
FedtuneResult run_fedtune(const ExperimentConfig& config, const swtcan::Swtcan& pretrained,
                          MetricsWriter* metrics = nullptr);

struct CentralResult {
  budget::BudgetPoint budget;
  fedtune::CentralHistory history;
  std::shared_ptr<swtcan::Swtcan> model;
  double final_nmse_db() const {
    return history.epochs.empty() ? history.initial_nmse_db : history.epochs.back().nmse_db;
  }
};

// Centralized baseline matched to T0 federated rounds at speed ratio gamma:
// N_CL collected target samples, K_CL epochs.
CentralResult run_central(const ExperimentConfig& config, const swtcan::Swtcan& pretrained, int t0,
                          double gamma, MetricsWriter* metrics = nullptr);

// Federated tuning of `pretrained` for fed.rounds rounds on U target-scenario
// shards, and the centralized baseline from the same start at every
// (gamma, T0) with N_CL and K_CL from the budget formulas.
FlVsClReport run_fl_vs_cl(const ExperimentConfig& config, const swtcan::Swtcan& pretrained,
                          MetricsWriter* metrics = nullptr);

// Checkpoint helpers shared by the CLI.
json swtcan_config_json(const swtcan::SwtcanConfig& c);
swtcan::SwtcanConfig swtcan_config_from_json(const json& j);
void save_swtcan(const swtcan::Swtcan& model, const fs::path& path, const json& manifest);
swtcan::Swtcan load_swtcan(const fs::path& path, json* manifest = nullptr);
void save_vae(const vaecsg::Vae& vae, const fs::path& path, const json& manifest);
vaecsg::Vae load_vae(const fs::path& path, json* manifest = nullptr);

double median(std::vector<double> v);

}  // namespace csigpt::expcli
