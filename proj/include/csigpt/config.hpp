#pragma once

// Typed experiment configuration loaded from JSON. Unknown keys and type
// mismatches are reported with the dotted path of the offending field.

#include "csigpt/budget.hpp"
#include "csigpt/channelsim.hpp"
#include "csigpt/fedtune.hpp"
#include "csigpt/swtcan.hpp"
#include "csigpt/vaecsg.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace csigpt::expcli {

using json = nlohmann::json;

struct ScenarioSection {
  std::string pretrain = "A-like";  // abundant, mismatched statistics
  std::string target = "B-like";    // the cell being served
  // Scenarios mixed in equal shares when a split is generated as "mixed".
  std::vector<std::string> mixture{"A-like", "B-like", "C-like"};
  int n_subcarriers = 32;
  channelsim::ArrayGeometry geometry{8, 8, 0.5};
  double carrier_freq = 28e9;
  double subcarrier_spacing = 240e3;
  double delay_spread = 30e-9;
  // Per-preset field overrides, e.g. {"B-like": {"n_clusters": 4}}.
  std::map<std::string, json> presets;
};

struct DataSection {
  int train = 1000;
  int val = 200;
  int test = 200;
  int abundant = 1000;
  int scarce = 50;
  int generated = 1000;
};

struct VaeSection {
  vaecsg::VaeConfig model;
  int pretrain_epochs = 100;
  // Passes over the scarce set, used for the fine-tune and for training on
  // the scarce set alone.
  int finetune_epochs = 1000;
};

struct FedSection {
  fedtune::FedConfig fed;
  std::string partition = "last-two-decoder-layers";
};

struct BudgetSection {
  double zeta_ue = 2.6e9;
  double zeta_bs = 3.4e9;
  double kappa_ue = 2.6e12;
  std::vector<double> gammas{1.0, 16.0};
  // T0 values at which the centralized baseline is evaluated.
  std::vector<int> cl_rounds{25, 50, 75, 100};
};

struct SweepSection {
  std::vector<int> bits{128, 512, 2048};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

struct AblationSection {
  std::vector<int> bits{512};
  std::vector<std::uint64_t> seeds{1};
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  ScenarioSection scenario;
  DataSection data;
  swtcan::SwtcanConfig swtcan;  // n_subcarriers and geometry follow scenario
  swtcan::TrainOptions train;
  VaeSection vae;
  FedSection fed;
  BudgetSection budget;
  fedtune::CentralOptions central;
  SweepSection sweep;
  AblationSection ablation;

  // Throws ConfigError naming the field.
  void validate() const;
  json to_json() const;
  static ExperimentConfig from_json(const json& j);
  // SHA-256 of the canonical JSON form.
  std::string hash() const;

  channelsim::ScenarioConfig scenario_config(const std::string& label) const;
  budget::CostModel cost_model(std::uint64_t d, std::uint64_t total, double gamma) const;
};

ExperimentConfig load_config(const std::filesystem::path& path);
// Applies "a.b.c=value" to a JSON document; value is parsed as JSON when
// possible and kept as a string otherwise.
void apply_override(json& doc, const std::string& assignment);

// Short hash of the SWTCAN architecture and optimizer settings, used to show
// that runs being compared share them.
std::string training_setup_hash(const swtcan::SwtcanConfig& model, const swtcan::TrainOptions& train);

}  // namespace csigpt::expcli
