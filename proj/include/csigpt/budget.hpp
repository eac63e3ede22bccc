#pragma once

// Uplink overhead and modeled compute-time accounting for federated tuning
// versus centralized learning (CL). Fractional sample and epoch counts are
// floored.

#include <cstdint>
#include <string>
#include <vector>

namespace csigpt::budget {

struct CostModel {
  std::uint64_t d = 0;             // trainable scalars
  std::uint64_t total_params = 0;  // all scalars
  std::uint64_t n_subcarriers = 256;
  std::uint64_t n_antennas = 256;
  double zeta_ue = 2.6e9;    // FLOPs per local sample-epoch
  double zeta_bs = 3.4e9;    // FLOPs per central sample-epoch
  double kappa_ue = 2.6e12;  // FLOP/s
  double gamma = 1.0;        // kappa_bs = gamma * kappa_ue
  std::uint64_t samples_per_ue = 10;
  std::uint64_t local_epochs = 2;

  double kappa_bs() const { return gamma * kappa_ue; }
  void validate() const;
};

// T0 * d reals.
std::uint64_t fl_uplink_overhead(std::uint64_t rounds, std::uint64_t d);
// 2 * P * N_BS reals for one fed-back sample.
std::uint64_t cl_sample_cost(std::uint64_t n_subcarriers, std::uint64_t n_antennas);
// floor(T0 * d / (2 P N_BS)).
std::uint64_t cl_samples_for_budget(std::uint64_t rounds, std::uint64_t d,
                                    std::uint64_t n_subcarriers, std::uint64_t n_antennas);
// T0 * N_FL * K * zeta_ue / kappa_ue seconds.
double fl_compute_time(std::uint64_t rounds, std::uint64_t samples_per_ue,
                       std::uint64_t local_epochs, double zeta_ue, double kappa_ue);
// tau * kappa_bs / (N_CL * zeta_bs) before flooring.
double cl_epochs_exact(double tau, double kappa_bs, std::uint64_t n_cl, double zeta_bs);

class BudgetLedger;

// floor(cl_epochs_exact). N_CL = 0 yields 0 and, when a ledger is given, a
// warning entry.
std::uint64_t cl_epochs_for_time(double tau, double kappa_bs, std::uint64_t n_cl,
                                 double zeta_bs, BudgetLedger* ledger = nullptr);

double trainable_fraction(std::uint64_t d, std::uint64_t total_params);

class BudgetLedger {
 public:
  struct Entry {
    std::string label;
    std::uint64_t uplink_reals = 0;
    double model_seconds = 0.0;
  };

  void add(std::string label, std::uint64_t uplink_reals, double model_seconds);
  void warn(std::string message) { warnings_.push_back(std::move(message)); }

  std::uint64_t uplink_reals_cum() const { return uplink_; }
  double wall_model_seconds() const { return seconds_; }
  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

 private:
  std::vector<Entry> entries_;
  std::vector<std::string> warnings_;
  std::uint64_t uplink_ = 0;
  double seconds_ = 0.0;
};

// Everything the FL-vs-CL comparison needs for one (T0, gamma) point.
struct BudgetPoint {
  std::uint64_t rounds = 0;
  double gamma = 1.0;
  std::uint64_t fl_uplink = 0;
  std::uint64_t cl_sample_cost = 0;
  std::uint64_t n_cl = 0;
  std::uint64_t cl_uplink = 0;
  double tau = 0.0;
  double k_cl_exact = 0.0;
  std::uint64_t k_cl = 0;
  double fraction = 0.0;
  std::vector<std::string> warnings;
};

BudgetPoint evaluate_budget(const CostModel& model, std::uint64_t rounds);

inline constexpr const char* kFloorRule =
    "N_CL and K_CL are floored to integers; N_CL = 0 gives K_CL = 0";

}  // namespace csigpt::budget
