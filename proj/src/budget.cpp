#include "csigpt/budget.hpp"

#include "csigpt/core.hpp"

#include <cmath>
#include <stdexcept>

namespace csigpt::budget {

void CostModel::validate() const {
  if (total_params == 0) throw ConfigError("budget.total_params", "must be > 0");
  if (d > total_params) throw ConfigError("budget.d", "cannot exceed total_params");
  if (n_subcarriers == 0) throw ConfigError("budget.n_subcarriers", "must be > 0");
  if (n_antennas == 0) throw ConfigError("budget.n_antennas", "must be > 0");
  if (!(zeta_ue > 0.0)) throw ConfigError("budget.zeta_ue", "must be > 0");
  if (!(zeta_bs > 0.0)) throw ConfigError("budget.zeta_bs", "must be > 0");
  if (!(kappa_ue > 0.0)) throw ConfigError("budget.kappa_ue", "must be > 0");
  if (!(gamma > 0.0)) throw ConfigError("budget.gamma", "must be > 0");
  if (samples_per_ue == 0) throw ConfigError("budget.samples_per_ue", "must be > 0");
  if (local_epochs == 0) throw ConfigError("budget.local_epochs", "must be > 0");
}

std::uint64_t fl_uplink_overhead(std::uint64_t rounds, std::uint64_t d) { return rounds * d; }

std::uint64_t cl_sample_cost(std::uint64_t n_subcarriers, std::uint64_t n_antennas) {
  return 2 * n_subcarriers * n_antennas;
}

std::uint64_t cl_samples_for_budget(std::uint64_t rounds, std::uint64_t d,
                                    std::uint64_t n_subcarriers, std::uint64_t n_antennas) {
  const std::uint64_t per_sample = cl_sample_cost(n_subcarriers, n_antennas);
  if (per_sample == 0) throw std::invalid_argument("cl_samples_for_budget: P * N_BS must be positive");
  return fl_uplink_overhead(rounds, d) / per_sample;
}

double fl_compute_time(std::uint64_t rounds, std::uint64_t samples_per_ue,
                       std::uint64_t local_epochs, double zeta_ue, double kappa_ue) {
  if (!(kappa_ue > 0.0)) throw std::invalid_argument("fl_compute_time: kappa_ue must be positive");
  return static_cast<double>(rounds) * static_cast<double>(samples_per_ue) *
         static_cast<double>(local_epochs) * zeta_ue / kappa_ue;
}

double cl_epochs_exact(double tau, double kappa_bs, std::uint64_t n_cl, double zeta_bs) {
  if (n_cl == 0) return 0.0;
  return tau * kappa_bs / (static_cast<double>(n_cl) * zeta_bs);
}

std::uint64_t cl_epochs_for_time(double tau, double kappa_bs, std::uint64_t n_cl,
                                 double zeta_bs, BudgetLedger* ledger) {
  if (n_cl == 0) {
    if (ledger) ledger->warn("N_CL = 0: centralized learning gets 0 epochs");
    return 0;
  }
  if (!(zeta_bs > 0.0)) throw std::invalid_argument("cl_epochs_for_time: zeta_bs must be positive");
  const long double x = static_cast<long double>(tau) * kappa_bs /
                        (static_cast<long double>(n_cl) * zeta_bs);
  // Products like 2 * 41.6e12 land a few ulps below an exact integer.
  return static_cast<std::uint64_t>(std::floor(x * (1.0L + 1e-12L)));
}

double trainable_fraction(std::uint64_t d, std::uint64_t total_params) {
  if (total_params == 0) throw std::invalid_argument("trainable_fraction: total is zero");
  return static_cast<double>(d) / static_cast<double>(total_params);
}

void BudgetLedger::add(std::string label, std::uint64_t uplink_reals, double model_seconds) {
  entries_.push_back({std::move(label), uplink_reals, model_seconds});
  uplink_ += uplink_reals;
  seconds_ += model_seconds;
}

BudgetPoint evaluate_budget(const CostModel& m, std::uint64_t rounds) {
  m.validate();
  BudgetPoint b;
  BudgetLedger ledger;
  b.rounds = rounds;
  b.gamma = m.gamma;
  b.fl_uplink = fl_uplink_overhead(rounds, m.d);
  b.cl_sample_cost = cl_sample_cost(m.n_subcarriers, m.n_antennas);
  b.n_cl = cl_samples_for_budget(rounds, m.d, m.n_subcarriers, m.n_antennas);
  b.cl_uplink = b.n_cl * b.cl_sample_cost;
  b.tau = fl_compute_time(rounds, m.samples_per_ue, m.local_epochs, m.zeta_ue, m.kappa_ue);
  b.k_cl_exact = cl_epochs_exact(b.tau, m.kappa_bs(), b.n_cl, m.zeta_bs);
  b.k_cl = cl_epochs_for_time(b.tau, m.kappa_bs(), b.n_cl, m.zeta_bs, &ledger);
  b.fraction = trainable_fraction(m.d, m.total_params);
  b.warnings = ledger.warnings();
  return b;
}

}  // namespace csigpt::budget
