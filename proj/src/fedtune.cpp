#include "csigpt/fedtune.hpp"

#include "csigpt/budget.hpp"
#include "csigpt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace csigpt::fedtune {

void FedConfig::validate() const {
  if (n_ues < 1) throw ConfigError("fed.n_ues", "must be >= 1");
  if (!(participation > 0.0 && participation <= 1.0)) throw ConfigError("fed.participation", "must be in (0, 1]");
  if (std::floor(n_ues * participation) < 1.0) throw ConfigError("fed.participation", "selects no clients");
  if (local_epochs < 1) throw ConfigError("fed.local_epochs", "must be >= 1");
  if (!(eta_l >= 0.0)) throw ConfigError("fed.eta_l", "must be >= 0");
  if (!(eta >= 0.0)) throw ConfigError("fed.eta", "must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("fed.beta1", "must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("fed.beta2", "must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("fed.epsilon", "must be > 0");
  if (rounds < 0) throw ConfigError("fed.rounds", "must be >= 0");
  if (samples_per_ue < 1) throw ConfigError("fed.samples_per_ue", "must be >= 1");
  if (std::isnan(aircomp_snr_db)) throw ConfigError("fed.aircomp_snr_db", "must be a number");
}

FedState FedState::init(const Vector& theta0) {
  FedState s;
  s.theta = theta0;
  s.m = Vector::Zero(theta0.size());
  s.v = Vector::Zero(theta0.size());
  s.v_hat = Vector::Zero(theta0.size());
  return s;
}

SwtcanFederated::SwtcanFederated(const swtcan::Swtcan& model, swtcan::ParamPartition partition,
                                 std::uint64_t eval_seed)
    : model_(model), partition_(std::move(partition)), eval_seed_(eval_seed) {
  for (auto& p : model_.params().items()) p.requires_grad = false;
  model_.params().set_requires_grad(partition_.trainable);
}

Eigen::Index SwtcanFederated::dim() const { return static_cast<Eigen::Index>(partition_.d); }

Vector SwtcanFederated::trainable() const { return model_.params().flatten(partition_.trainable); }

void SwtcanFederated::set_trainable(const Vector& theta) {
  model_.params().assign(partition_.trainable, theta);
}

double SwtcanFederated::loss_and_gradient(std::span<const ChannelSample> samples, Vector& grad,
                                          Rng& rng) {
  if (samples.empty()) throw std::invalid_argument("loss_and_gradient: no samples");
  model_.params().zero_grad();
  const double w = 1.0 / static_cast<double>(samples.size());
  double total = 0.0;
  for (const auto& s : samples) total += model_.accumulate_gradients(s, rng, w);
  grad = model_.params().flatten_grad(partition_.trainable);
  return total * w;
}

double SwtcanFederated::evaluate(std::span<const ChannelSample> samples) const {
  return swtcan::evaluate_nmse(model_, samples, eval_seed_);
}

std::unique_ptr<FederatedModel> SwtcanFederated::clone() const {
  return std::make_unique<SwtcanFederated>(*this);
}

std::vector<int> sample_clients(int n_ues, double participation, Rng& rng) {
  if (n_ues < 1 || !(participation > 0.0 && participation <= 1.0) ||
      std::floor(n_ues * participation) < 1.0) {
    throw std::invalid_argument("sample_clients: selection would be empty");
  }
  const auto k = static_cast<std::size_t>(std::llround(n_ues * participation));
  std::vector<int> ids(static_cast<std::size_t>(n_ues));
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng() % (ids.size() - i));
    std::swap(ids[i], ids[j]);
  }
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

Vector local_update(FederatedModel& model, const Vector& theta0, const ClientShard& shard,
                    int local_epochs, double eta_l, Rng& rng) {
  if (shard.local_samples.empty()) throw std::invalid_argument("local_update: empty shard");
  if (theta0.size() != model.dim()) throw ShapeError("local_update: theta dimension mismatch");
  Vector theta = theta0;
  Vector grad;
  for (int k = 0; k < local_epochs; ++k) {
    model.set_trainable(theta);
    const double loss = model.loss_and_gradient(shard.local_samples, grad, rng);
    if (!std::isfinite(loss) || !grad.allFinite()) {
      throw DivergenceError("local update for UE " + std::to_string(shard.ue_id) + " is not finite");
    }
    theta -= eta_l * grad;
  }
  return theta - theta0;
}

Vector aircomp_aggregate(std::span<const Vector> deltas, double snr_db, Rng& rng) {
  if (deltas.empty()) throw std::invalid_argument("aircomp_aggregate: no deltas");
  const Eigen::Index d = deltas.front().size();
  Vector sum = Vector::Zero(d);
  double power = 0.0;
  for (const auto& delta : deltas) {
    if (delta.size() != d) throw ShapeError("aircomp_aggregate: delta dimension mismatch");
    sum += delta;
    power += delta.squaredNorm();
  }
  Vector out = sum / static_cast<double>(deltas.size());
  if (std::isinf(snr_db) && snr_db > 0) return out;
  const double signal = d > 0 ? power / static_cast<double>(d * static_cast<Eigen::Index>(deltas.size())) : 0.0;
  const double sigma = std::sqrt(signal / std::pow(10.0, snr_db / 10.0));
  for (Eigen::Index i = 0; i < d; ++i) out(i) += sigma * standard_normal(rng);
  return out;
}

void server_update(FedState& s, const Vector& delta, const FedConfig& c) {
  if (delta.size() != s.theta.size()) throw ShapeError("server_update: delta dimension mismatch");
  if (!delta.allFinite()) throw DivergenceError("server_update: aggregated delta is not finite");
  s.m = c.beta1 * s.m + (1.0 - c.beta1) * delta;
  const Vector sq = delta.array().square().matrix();
  if (c.literal_variance) {
    s.v = s.v + (1.0 - c.beta2) * sq;
  } else {
    s.v_hat = c.beta2 * s.v_hat + (1.0 - c.beta2) * sq;
    s.v = s.v.cwiseMax(s.v_hat);
  }
  Vector step = c.eta * (s.m.array() / (s.v.array().sqrt() + c.epsilon)).matrix();
  if (!step.allFinite()) throw DivergenceError("server_update: step is not finite");
  s.theta += step;
  ++s.t;
}

FedHistory run_federated_tuning(FederatedModel& model, std::span<const ClientShard> shards,
                                const FedConfig& config,
                                std::span<const ChannelSample> eval_set,
                                const FedRunOptions& options) {
  config.validate();
  if (static_cast<int>(shards.size()) != config.n_ues) {
    throw ConfigError("fed.n_ues", "shard count does not match the number of UEs");
  }
  FedHistory history;
  history.initial_nmse_db = eval_set.empty() ? 0.0 : channelsim::to_db(model.evaluate(eval_set));
  FedState state = FedState::init(model.trainable());
  budget::BudgetLedger ledger;
  Rng select_rng(derive_seed(config.seed, 0xc11e));
  Rng noise_rng(derive_seed(config.seed, 0xa1c0));
  auto worker = model.clone();
  for (int t = 1; t <= config.rounds; ++t) {
    const std::vector<int> chosen = sample_clients(config.n_ues, config.participation, select_rng);
    std::vector<Vector> deltas;
    RoundRecord rec;
    rec.round = t;
    for (int ue : chosen) {
      Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(ue)));
      try {
        deltas.push_back(local_update(*worker, state.theta, shards[static_cast<std::size_t>(ue)],
                                      config.local_epochs, config.eta_l, rng));
      } catch (const DivergenceError&) {
        ++rec.dropped;
      }
    }
    rec.participants = static_cast<int>(deltas.size());
    if (!deltas.empty()) {
      server_update(state, aircomp_aggregate(deltas, config.aircomp_snr_db, noise_rng), config);
      ledger.add("round " + std::to_string(t), static_cast<std::uint64_t>(state.theta.size()),
                 options.seconds_per_round);
    } else {
      ledger.add("round " + std::to_string(t) + " (no participants)", 0, options.seconds_per_round);
    }
    model.set_trainable(state.theta);
    rec.nmse_db = eval_set.empty() ? 0.0 : channelsim::to_db(model.evaluate(eval_set));
    rec.uplink_reals_cum = ledger.uplink_reals_cum();
    rec.wall_model_seconds = ledger.wall_model_seconds();
    history.rounds.push_back(rec);
  }
  return history;
}

CentralHistory run_centralized_baseline(swtcan::Swtcan& model,
                                        std::span<const ChannelSample> collected, int k_cl,
                                        std::span<const ChannelSample> eval_set,
                                        const CentralOptions& options) {
  if (k_cl < 0) throw std::invalid_argument("run_centralized_baseline: K_CL must be >= 0");
  if (options.batch_size < 1) throw ConfigError("central.batch_size", "must be >= 1");
  CentralHistory h;
  const auto& cfg = model.config();
  h.uplink_reals = budget::cl_sample_cost(static_cast<std::uint64_t>(cfg.n_subcarriers),
                                          static_cast<std::uint64_t>(cfg.n_antennas())) *
                   collected.size();
  ParamSet& params = model.params();
  for (auto& p : params.items()) p.requires_grad = true;
  h.trainable_count = params.scalar_count();
  auto eval = [&] {
    return eval_set.empty() ? 0.0 : channelsim::to_db(swtcan::evaluate_nmse(model, eval_set, options.eval_seed));
  };
  h.initial_nmse_db = eval();
  if (k_cl == 0 || collected.empty()) return h;

  Adam adam;
  std::vector<std::size_t> order(collected.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(options.seed, 0x5eed));
  const long n = static_cast<long>(collected.size());
  for (int epoch = 1; epoch <= k_cl; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    for (long b0 = 0; b0 < n; b0 += options.batch_size) {
      const long b1 = std::min(n, b0 + options.batch_size);
      params.zero_grad();
      const double w = 1.0 / static_cast<double>(b1 - b0);
      for (long k = b0; k < b1; ++k) {
        Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(k)));
        model.accumulate_gradients(collected[order[static_cast<std::size_t>(k)]], rng, w);
      }
      adam.step(params, options.learning_rate);
      model.project_pilot();
    }
    h.epochs.push_back({epoch, eval()});
  }
  return h;
}

}  // namespace csigpt::fedtune
