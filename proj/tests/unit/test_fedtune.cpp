#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csigpt/fedtune.hpp"
#include "gradcheck.hpp"

#include <cmath>
#include <set>

using namespace csigpt;
using namespace csigpt::fedtune;

namespace {

// 0.5 * sum_i w_i (theta_i - c_i)^2 per sample, with c_i = Re h(0, i).
class Quadratic final : public FederatedModel {
 public:
  explicit Quadratic(Vector w) : w_(std::move(w)), theta_(Vector::Zero(w_.size())) {}
  Eigen::Index dim() const override { return w_.size(); }
  Vector trainable() const override { return theta_; }
  void set_trainable(const Vector& t) override { theta_ = t; }
  double loss_and_gradient(std::span<const ChannelSample> s, Vector& grad, Rng&) override {
    grad = Vector::Zero(dim());
    double loss = 0.0;
    for (const auto& x : s) {
      Vector r = theta_ - target(x);
      loss += 0.5 * r.dot(w_.cwiseProduct(r));
      grad += w_.cwiseProduct(r);
    }
    grad /= static_cast<double>(s.size());
    return loss / static_cast<double>(s.size());
  }
  double evaluate(std::span<const ChannelSample> s) const override {
    double loss = 0.0;
    for (const auto& x : s) {
      Vector r = theta_ - target(x);
      loss += 0.5 * r.dot(w_.cwiseProduct(r));
    }
    return loss / static_cast<double>(s.size());
  }
  std::unique_ptr<FederatedModel> clone() const override { return std::make_unique<Quadratic>(*this); }

  Vector target(const ChannelSample& x) const { return x.h.row(0).real().head(dim()).transpose(); }

 private:
  Vector w_;
  Vector theta_;
};

ChannelSample sample_with(const Vector& c) {
  ChannelSample s;
  s.h = CMatrix::Zero(1, c.size());
  s.h.row(0).real() = c.transpose();
  s.scenario_label = "toy";
  return s;
}

swtcan::SwtcanConfig toy_config() {
  swtcan::SwtcanConfig c;
  c.n_subcarriers = 8;
  c.geometry = {4, 4, 0.5};
  c.pilot_slots = 4;
  c.feedback_bits = 32;
  c.embed_dim = 8;
  c.window_size = 2;
  c.depths = {2, 2};
  c.heads = {1, 2};
  return c;
}

std::vector<ChannelSample> toy_data(int n, std::uint64_t seed) {
  auto s = channelsim::ScenarioConfig::preset("B-like");
  s.geometry = {4, 4, 0.5};
  s.n_subcarriers = 8;
  return channelsim::generate_dataset(s, n, seed);
}

}  // namespace

TEST_CASE("client sampling") {
  Rng rng(1);
  auto all = sample_clients(7, 1.0, rng);
  CHECK(all == std::vector<int>{0, 1, 2, 3, 4, 5, 6});
  auto s = sample_clients(600, 0.1, rng);
  CHECK(s.size() == 60);
  CHECK(std::set<int>(s.begin(), s.end()).size() == 60);
  CHECK(std::is_sorted(s.begin(), s.end()));
  Rng a(9), b(9);
  CHECK(sample_clients(600, 0.1, a) == sample_clients(600, 0.1, b));
  CHECK_THROWS(sample_clients(5, 0.1, rng));
  CHECK_THROWS(sample_clients(5, 0.0, rng));

  // Each client is chosen with probability 0.1.
  std::vector<int> hits(50, 0);
  for (int i = 0; i < 20000; ++i)
    for (int id : sample_clients(50, 0.1, rng)) ++hits[static_cast<std::size_t>(id)];
  for (int h : hits) CHECK(std::abs(h / 20000.0 - 0.1) < 0.012);
}

TEST_CASE("local update on a quadratic") {
  Vector w(5);
  w << 1.0, 2.0, 0.5, 3.0, 1.5;
  Quadratic model(w);
  Vector c(5);
  c << 0.3, -1.0, 2.0, 0.0, 0.7;
  ClientShard shard{0, {sample_with(c)}};
  Vector theta0(5);
  theta0 << 1.0, 1.0, -1.0, 0.5, 0.0;
  Rng rng(1);
  CHECK(local_update(model, theta0, shard, 3, 0.0, rng).isZero(0.0));
  Vector delta = local_update(model, theta0, shard, 1, 0.1, rng);
  Vector expected(5);
  for (int i = 0; i < 5; ++i) expected(i) = -0.1 * w(i) * (theta0(i) - c(i));
  CHECK((delta - expected).cwiseAbs().maxCoeff() < 1e-15);
  // Two steps: theta_2 - c = (1 - eta w)^2 (theta0 - c).
  Vector two = local_update(model, theta0, shard, 2, 0.1, rng);
  for (int i = 0; i < 5; ++i) {
    double f = (1 - 0.1 * w(i)) * (1 - 0.1 * w(i));
    CHECK(std::abs(two(i) - (f - 1.0) * (theta0(i) - c(i))) < 1e-15);
  }
}

TEST_CASE("aircomp aggregation") {
  Rng rng(2);
  std::vector<Vector> ds{Vector::LinSpaced(2, 1, 2), Vector::LinSpaced(2, 3, 4)};
  CHECK(aircomp_aggregate(ds, channelsim::kNoiseDisabled, rng) == Vector::LinSpaced(2, 2, 3));
  std::vector<Vector> one{Vector::LinSpaced(3, -1, 1)};
  CHECK(aircomp_aggregate(one, channelsim::kNoiseDisabled, rng) == one[0]);

  std::vector<Vector> many;
  for (int u = 0; u < 17; ++u) many.push_back(testing::random_matrix(40, 1, rng));
  Vector exact = Vector::Zero(40);
  for (const auto& d : many) exact += d;
  exact /= 17.0;
  CHECK((aircomp_aggregate(many, channelsim::kNoiseDisabled, rng) - exact).cwiseAbs().maxCoeff() <= 1e-12);

  std::vector<Vector> big{testing::random_matrix(100000, 1, rng), 3.0 * testing::random_matrix(100000, 1, rng)};
  const double target = (big[0].squaredNorm() + big[1].squaredNorm()) / 200000.0 / 100.0;
  Vector mean = 0.5 * (big[0] + big[1]);
  Vector noisy = aircomp_aggregate(big, 20.0, rng);
  const double measured = (noisy - mean).squaredNorm() / 100000.0;
  CHECK(std::abs(measured / target - 1.0) <= 0.05);
  std::vector<Vector> bad{Vector::Zero(2), Vector::Zero(3)};
  CHECK_THROWS_AS(aircomp_aggregate(bad, 20.0, rng), ShapeError);
}

TEST_CASE("server update scalar example") {
  FedConfig c;
  c.beta1 = 0.9;
  c.beta2 = 0.99;
  c.epsilon = 1e-300;  // effectively zero for this check
  c.eta = 1.7;
  for (bool literal : {false, true}) {
    c.literal_variance = literal;
    FedState s = FedState::init(Vector::Zero(1));
    Vector d(1);
    d << 0.1;
    server_update(s, d, c);
    CHECK(std::abs(s.m(0) - 0.01) <= 1e-12);
    CHECK(std::abs(s.v(0) - 1e-4) <= 1e-12);
    CHECK(std::abs(s.theta(0) - 1.7 * 1.0) <= 1e-12);
    CHECK(s.t == 1);
  }
  FedState z = FedState::init(Vector::Constant(3, 2.0));
  server_update(z, Vector::Zero(3), FedConfig{});
  CHECK(z.theta == Vector::Constant(3, 2.0));
  CHECK_THROWS_AS(server_update(z, Vector::Zero(2), FedConfig{}), ShapeError);
}

TEST_CASE("server variance is non-decreasing") {
  Rng rng(4);
  for (bool literal : {false, true}) {
    FedConfig c;
    c.literal_variance = literal;
    FedState s = FedState::init(Vector::Zero(6));
    for (int t = 0; t < 100; ++t) {
      Vector before = s.v;
      // Shrinking deltas make the EMA fall; v must not.
      server_update(s, testing::random_matrix(6, 1, rng) / (1.0 + t), c);
      CHECK((s.v.array() >= before.array()).all());
    }
  }
}

TEST_CASE("one-client noiseless run matches a hand-stepped reference") {
  Vector w(5);
  w << 1.0, 1.5, 0.8, 1.2, 2.0;
  Vector c(5);
  c << 0.5, -0.25, 1.0, 0.1, -0.6;
  Quadratic model(w);
  std::vector<ClientShard> shards{{0, {sample_with(c)}}};
  FedConfig cfg;
  cfg.n_ues = 1;
  cfg.participation = 1.0;
  cfg.local_epochs = 1;
  cfg.eta_l = 0.05;
  cfg.eta = 0.01;
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.9;
  cfg.rounds = 25;
  cfg.aircomp_snr_db = channelsim::kNoiseDisabled;
  std::vector<ChannelSample> eval{sample_with(c)};
  FedHistory h = run_federated_tuning(model, shards, cfg, eval);
  REQUIRE(h.rounds.size() == 25);

  // Independent scalar-by-scalar reference.
  double theta[5] = {0, 0, 0, 0, 0}, vh[5] = {0, 0, 0, 0, 0}, v[5] = {0, 0, 0, 0, 0};
  for (int t = 0; t < 25; ++t) {
    double loss = 0.0;
    for (int i = 0; i < 5; ++i) {
      double delta = -cfg.eta_l * w(i) * (theta[i] - c(i));
      vh[i] = 0.9 * vh[i] + 0.1 * delta * delta;
      v[i] = std::max(v[i], vh[i]);
      theta[i] += cfg.eta * delta / (std::sqrt(v[i]) + cfg.epsilon);
      loss += 0.5 * w(i) * (theta[i] - c(i)) * (theta[i] - c(i));
    }
    CHECK(std::abs(h.rounds[static_cast<std::size_t>(t)].nmse_db - channelsim::to_db(loss)) < 1e-8);
    CHECK(h.rounds[static_cast<std::size_t>(t)].uplink_reals_cum == static_cast<std::uint64_t>(5 * (t + 1)));
  }
  Vector final = model.trainable();
  for (int i = 0; i < 5; ++i) CHECK(std::abs(final(i) - theta[i]) <= 1e-10);
}

TEST_CASE("zero rounds leave the model unchanged") {
  Quadratic model(Vector::Ones(3));
  model.set_trainable(Vector::Constant(3, 0.25));
  FedConfig cfg;
  cfg.n_ues = 2;
  cfg.participation = 1.0;
  cfg.rounds = 0;
  std::vector<ClientShard> shards{{0, {sample_with(Vector::Ones(3))}}, {1, {sample_with(Vector::Zero(3))}}};
  FedHistory h = run_federated_tuning(model, shards, cfg, {});
  CHECK(h.rounds.empty());
  CHECK(model.trainable() == Vector::Constant(3, 0.25));
}

TEST_CASE("federated tuning on SWTCAN freezes everything outside the partition") {
  swtcan::Swtcan net(toy_config());
  auto part = swtcan::partition_params(net, "last-two-decoder-layers");
  SwtcanFederated fm(net, part);
  CHECK(fm.dim() == static_cast<Eigen::Index>(part.d));

  FedConfig cfg;
  cfg.n_ues = 4;
  cfg.participation = 0.5;
  cfg.local_epochs = 2;
  cfg.samples_per_ue = 2;
  cfg.rounds = 3;
  cfg.eta = 1e-2;
  cfg.eta_l = 1e-2;
  std::vector<ClientShard> shards;
  for (int u = 0; u < 4; ++u) shards.push_back({u, toy_data(2, 50 + static_cast<std::uint64_t>(u))});
  auto eval = toy_data(3, 99);

  FedHistory h = run_federated_tuning(fm, shards, cfg, eval);
  REQUIRE(h.rounds.size() == 3);
  for (const auto& r : h.rounds) CHECK(r.participants == 2);
  CHECK(h.rounds.back().uplink_reals_cum == 3 * part.d);

  const ParamSet& before = net.params();
  const ParamSet& after = fm.model().params();
  std::size_t changed = 0;
  for (const auto& name : part.frozen) CHECK(before.at(name).value == after.at(name).value);
  for (const auto& name : part.trainable) changed += before.at(name).value != after.at(name).value;
  CHECK(changed > 0);

  // Deterministic replay.
  SwtcanFederated again(net, part);
  FedHistory h2 = run_federated_tuning(again, shards, cfg, eval);
  for (std::size_t i = 0; i < h.rounds.size(); ++i) CHECK(h.rounds[i].nmse_db == h2.rounds[i].nmse_db);
  CHECK(again.trainable() == fm.trainable());
}

TEST_CASE("centralized baseline") {
  swtcan::Swtcan net(toy_config());
  auto names = net.params().names();
  Vector before = net.params().flatten(names);
  auto collected = toy_data(5, 7);
  auto eval = toy_data(3, 8);
  CentralHistory zero = run_centralized_baseline(net, collected, 0, eval);
  CHECK(zero.epochs.empty());
  CHECK(net.params().flatten(names) == before);
  CHECK(zero.uplink_reals == 2u * 8u * 16u * 5u);
  CHECK(zero.trainable_count == net.params().scalar_count());
  CHECK(zero.trainable_count == swtcan::partition_params(net, "all").d);

  CentralHistory two = run_centralized_baseline(net, collected, 2, eval);
  CHECK(two.epochs.size() == 2);
  Vector after = net.params().flatten(names);
  // Every tensor moves, not just a subset.
  std::size_t offset = 0;
  for (const auto& p : net.params().items()) {
    const auto n = static_cast<Eigen::Index>(p.value.size());
    CHECK((after.segment(static_cast<Eigen::Index>(offset), n) - before.segment(static_cast<Eigen::Index>(offset), n)).norm() > 0.0);
    offset += static_cast<std::size_t>(n);
  }
}

TEST_CASE("config validation") {
  FedConfig c;
  CHECK_NOTHROW(c.validate());
  c.participation = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FedConfig{};
  c.beta2 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FedConfig{};
  c.epsilon = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = FedConfig{};
  c.local_epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
