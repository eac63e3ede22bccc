// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails. Oracles here are written against the public API and
// recompute expected values independently.

#include "csigpt/budget.hpp"
#include "csigpt/channelsim.hpp"
#include "csigpt/fedtune.hpp"
#include "csigpt/metrics.hpp"
#include "csigpt/pipelines.hpp"
#include "csigpt/swtcan.hpp"
#include "csigpt/vaecsg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

using namespace csigpt;
namespace fs = std::filesystem;
using expcli::ExperimentConfig;
using channelsim::ChannelSample;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os.precision(prec);
  os << x;
  return os.str();
}

std::string joined(const std::vector<std::string>& parts) {
  std::string out;
  for (const auto& p : parts) out += (out.empty() ? "" : "; ") + p;
  return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool close_rel(double a, double b, double rtol, double atol) {
  return std::abs(a - b) <= rtol * std::max(std::abs(a), std::abs(b)) + atol;
}

double central_difference(const std::function<double()>& f, double& x, double h = 1e-6) {
  const double saved = x;
  x = saved + h;
  const double fp = f();
  x = saved - h;
  const double fm = f();
  x = saved;
  return (fp - fm) / (2.0 * h);
}

Matrix gaussian_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = s * standard_normal(rng);
  return m;
}

CMatrix gaussian_cmatrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  CMatrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = Complex(standard_normal(rng), standard_normal(rng)) * std::sqrt(0.5);
  return m;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Toy setting shared by the trend criteria: 16 subcarriers, 4x4 array, 4
// pilot slots, small Swin stages.
ExperimentConfig toy_experiment() {
  ExperimentConfig c;
  c.seed = 1;
  c.scenario.n_subcarriers = 16;
  c.scenario.geometry = {4, 4, 0.5};
  c.swtcan.n_subcarriers = 16;
  c.swtcan.geometry = {4, 4, 0.5};
  c.swtcan.pilot_slots = 4;
  c.swtcan.feedback_bits = 512;
  c.swtcan.embed_dim = 16;
  c.swtcan.window_size = 4;
  c.swtcan.depths = {2, 2};
  c.swtcan.heads = {2, 4};
  c.swtcan.patch_size = 2;
  c.train.epochs = 20;
  c.data.train = 600;
  c.data.val = 200;
  c.data.test = 200;
  c.data.abundant = 1000;
  c.data.scarce = 50;
  c.data.generated = 1000;
  c.vae.pretrain_epochs = 100;
  c.vae.finetune_epochs = 1000;
  c.fed.fed.eta = 5e-3;
  c.fed.fed.rounds = 100;
  c.budget.cl_rounds = {25, 50, 75, 100};
  c.budget.gammas = {1.0, 16.0};
  c.sweep.bits = {128, 512, 2048};
  c.sweep.seeds = {1, 2, 3};
  c.ablation.bits = {512};
  c.ablation.seeds = {1, 2, 3};
  return c;
}

const fs::path kRunDir = "acceptance_runs";

// Shared between the ablation and the federated comparison.
std::shared_ptr<swtcan::Swtcan> g_pretrained;

Outcome dft_roundtrip() {
  const channelsim::ArrayGeometry g{8, 8, 0.5};
  auto scen = channelsim::ScenarioConfig::preset("A-like");
  scen.geometry = g;
  scen.n_subcarriers = 32;
  Rng rng(101);
  double worst_rt = 0.0, worst_norm = 0.0;
  for (int i = 0; i < 100; ++i) {
    CMatrix h = channelsim::generate_channel(scen, rng);
    CMatrix a = channelsim::to_angular(h, g);
    CMatrix back = channelsim::from_angular(a, g);
    worst_rt = std::max(worst_rt, (back - h).norm() / h.norm());
    worst_norm = std::max(worst_norm, std::abs(a.norm() - h.norm()) / h.norm());
  }
  return {worst_rt <= 1e-10 && worst_norm <= 1e-10,
          "max roundtrip rel err " + fmt(worst_rt, 3) + ", max norm rel err " + fmt(worst_norm, 3)};
}

Outcome quantizer_bound() {
  std::vector<std::string> parts;
  bool ok = true;
  const int steps = 10000;
  for (int b : {1, 2, 4}) {
    Vector x(steps + 1);
    for (int i = 0; i <= steps; ++i) x(i) = static_cast<double>(i) / steps;
    const Vector back = swtcan::dequantize(swtcan::quantize(x, b), b);
    const double worst = (back - x).cwiseAbs().maxCoeff();
    const double bound = std::ldexp(1.0, -(b + 1));
    ok = ok && worst <= bound;
    parts.push_back("b=" + std::to_string(b) + " sup " + fmt(worst) + " <= " + fmt(bound));
  }
  return {ok, joined(parts)};
}

double smooth_swtcan_loss(swtcan::Swtcan& model, const ChannelSample& s, const CMatrix& noise, bool backward) {
  ag::Tape tape(backward);
  ag::Var y = model.build_observation(tape, s.h, noise);
  ag::Var out = model.build_reconstructor(tape, model.build_compressor(tape, y));
  ag::Var diff = ag::sub(out, tape.constant(swtcan::to_real_stack(s.h)));
  ag::Var loss = ag::scale(ag::sum_squares(diff), 1.0 / s.h.squaredNorm());
  if (backward) tape.backward(loss);
  return loss.scalar();
}

template <class LossFn>
std::pair<int, int> check_coordinates(ParamSet& params, LossFn loss, std::uint64_t seed, int extra) {
  params.zero_grad();
  loss(true);
  auto& items = params.items();
  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  Rng pick(seed);
  for (std::size_t k = 0; k < items.size(); ++k)
    coords.emplace_back(k, static_cast<Eigen::Index>(pick() % static_cast<std::uint64_t>(items[k].value.size())));
  for (int i = 0; i < extra; ++i) {
    std::size_t k = pick() % items.size();
    coords.emplace_back(k, static_cast<Eigen::Index>(pick() % static_cast<std::uint64_t>(items[k].value.size())));
  }
  int bad = 0;
  for (auto [k, i] : coords) {
    const double analytic = items[k].grad.data()[i];
    const double fd = central_difference([&] { return loss(false); }, items[k].value.data()[i]);
    if (!close_rel(analytic, fd, 1e-3, 1e-8)) ++bad;
  }
  return {static_cast<int>(coords.size()), bad};
}

Outcome gradient_checks() {
  const auto cfg = toy_experiment();
  swtcan::SwtcanConfig sc = cfg.swtcan;
  sc.feedback_bits = 128;
  swtcan::Swtcan model(sc);
  auto scen = cfg.scenario_config("B-like");
  const ChannelSample s = channelsim::generate_dataset(scen, 1, 17).front();
  Rng nrng(18);
  const CMatrix noise = 0.05 * gaussian_cmatrix(sc.n_subcarriers, sc.pilot_slots, nrng);
  auto [n1, bad1] = check_coordinates(
      model.params(), [&](bool bw) { return smooth_swtcan_loss(model, s, noise, bw); }, 31, 40);

  vaecsg::VaeConfig vc;
  vc.latent_dim = 8;
  vc.hidden = {64, 32};
  vaecsg::Vae vae(vc, sc.n_subcarriers, sc.n_antennas());
  auto data = channelsim::generate_dataset(scen, 3, 19);
  vae.set_data_scale(1.0 / std::sqrt(channelsim::mean_frobenius_sq(data)));
  const Matrix x = vae.flatten_batch(data);
  Rng erng(20);
  const Matrix eps = gaussian_matrix(3, vc.latent_dim, erng);
  auto [n2, bad2] = check_coordinates(
      vae.params(),
      [&](bool bw) {
        ag::Tape tape(bw);
        ag::Var l = vae.build_loss(tape, x, eps);
        if (bw) tape.backward(l);
        return l.scalar();
      },
      32, 40);
  return {n1 >= 50 && n2 >= 50 && bad1 == 0 && bad2 == 0,
          "SWTCAN " + std::to_string(n1 - bad1) + "/" + std::to_string(n1) + ", VAE " +
              std::to_string(n2 - bad2) + "/" + std::to_string(n2) + " coordinates within rtol 1e-3"};
}

double log_normal(const Vector& x, const Vector& m, const Vector& logvar) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x(i) - m(i);
    s += -0.5 * (std::log(2.0 * std::numbers::pi) + logvar(i) + d * d / std::exp(logvar(i)));
  }
  return s;
}

Outcome kl_oracle() {
  Rng rng(9);
  int within = 0;
  double worst_z = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    vaecsg::LatentStats s{gaussian_matrix(4, 1, rng), gaussian_matrix(4, 1, rng, 0.7)};
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
      Vector z(4);
      for (int j = 0; j < 4; ++j) z(j) = s.mu(j) + std::exp(0.5 * s.logvar(j)) * standard_normal(rng);
      const double r = log_normal(z, s.mu, s.logvar) - log_normal(z, Vector::Zero(4), Vector::Zero(4));
      sum += r;
      sum_sq += r * r;
    }
    const double mc = sum / n;
    const double se = std::sqrt((sum_sq / n - mc * mc) / n);
    const double z = std::abs(mc - vaecsg::kl_divergence(s)) / se;
    worst_z = std::max(worst_z, z);
    if (z <= 3.0) ++within;
  }
  return {within == 20, std::to_string(within) + "/20 within 3 SE, max |z| " + fmt(worst_z, 3)};
}

class Quadratic final : public fedtune::FederatedModel {
 public:
  Quadratic(Vector w, Vector c) : w_(std::move(w)), c_(std::move(c)), theta_(Vector::Zero(w_.size())) {}
  Eigen::Index dim() const override { return w_.size(); }
  Vector trainable() const override { return theta_; }
  void set_trainable(const Vector& t) override { theta_ = t; }
  double loss_and_gradient(std::span<const ChannelSample>, Vector& grad, Rng&) override {
    grad = w_.cwiseProduct(theta_ - c_);
    return value();
  }
  double evaluate(std::span<const ChannelSample>) const override { return value(); }
  std::unique_ptr<fedtune::FederatedModel> clone() const override { return std::make_unique<Quadratic>(*this); }

 private:
  double value() const { return 0.5 * (theta_ - c_).dot(w_.cwiseProduct(theta_ - c_)); }
  Vector w_, c_, theta_;
};

Outcome fedams_oracle() {
  fedtune::FedConfig c;
  c.beta1 = 0.9;
  c.beta2 = 0.99;
  c.epsilon = 1e-300;
  c.eta = 0.37;
  fedtune::FedState s = fedtune::FedState::init(Vector::Zero(1));
  fedtune::server_update(s, Vector::Constant(1, 0.1), c);
  const double e_m = std::abs(s.m(0) - 0.01);
  const double e_v = std::abs(s.v(0) - 1e-4);
  const double e_step = std::abs(s.theta(0) - 0.37 * 1.0);
  const bool scalar_ok = e_m <= 1e-12 && e_v <= 1e-12 && e_step <= 1e-12;

  Vector w(5), target(5);
  w << 1.0, 1.5, 0.8, 1.2, 2.0;
  target << 0.5, -0.25, 1.0, 0.1, -0.6;
  Quadratic model(w, target);
  ChannelSample dummy;
  dummy.h = CMatrix::Zero(1, 1);
  std::vector<fedtune::ClientShard> shards{{0, {dummy}}};
  fedtune::FedConfig f;
  f.n_ues = 1;
  f.participation = 1.0;
  f.local_epochs = 3;
  f.eta_l = 0.05;
  f.eta = 0.02;
  f.beta1 = 0.9;
  f.beta2 = 0.99;
  f.rounds = 40;
  f.aircomp_snr_db = channelsim::kNoiseDisabled;
  fedtune::run_federated_tuning(model, shards, f, {});
  const Vector got = model.trainable();

  double theta[5] = {}, m[5] = {}, vh[5] = {}, v[5] = {};
  for (int t = 0; t < f.rounds; ++t) {
    for (int i = 0; i < 5; ++i) {
      double local = theta[i];
      for (int k = 0; k < f.local_epochs; ++k) local -= f.eta_l * w(i) * (local - target(i));
      const double delta = local - theta[i];
      m[i] = f.beta1 * m[i] + (1.0 - f.beta1) * delta;
      vh[i] = f.beta2 * vh[i] + (1.0 - f.beta2) * delta * delta;
      v[i] = std::max(v[i], vh[i]);
      theta[i] += f.eta * m[i] / (std::sqrt(v[i]) + f.epsilon);
    }
  }
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) worst = std::max(worst, std::abs(got(i) - theta[i]));
  return {scalar_ok && worst <= 1e-10,
          "scalar errors m " + fmt(e_m, 2) + " v " + fmt(e_v, 2) + " step " + fmt(e_step, 2) +
              "; 5-parameter stepper max err " + fmt(worst, 3)};
}

Outcome aircomp_check() {
  Rng rng(44);
  std::vector<Vector> deltas;
  for (int u = 0; u < 6; ++u) deltas.push_back(gaussian_matrix(1000, 1, rng, 0.5 + u));
  Vector exact = Vector::Zero(1000);
  for (const auto& d : deltas) exact += d;
  exact /= 6.0;
  const double mean_err =
      (fedtune::aircomp_aggregate(deltas, channelsim::kNoiseDisabled, rng) - exact).cwiseAbs().maxCoeff();

  const Eigen::Index n = 100000;
  std::vector<Vector> big{gaussian_matrix(n, 1, rng), gaussian_matrix(n, 1, rng, 2.0),
                          gaussian_matrix(n, 1, rng, 0.3)};
  double power = 0.0;
  Vector mean = Vector::Zero(n);
  for (const auto& d : big) {
    power += d.squaredNorm();
    mean += d;
  }
  mean /= 3.0;
  const double snr_db = 20.0;
  const double target = power / (3.0 * static_cast<double>(n)) / std::pow(10.0, snr_db / 10.0);
  const double measured = (fedtune::aircomp_aggregate(big, snr_db, rng) - mean).squaredNorm() / static_cast<double>(n);
  const double rel = std::abs(measured / target - 1.0);
  return {mean_err <= 1e-12 && rel <= 0.05,
          "noiseless max err " + fmt(mean_err, 3) + ", noise power rel err " + fmt(rel, 3)};
}

Outcome budget_arithmetic() {
  std::ostringstream os;
  bool ok = true;
  auto expect = [&](const std::string& what, auto got, auto want) {
    const bool good = got == want;
    ok = ok && good;
    os << what << " " << got << (good ? "" : " (want " + std::to_string(want) + ")") << "; ";
  };
  const std::uint64_t d = 3617280, total = 32623524;
  expect("cost", budget::cl_sample_cost(256, 256), std::uint64_t{131072});
  expect("N_CL", budget::cl_samples_for_budget(100, d, 256, 256), std::uint64_t{2759});
  budget::CostModel m;
  m.d = d;
  m.total_params = total;
  m.gamma = 16.0;
  const auto p = budget::evaluate_budget(m, 100);
  // 100 rounds * 10 samples * 2 local epochs * 2.6e9 FLOP / 2.6e12 FLOP/s
  const bool tau_ok = p.tau == 2.0;
  ok = ok && tau_ok;
  os << "tau " << p.tau << "; ";
  expect("K_CL", p.k_cl, std::uint64_t{8});
  const double frac = budget::trainable_fraction(d, total);
  const bool frac_ok = std::abs(frac - 0.1109) <= 1e-4;
  ok = ok && frac_ok;
  os << "fraction " << fmt(frac, 6);
  return {ok, os.str()};
}

Outcome bits_trend() {
  ExperimentConfig c = toy_experiment();
  fs::create_directories(kRunDir);
  expcli::MetricsWriter mw(kRunDir / "sweep.jsonl", c.hash(), "acceptance sweep");
  const auto rep = expcli::run_bits_sweep(c, &mw);
  std::ostringstream os;
  os << "median best val dB:";
  for (std::size_t i = 0; i < rep.bits.size(); ++i) os << " B" << rep.bits[i] << " " << fmt(rep.median_db[i]);
  bool mono = true;
  for (std::size_t i = 1; i < rep.median_db.size(); ++i) mono = mono && rep.median_db[i] <= rep.median_db[i - 1];
  return {mono && rep.non_increasing, os.str()};
}

Outcome ablation_trend() {
  ExperimentConfig c = toy_experiment();
  c.train.epochs = 15;
  fs::create_directories(kRunDir);
  expcli::MetricsWriter mw(kRunDir / "ablation.jsonl", c.hash(), "acceptance ablation");
  std::vector<double> a, b, sc, pr;
  bool fair = true;
  for (std::uint64_t seed : c.ablation.seeds) {
    auto rep = expcli::run_pretraining_ablation(c, 512, seed, &mw);
    fair = fair && rep.fair();
    for (const auto& s : rep.schemes) {
      if (!s.ok) return {false, s.label + " failed: " + s.error};
    }
    a.push_back(rep.scheme("Scheme A").test_nmse_db);
    b.push_back(rep.scheme("Scheme B").test_nmse_db);
    sc.push_back(rep.scheme("Scheme C").test_nmse_db);
    pr.push_back(rep.scheme("Proposed").test_nmse_db);
    if (seed == c.seed) g_pretrained = rep.scheme("Proposed").model;
  }
  const double ma = expcli::median(a), mb = expcli::median(b), mc = expcli::median(sc), mp = expcli::median(pr);
  const bool ok = fair && mp <= mc && mc <= mb && mp <= mb - 1.0;
  return {ok, "median test dB: A " + fmt(ma) + ", B " + fmt(mb) + ", C " + fmt(mc) + ", Proposed " + fmt(mp)};
}

Outcome fl_vs_cl_trend() {
  if (!g_pretrained) return {false, "no pretrained model (ablation did not complete)"};
  ExperimentConfig c = toy_experiment();
  fs::create_directories(kRunDir);
  expcli::MetricsWriter mw(kRunDir / "fl_vs_cl.jsonl", c.hash(), "acceptance fl-vs-cl");
  const auto rep = expcli::run_fl_vs_cl(c, *g_pretrained, &mw);
  double fl_best = rep.initial_nmse_db;
  for (const auto& f : rep.fl) fl_best = std::min(fl_best, f.nmse_db);
  std::ostringstream os;
  os << "d " << rep.d << ", start " << fmt(rep.initial_nmse_db) << " dB, FL best " << fmt(fl_best) << " dB";
  bool ok = false;
  for (const auto& curve : rep.cl) {
    const auto& last = curve.points.back();
    os << "; gamma " << curve.gamma << ": K_CL " << last.k_cl << " (" << fmt(last.k_cl_exact, 3) << "), N_CL "
       << last.n_cl << ", CL final " << fmt(curve.final_nmse_db()) << " dB, ratio ";
    if (curve.uplink_ratio) {
      os << fmt(*curve.uplink_ratio, 3) << " at round " << curve.fl_match->round;
    } else {
      os << "n/a (not reached)";
    }
    if (curve.gamma == 1.0) ok = curve.uplink_ratio && *curve.uplink_ratio < 1.0;
  }
  return {ok, os.str()};
}

ExperimentConfig reduced_experiment() {
  ExperimentConfig c = toy_experiment();
  c.train.epochs = 2;
  c.data.train = 40;
  c.data.val = 20;
  c.data.test = 20;
  c.data.abundant = 40;
  c.data.scarce = 10;
  c.data.generated = 40;
  c.vae.pretrain_epochs = 3;
  c.vae.finetune_epochs = 5;
  c.fed.fed.rounds = 4;
  c.fed.fed.n_ues = 10;
  c.fed.fed.participation = 0.3;
  c.budget.cl_rounds = {2, 4};
  c.sweep.bits = {128, 512};
  c.sweep.seeds = {1};
  return c;
}

void reduced_pipelines(const fs::path& dir) {
  const ExperimentConfig c = reduced_experiment();
  fs::create_directories(dir);
  {
    expcli::MetricsWriter mw(dir / "sweep.jsonl", c.hash(), "sweep");
    expcli::run_bits_sweep(c, &mw);
  }
  std::shared_ptr<swtcan::Swtcan> proposed;
  {
    expcli::MetricsWriter mw(dir / "ablation.jsonl", c.hash(), "ablation");
    proposed = expcli::run_pretraining_ablation(c, 512, c.seed, &mw).scheme("Proposed").model;
  }
  expcli::MetricsWriter mw(dir / "fl_vs_cl.jsonl", c.hash(), "fl-vs-cl");
  expcli::run_fl_vs_cl(c, *proposed, &mw);
}

Outcome determinism() {
  const fs::path r1 = kRunDir / "determinism_1", r2 = kRunDir / "determinism_2";
  fs::remove_all(r1);
  fs::remove_all(r2);
  reduced_pipelines(r1);
  reduced_pipelines(r2);
  bool ok = true;
  std::vector<std::string> parts;
  for (const char* f : {"sweep.jsonl", "ablation.jsonl", "fl_vs_cl.jsonl"}) {
    const std::string a = read_bytes(r1 / f), b = read_bytes(r2 / f);
    const bool same = !a.empty() && a == b;
    ok = ok && same;
    parts.push_back(std::string(f) + (same ? " identical (" + std::to_string(a.size()) + " bytes)" : " differs"));
  }
  return {ok, joined(parts)};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  const std::vector<Criterion> criteria{
      {1, "DFT roundtrip and norm preservation", 1.0, dft_roundtrip},
      {2, "quantizer roundtrip bound", 1.0, quantizer_bound},
      {3, "gradient checks (SWTCAN, VAE)", 120.0, gradient_checks},
      {4, "KL closed form vs Monte Carlo", 30.0, kl_oracle},
      {5, "FedAMS scalar and reference stepper", 10.0, fedams_oracle},
      {6, "AirComp aggregation", 30.0, aircomp_check},
      {7, "budget arithmetic", 1.0, budget_arithmetic},
      {8, "feedback size trend", 1800.0, bits_trend},
      {9, "pre-training ablation trend", 2700.0, ablation_trend},
      {10, "federated vs centralized uplink at gamma=1", 1800.0, fl_vs_cl_trend},
      {11, "determinism of pipeline metrics", 300.0, determinism},
  };
  int failed = 0;
  std::size_t ran = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double t = seconds_since(t0);
    const bool in_time = t <= c.limit_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failed;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ("
              << fmt(t, 3) << " s" << (in_time ? "" : ", over the " + fmt(c.limit_s, 4) + " s limit") << ")"
              << std::endl;
  }
  std::cout << (ran - static_cast<std::size_t>(failed)) << "/" << ran << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
