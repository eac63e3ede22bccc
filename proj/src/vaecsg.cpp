#include "csigpt/vaecsg.hpp"

#include "csigpt/optim.hpp"

#include <cmath>
#include <numeric>

namespace csigpt::vaecsg {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

RowVector flatten_one(const CMatrix& h) {
  RowMajor stacked(h.rows(), 2 * h.cols());
  stacked.leftCols(h.cols()) = h.real();
  stacked.rightCols(h.cols()) = h.imag();
  return Eigen::Map<const RowVector>(stacked.data(), stacked.size());
}

CMatrix unflatten_one(const RowVector& row, int p, int n) {
  Eigen::Map<const RowMajor> stacked(row.data(), p, 2 * n);
  CMatrix h(p, n);
  h.real() = stacked.leftCols(n);
  h.imag() = stacked.rightCols(n);
  return h;
}

Matrix normal_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = standard_normal(rng);
  return m;
}

std::vector<VaeEpoch> run_training(Vae& vae, std::span<const ChannelSample> data, int epochs,
                                   double lr, std::uint64_t stream) {
  std::vector<VaeEpoch> history;
  if (epochs <= 0) return history;
  if (data.empty()) throw std::invalid_argument("vae training: dataset is empty");
  const VaeConfig& cfg = vae.config();
  ParamSet& params = vae.params();
  for (auto& p : params.items()) p.requires_grad = true;
  Adam adam;
  const Matrix all = vae.flatten_batch(data);
  const long n = all.rows();
  std::vector<long> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0L);
  Rng rng(derive_seed(cfg.seed, stream));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    double total = 0.0;
    for (long b0 = 0; b0 < n; b0 += cfg.batch_size) {
      const long b1 = std::min(n, b0 + static_cast<long>(cfg.batch_size));
      Matrix x(b1 - b0, all.cols());
      for (long k = b0; k < b1; ++k) x.row(k - b0) = all.row(order[static_cast<std::size_t>(k)]);
      Matrix eps = normal_matrix(x.rows(), cfg.latent_dim, rng);
      params.zero_grad();
      ag::Tape tape;
      ag::Var loss = vae.build_loss(tape, x, eps);
      const double value = loss.scalar();
      if (!std::isfinite(value)) throw DivergenceError("VAE loss is not finite");
      tape.backward(loss, 1.0 / static_cast<double>(x.rows()));
      adam.step(params, lr);
      total += value;
    }
    history.push_back({epoch + 1, total / static_cast<double>(n)});
  }
  vae.set_reference_power(channelsim::mean_frobenius_sq(data));
  return history;
}

}  // namespace

void VaeConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("vae.latent_dim", "must be >= 1");
  if (!(kl_weight >= 0.0)) throw ConfigError("vae.kl_weight", "must be >= 0");
  for (int h : hidden)
    if (h < 1) throw ConfigError("vae.hidden", "widths must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("vae.learning_rate", "must be > 0");
  if (!(finetune_lr_ratio > 0.0)) throw ConfigError("vae.finetune_lr_ratio", "must be > 0");
  if (batch_size < 1) throw ConfigError("vae.batch_size", "must be >= 1");
}

Vector reparameterize(const LatentStats& stats, Rng& rng) {
  if (stats.mu.size() != stats.logvar.size()) throw ShapeError("reparameterize: mu/logvar length mismatch");
  Vector z(stats.mu.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    z(i) = stats.mu(i) + std::exp(0.5 * stats.logvar(i)) * standard_normal(rng);
  }
  return z;
}

double kl_divergence(const LatentStats& s) {
  if (s.mu.size() != s.logvar.size()) throw ShapeError("kl_divergence: mu/logvar length mismatch");
  return -0.5 * (1.0 + s.logvar.array() - s.mu.array().square() - s.logvar.array().exp()).sum();
}

double vae_loss(const CMatrix& h, const CMatrix& h_hat, const LatentStats& stats, double l) {
  if (h.rows() != h_hat.rows() || h.cols() != h_hat.cols()) throw ShapeError("vae_loss: shape mismatch");
  return (h_hat - h).squaredNorm() + l * kl_divergence(stats);
}

Vae::Vae(VaeConfig config, int n_subcarriers, int n_antennas)
    : config_(std::move(config)), p_(n_subcarriers), n_(n_antennas) {
  config_.validate();
  if (p_ < 1 || n_ < 1) throw ConfigError("vae", "channel dimensions must be positive");
  Rng rng(derive_seed(config_.init_seed, 0x7ae));
  const int in = 2 * p_ * n_;
  int prev = in;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    const std::string layer = "enc.fc" + std::to_string(i);
    params_.add(layer + ".weight", layer, glorot_uniform(prev, config_.hidden[i], rng));
    params_.add(layer + ".bias", layer, Matrix::Zero(1, config_.hidden[i]));
    prev = config_.hidden[i];
  }
  params_.add("enc.mu.weight", "enc.mu", glorot_uniform(prev, config_.latent_dim, rng));
  params_.add("enc.mu.bias", "enc.mu", Matrix::Zero(1, config_.latent_dim));
  params_.add("enc.logvar.weight", "enc.logvar", glorot_uniform(prev, config_.latent_dim, rng));
  params_.add("enc.logvar.bias", "enc.logvar", Matrix::Zero(1, config_.latent_dim));
  prev = config_.latent_dim;
  for (std::size_t k = config_.hidden.size(); k-- > 0;) {
    const std::string layer = "dec.fc" + std::to_string(config_.hidden.size() - 1 - k);
    params_.add(layer + ".weight", layer, glorot_uniform(prev, config_.hidden[k], rng));
    params_.add(layer + ".bias", layer, Matrix::Zero(1, config_.hidden[k]));
    prev = config_.hidden[k];
  }
  params_.add("dec.out.weight", "dec.out", glorot_uniform(prev, in, rng));
  params_.add("dec.out.bias", "dec.out", Matrix::Zero(1, in));
}

void Vae::set_data_scale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) throw std::invalid_argument("data_scale must be positive and finite");
  data_scale_ = s;
}

void Vae::set_reference_power(double p) {
  if (!(p >= 0.0) || !std::isfinite(p)) throw std::invalid_argument("reference power must be finite and >= 0");
  reference_power_ = p;
}

ag::Var Vae::param(ag::Tape& tape, const std::string& name) {
  return tape.parameter(params_.at(name));
}

std::pair<ag::Var, ag::Var> Vae::build_encoder(ag::Tape& tape, const ag::Var& x) {
  if (x.cols() != 2 * p_ * n_) throw ShapeError("vae encoder: input width must be 2 * P * N_BS");
  ag::Var h = x;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    const std::string layer = "enc.fc" + std::to_string(i);
    h = ag::gelu(ag::linear(h, param(tape, layer + ".weight"), param(tape, layer + ".bias")));
  }
  ag::Var mu = ag::linear(h, param(tape, "enc.mu.weight"), param(tape, "enc.mu.bias"));
  ag::Var logvar = ag::linear(h, param(tape, "enc.logvar.weight"), param(tape, "enc.logvar.bias"));
  return {mu, ag::clamp(logvar, kLogvarMin, kLogvarMax)};
}

ag::Var Vae::build_decoder(ag::Tape& tape, const ag::Var& z) {
  if (z.cols() != config_.latent_dim) throw ShapeError("vae decoder: latent width mismatch");
  ag::Var h = z;
  for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
    const std::string layer = "dec.fc" + std::to_string(i);
    h = ag::gelu(ag::linear(h, param(tape, layer + ".weight"), param(tape, layer + ".bias")));
  }
  return ag::linear(h, param(tape, "dec.out.weight"), param(tape, "dec.out.bias"));
}

ag::Var Vae::build_loss(ag::Tape& tape, const Matrix& x, const Matrix& eps) {
  if (eps.rows() != x.rows() || eps.cols() != config_.latent_dim) throw ShapeError("vae loss: eps shape mismatch");
  auto [mu, logvar] = build_encoder(tape, tape.constant(x));
  ag::Var sigma = ag::exp(ag::scale(logvar, 0.5));
  ag::Var z = ag::add(mu, ag::mul(sigma, tape.constant(eps)));
  ag::Var recon = ag::sum_squares(ag::sub(build_decoder(tape, z), tape.constant(x)));
  // KL = 0.5 * sum(mu^2 + exp(logvar) - logvar - 1)
  ag::Var kl_terms = ag::sub(ag::add(ag::sum_squares(mu), ag::sum(ag::exp(logvar))), ag::sum(logvar));
  ag::Var kl = ag::add(ag::scale(kl_terms, 0.5),
                       tape.constant(Matrix::Constant(1, 1, -0.5 * static_cast<double>(mu.rows() * mu.cols()))));
  return ag::add(recon, ag::scale(kl, config_.kl_weight));
}

Matrix Vae::flatten_batch(std::span<const ChannelSample> samples) const {
  Matrix x(static_cast<Eigen::Index>(samples.size()), 2 * p_ * n_);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].h.rows() != p_ || samples[i].h.cols() != n_) throw ShapeError("vae: channel must be P x N_BS");
    x.row(static_cast<Eigen::Index>(i)) = data_scale_ * flatten_one(samples[i].h);
  }
  return x;
}

LatentStats Vae::encode(const CMatrix& h) const {
  if (h.rows() != p_ || h.cols() != n_) throw ShapeError("vae encode: channel must be P x N_BS");
  ag::Tape tape(false);
  auto& self = const_cast<Vae&>(*this);  // grad-disabled tape never writes
  auto [mu, logvar] = self.build_encoder(tape, tape.constant(data_scale_ * flatten_one(h)));
  return {mu.value().row(0).transpose(), logvar.value().row(0).transpose()};
}

CMatrix Vae::decode(const Vector& z) const {
  if (z.size() != config_.latent_dim) throw ShapeError("vae decode: latent length mismatch");
  ag::Tape tape(false);
  auto& self = const_cast<Vae&>(*this);
  ag::Var out = self.build_decoder(tape, tape.constant(z.transpose()));
  return unflatten_one(out.value().row(0) / data_scale_, p_, n_);
}

std::vector<VaeEpoch> train(Vae& vae, std::span<const ChannelSample> data, int epochs) {
  if (epochs > 0 && vae.reference_power() == 0.0) {
    const double power = channelsim::mean_frobenius_sq(data);
    if (!(power > 0.0)) throw std::invalid_argument("vae train: dataset has zero power");
    vae.set_data_scale(1.0 / std::sqrt(power));
  }
  return run_training(vae, data, epochs, vae.config().learning_rate, 1);
}

std::vector<VaeEpoch> finetune(Vae& vae, std::span<const ChannelSample> data, int epochs) {
  const VaeConfig& c = vae.config();
  return run_training(vae, data, epochs, c.learning_rate * c.finetune_lr_ratio, 2);
}

double reconstruction_nmse(const Vae& vae, std::span<const ChannelSample> data) {
  if (data.empty()) throw std::invalid_argument("reconstruction_nmse: empty dataset");
  double err = 0.0, ref = 0.0;
  for (const auto& s : data) {
    err += (vae.decode(vae.encode(s.h).mu) - s.h).squaredNorm();
    ref += s.h.squaredNorm();
  }
  return err / ref;
}

std::vector<ChannelSample> generate(const Vae& vae, int n, std::uint64_t seed,
                                    const std::string& label) {
  std::vector<ChannelSample> out;
  if (n <= 0) return out;
  out.reserve(static_cast<std::size_t>(n));
  const int dim = vae.config().latent_dim;
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    Vector z(dim);
    for (int k = 0; k < dim; ++k) z(k) = standard_normal(rng);
    out.push_back({vae.decode(z), label});
  }
  if (vae.reference_power() > 0.0) {
    const double have = channelsim::mean_frobenius_sq(out);
    if (have > 0.0) {
      const double s = std::sqrt(vae.reference_power() / have);
      for (auto& x : out) x.h *= s;
    }
  }
  return out;
}

}  // namespace csigpt::vaecsg
