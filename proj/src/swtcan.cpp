#include "csigpt/swtcan.hpp"

#include "csigpt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace csigpt::swtcan {

namespace {

using IndexPtr = std::shared_ptr<const std::vector<int>>;

constexpr double kShiftMask = -100.0;

IndexPtr make_index(std::vector<int> v) {
  return std::make_shared<const std::vector<int>>(std::move(v));
}

// Row permutation of a T x dim token matrix as a flat gather index.
IndexPtr row_permutation(const std::vector<int>& rows, int dim) {
  std::vector<int> idx(rows.size() * static_cast<std::size_t>(dim));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < dim; ++c) idx[r * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)] = rows[r] * dim + c;
  return make_index(std::move(idx));
}

int region(int pos, int extent, int window, int shift) {
  if (shift == 0) return 0;
  if (pos < extent - window) return 0;
  if (pos < extent - shift) return 1;
  return 2;
}

}  // namespace

void SwtcanConfig::validate() const {
  geometry.validate();
  const int n = n_antennas();
  if (n_subcarriers < 1) throw ConfigError("swtcan.n_subcarriers", "must be >= 1");
  if (pilot_slots < 1 || pilot_slots > n) throw ConfigError("swtcan.pilot_slots", "must be in [1, N_BS]");
  if (bits_per_element < 1 || bits_per_element > 16) throw ConfigError("swtcan.bits_per_element", "must be in [1, 16]");
  if (feedback_bits < 1 || feedback_bits % bits_per_element != 0) {
    throw ConfigError("swtcan.feedback_bits", "B must equal L * b for an integer code length L");
  }
  if (embed_dim < 1) throw ConfigError("swtcan.embed_dim", "must be >= 1");
  if (patch_size < 1 || n_subcarriers % patch_size != 0 || n % patch_size != 0) {
    throw ConfigError("swtcan.patch_size", "must divide both P and N_BS");
  }
  if (depths.empty() || depths.size() != heads.size()) {
    throw ConfigError("swtcan.depths", "depths and heads must be non-empty and equal length");
  }
  if (window_size < 1) throw ConfigError("swtcan.window_size", "must be >= 1");
  if (mlp_ratio < 1) throw ConfigError("swtcan.mlp_ratio", "must be >= 1");
  int gh = n_subcarriers / patch_size, gw = n / patch_size, dim = embed_dim;
  for (std::size_t s = 0; s < depths.size(); ++s) {
    if (depths[s] < 1) throw ConfigError("swtcan.depths", "every stage needs at least one block");
    if (heads[s] < 1 || dim % heads[s] != 0) throw ConfigError("swtcan.heads", "heads must divide the stage width");
    const int wh = std::min(window_size, gh), ww = std::min(window_size, gw);
    if (gh % wh != 0 || gw % ww != 0) {
      throw ConfigError("swtcan.window_size", "window must divide the post-patch grid at every stage");
    }
    if (s + 1 < depths.size()) {
      if (gh % 2 != 0 || gw % 2 != 0) throw ConfigError("swtcan.depths", "too many stages for the patch grid");
      gh /= 2;
      gw /= 2;
      dim *= 2;
    }
  }
}

BitCodeword quantize(const Vector& code, int b) {
  if (b <= 0) throw std::invalid_argument("quantize: bits per element must be positive");
  const long levels = 1L << b;
  BitCodeword w;
  w.bits.reserve(static_cast<std::size_t>(code.size() * b));
  for (Eigen::Index i = 0; i < code.size(); ++i) {
    const double x = code(i);
    if (!(x >= 0.0 && x <= 1.0)) throw std::invalid_argument("quantize: code entries must lie in [0, 1]");
    long idx = std::min(static_cast<long>(std::floor(x * static_cast<double>(levels))), levels - 1);
    for (int k = b - 1; k >= 0; --k) w.bits.push_back(static_cast<std::uint8_t>((idx >> k) & 1L));
  }
  return w;
}

Vector dequantize(const BitCodeword& word, int b) {
  if (b <= 0) throw std::invalid_argument("dequantize: bits per element must be positive");
  if (word.bits.size() % static_cast<std::size_t>(b) != 0) {
    throw std::invalid_argument("dequantize: bit count is not a multiple of b");
  }
  const double levels = static_cast<double>(1L << b);
  Vector out(static_cast<Eigen::Index>(word.bits.size() / static_cast<std::size_t>(b)));
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    long idx = 0;
    for (int k = 0; k < b; ++k) idx = (idx << 1) | word.bits[static_cast<std::size_t>(i * b + k)];
    out(i) = (static_cast<double>(idx) + 0.5) / levels;
  }
  return out;
}

double loss_nmse(const CMatrix& estimate, const CMatrix& reference) {
  return channelsim::nmse(estimate, reference).linear;
}

double batch_loss_nmse(std::span<const CMatrix> estimates,
                       std::span<const ChannelSample> references) {
  if (estimates.size() != references.size() || estimates.empty()) {
    throw ShapeError("batch_loss_nmse: batch sizes differ or are empty");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < estimates.size(); ++i) s += loss_nmse(estimates[i], references[i].h);
  return s / static_cast<double>(estimates.size());
}

Matrix to_real_stack(const CMatrix& m) {
  Matrix out(m.rows(), 2 * m.cols());
  out.leftCols(m.cols()) = m.real();
  out.rightCols(m.cols()) = m.imag();
  return out;
}

CMatrix from_real_stack(const Matrix& m) {
  if (m.cols() % 2 != 0) throw ShapeError("from_real_stack: odd column count");
  const Eigen::Index n = m.cols() / 2;
  CMatrix out(m.rows(), n);
  out.real() = m.leftCols(n);
  out.imag() = m.rightCols(n);
  return out;
}

Swtcan::Swtcan(SwtcanConfig config) : config_(std::move(config)) {
  config_.validate();
  build_plans();
  init_params();
}

void Swtcan::build_plans() {
  const int P = config_.n_subcarriers;
  const int N = config_.n_antennas();
  const int ps = config_.patch_size;
  grid_h_ = P / ps;
  grid_w_ = N / ps;
  const int feat = ps * ps * 2;
  const int tokens0 = grid_h_ * grid_w_;

  // Image is P x 2N: column n is Re(pixel n), column N + n is Im(pixel n).
  std::vector<int> part(static_cast<std::size_t>(tokens0 * feat));
  std::vector<int> unpart(static_cast<std::size_t>(P * 2 * N));
  for (int i = 0; i < grid_h_; ++i)
    for (int j = 0; j < grid_w_; ++j)
      for (int dp = 0; dp < ps; ++dp)
        for (int dn = 0; dn < ps; ++dn)
          for (int ch = 0; ch < 2; ++ch) {
            const int t = i * grid_w_ + j;
            const int f = (dp * ps + dn) * 2 + ch;
            const int row = i * ps + dp;
            const int col = ch * N + j * ps + dn;
            part[static_cast<std::size_t>(t * feat + f)] = row * 2 * N + col;
            unpart[static_cast<std::size_t>(row * 2 * N + col)] = t * feat + f;
          }
  patch_partition_ = make_index(std::move(part));
  patch_unpartition_ = make_index(std::move(unpart));

  const int n_stages = static_cast<int>(config_.depths.size());
  enc_blocks_.assign(static_cast<std::size_t>(n_stages), {});
  dec_blocks_.assign(static_cast<std::size_t>(n_stages), {});
  merges_.clear();
  expands_.assign(static_cast<std::size_t>(n_stages), {});

  int gh = grid_h_, gw = grid_w_, dim = config_.embed_dim;
  for (int s = 0; s < n_stages; ++s) {
    const int wh = std::min(config_.window_size, gh);
    const int ww = std::min(config_.window_size, gw);
    const int n_tok = wh * ww;
    const int n_win = (gh / wh) * (gw / ww);
    for (int side = 0; side < 2; ++side) {
      auto& dst = side == 0 ? enc_blocks_[static_cast<std::size_t>(s)] : dec_blocks_[static_cast<std::size_t>(s)];
      for (int b = 0; b < config_.depths[static_cast<std::size_t>(s)]; ++b) {
        const bool odd = (b % 2) == 1;
        const int sh = (odd && gh > config_.window_size) ? wh / 2 : 0;
        const int sw = (odd && gw > config_.window_size) ? ww / 2 : 0;
        std::vector<int> order(static_cast<std::size_t>(gh * gw));
        std::vector<int> inverse(order.size());
        auto layout = std::make_shared<ag::WindowLayout>();
        layout->n_windows = n_win;
        layout->tokens = n_tok;
        layout->rel_table_rows = (2 * wh - 1) * (2 * ww - 1);
        layout->rel_index.resize(static_cast<std::size_t>(n_tok * n_tok));
        for (int k1 = 0; k1 < n_tok; ++k1)
          for (int k2 = 0; k2 < n_tok; ++k2) {
            const int dh = k1 / ww - k2 / ww + wh - 1;
            const int dw = k1 % ww - k2 % ww + ww - 1;
            layout->rel_index[static_cast<std::size_t>(k1 * n_tok + k2)] = dh * (2 * ww - 1) + dw;
          }
        const bool shifted = sh > 0 || sw > 0;
        for (int bi = 0; bi < gh / wh; ++bi)
          for (int bj = 0; bj < gw / ww; ++bj) {
            const int w = bi * (gw / ww) + bj;
            std::vector<int> labels(static_cast<std::size_t>(n_tok));
            for (int di = 0; di < wh; ++di)
              for (int dj = 0; dj < ww; ++dj) {
                const int i = bi * wh + di;  // position on the rolled grid
                const int j = bj * ww + dj;
                const int src = ((i + sh) % gh) * gw + ((j + sw) % gw);
                const int pos = w * n_tok + di * ww + dj;
                order[static_cast<std::size_t>(pos)] = src;
                inverse[static_cast<std::size_t>(src)] = pos;
                labels[static_cast<std::size_t>(di * ww + dj)] = region(i, gh, wh, sh) * 3 + region(j, gw, ww, sw);
              }
            if (shifted) {
              Matrix mask = Matrix::Zero(n_tok, n_tok);
              for (int a = 0; a < n_tok; ++a)
                for (int c = 0; c < n_tok; ++c)
                  if (labels[static_cast<std::size_t>(a)] != labels[static_cast<std::size_t>(c)]) mask(a, c) = kShiftMask;
              layout->masks.push_back(std::move(mask));
            }
          }
        BlockPlan plan;
        plan.prefix = std::string(side == 0 ? "enc" : "dec") + ".stage" + std::to_string(s) + ".block" + std::to_string(b);
        plan.dim = dim;
        plan.heads = config_.heads[static_cast<std::size_t>(s)];
        plan.to_windows = row_permutation(order, dim);
        plan.from_windows = row_permutation(inverse, dim);
        plan.layout = std::move(layout);
        dst.push_back(std::move(plan));
      }
    }
    if (s + 1 < n_stages) {
      // Merge 2x2 neighbours: [x(2i,2j), x(2i+1,2j), x(2i,2j+1), x(2i+1,2j+1)].
      const int oh = gh / 2, ow = gw / 2;
      std::vector<int> idx(static_cast<std::size_t>(oh * ow * 4 * dim));
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
          for (int q = 0; q < 4; ++q) {
            const int si = 2 * i + (q % 2), sj = 2 * j + (q / 2);
            for (int c = 0; c < dim; ++c)
              idx[static_cast<std::size_t>(((i * ow + j) * 4 + q) * dim + c)] = (si * gw + sj) * dim + c;
          }
      ResizePlan m;
      m.prefix = "enc.stage" + std::to_string(s) + ".merge";
      m.in_dim = 4 * dim;
      m.out_dim = 2 * dim;
      m.out_tokens = oh * ow;
      m.index = make_index(std::move(idx));
      merges_.push_back(std::move(m));

      // Expanding from stage s + 1 (oh x ow, 2 dim) back to stage s: a linear
      // map to 4 dim, then each token is split into a 2x2 patch of width dim.
      std::vector<int> eidx(static_cast<std::size_t>(gh * gw * dim));
      for (int I = 0; I < gh; ++I)
        for (int J = 0; J < gw; ++J) {
          const int i = I / 2, j = J / 2, a = I % 2, b = J % 2;
          for (int c = 0; c < dim; ++c)
            eidx[static_cast<std::size_t>((I * gw + J) * dim + c)] = (i * ow + j) * 4 * dim + (a * 2 + b) * dim + c;
        }
      ResizePlan e;
      e.prefix = "dec.stage" + std::to_string(s + 1) + ".expand";
      e.in_dim = 2 * dim;
      e.out_dim = dim;
      e.out_tokens = gh * gw;
      e.index = make_index(std::move(eidx));
      expands_[static_cast<std::size_t>(s + 1)] = std::move(e);

      gh = oh;
      gw = ow;
      dim *= 2;
    }
  }
  last_tokens_ = gh * gw;
  last_dim_ = dim;
  std::vector<int> identity(static_cast<std::size_t>(last_tokens_ * last_dim_));
  for (std::size_t k = 0; k < identity.size(); ++k) identity[k] = static_cast<int>(k);
  flatten_index_ = make_index(identity);
  unflatten_index_ = make_index(std::move(identity));
}

void Swtcan::add_block_params(const BlockPlan& plan, Rng& rng) {
  const int d = plan.dim;
  const int hidden = d * config_.mlp_ratio;
  const std::string& p = plan.prefix;
  params_.add(p + ".norm1.gain", p, Matrix::Ones(1, d));
  params_.add(p + ".norm1.bias", p, Matrix::Zero(1, d));
  params_.add(p + ".attn.qkv.weight", p, glorot_uniform(d, 3 * d, rng));
  params_.add(p + ".attn.qkv.bias", p, Matrix::Zero(1, 3 * d));
  if (config_.relative_position_bias) {
    params_.add(p + ".attn.rel_bias", p, normal_init(plan.layout->rel_table_rows, plan.heads, 0.02, rng));
  }
  params_.add(p + ".attn.proj.weight", p, glorot_uniform(d, d, rng));
  params_.add(p + ".attn.proj.bias", p, Matrix::Zero(1, d));
  params_.add(p + ".norm2.gain", p, Matrix::Ones(1, d));
  params_.add(p + ".norm2.bias", p, Matrix::Zero(1, d));
  params_.add(p + ".mlp.fc1.weight", p, glorot_uniform(d, hidden, rng));
  params_.add(p + ".mlp.fc1.bias", p, Matrix::Zero(1, hidden));
  params_.add(p + ".mlp.fc2.weight", p, glorot_uniform(hidden, d, rng));
  params_.add(p + ".mlp.fc2.bias", p, Matrix::Zero(1, d));
}

void Swtcan::init_params() {
  Rng rng(derive_seed(config_.init_seed, 0x5317));
  const int N = config_.n_antennas();
  const int M = config_.pilot_slots;
  const int C = config_.embed_dim;
  const int ps = config_.patch_size;
  const int L = config_.code_len();

  params_.add("pilot.real", "pilot", normal_init(N, M, std::sqrt(0.5), rng));
  params_.add("pilot.imag", "pilot", normal_init(N, M, std::sqrt(0.5), rng));
  project_pilot();

  params_.add("enc.restore.weight", "enc.restore", glorot_uniform(2 * M, 2 * N, rng));
  params_.add("enc.restore.bias", "enc.restore", Matrix::Zero(1, 2 * N));
  params_.add("enc.patch_embed.weight", "enc.patch_embed", glorot_uniform(ps * ps * 2, C, rng));
  params_.add("enc.patch_embed.bias", "enc.patch_embed", Matrix::Zero(1, C));
  params_.add("enc.patch_embed.norm.gain", "enc.patch_embed", Matrix::Ones(1, C));
  params_.add("enc.patch_embed.norm.bias", "enc.patch_embed", Matrix::Zero(1, C));
  for (std::size_t s = 0; s < enc_blocks_.size(); ++s) {
    for (const auto& plan : enc_blocks_[s]) add_block_params(plan, rng);
    if (s < merges_.size()) {
      const auto& m = merges_[s];
      params_.add(m.prefix + ".norm.gain", m.prefix, Matrix::Ones(1, m.in_dim));
      params_.add(m.prefix + ".norm.bias", m.prefix, Matrix::Zero(1, m.in_dim));
      params_.add(m.prefix + ".reduction.weight", m.prefix, glorot_uniform(m.in_dim, m.out_dim, rng));
    }
  }
  params_.add("enc.norm.gain", "enc.norm", Matrix::Ones(1, last_dim_));
  params_.add("enc.norm.bias", "enc.norm", Matrix::Zero(1, last_dim_));
  params_.add("enc.head.weight", "enc.head", glorot_uniform(last_tokens_ * last_dim_, L, rng));
  params_.add("enc.head.bias", "enc.head", Matrix::Zero(1, L));

  params_.add("dec.lift.weight", "dec.lift", glorot_uniform(L, last_tokens_ * last_dim_, rng));
  params_.add("dec.lift.bias", "dec.lift", Matrix::Zero(1, last_tokens_ * last_dim_));
  for (int s = static_cast<int>(dec_blocks_.size()) - 1; s >= 0; --s) {
    for (const auto& plan : dec_blocks_[static_cast<std::size_t>(s)]) add_block_params(plan, rng);
    if (s > 0) {
      const auto& e = expands_[static_cast<std::size_t>(s)];
      params_.add(e.prefix + ".weight", e.prefix, glorot_uniform(e.in_dim, 2 * e.in_dim, rng));
      params_.add(e.prefix + ".norm.gain", e.prefix, Matrix::Ones(1, e.out_dim));
      params_.add(e.prefix + ".norm.bias", e.prefix, Matrix::Zero(1, e.out_dim));
    }
  }
  params_.add("dec.head.norm.gain", "dec.head", Matrix::Ones(1, C));
  params_.add("dec.head.norm.bias", "dec.head", Matrix::Zero(1, C));
  params_.add("dec.head.weight", "dec.head", glorot_uniform(C, ps * ps * 2, rng));
  params_.add("dec.head.bias", "dec.head", Matrix::Zero(1, ps * ps * 2));
}

CMatrix Swtcan::pilot() const {
  CMatrix x(config_.n_antennas(), config_.pilot_slots);
  x.real() = params_.at("pilot.real").value;
  x.imag() = params_.at("pilot.imag").value;
  return x;
}

void Swtcan::project_pilot() {
  Matrix& re = params_.at("pilot.real").value;
  Matrix& im = params_.at("pilot.imag").value;
  const double power = re.squaredNorm() + im.squaredNorm();
  if (!(power > 0.0) || !std::isfinite(power)) throw DivergenceError("pilot collapsed to zero or non-finite power");
  const double target = static_cast<double>(re.size());
  const double s = std::sqrt(target / power);
  re *= s;
  im *= s;
}

ag::Var Swtcan::param(ag::Tape& tape, const std::string& name) {
  return tape.parameter(params_.at(name));
}

ag::Var Swtcan::build_observation(ag::Tape& tape, const CMatrix& h, const CMatrix& noise) {
  if (h.rows() != config_.n_subcarriers || h.cols() != config_.n_antennas()) {
    throw ShapeError("swtcan: channel must be P x N_BS");
  }
  ag::Var hr = tape.constant(h.real());
  ag::Var hi = tape.constant(h.imag());
  ag::Var xr = param(tape, "pilot.real");
  ag::Var xi = param(tape, "pilot.imag");
  ag::Var yr = ag::sub(ag::matmul(hr, xr), ag::matmul(hi, xi));
  ag::Var yi = ag::add(ag::matmul(hr, xi), ag::matmul(hi, xr));
  if (noise.size() > 0) {
    yr = ag::add(yr, tape.constant(noise.real()));
    yi = ag::add(yi, tape.constant(noise.imag()));
  }
  return ag::concat_cols(yr, yi);
}

ag::Var Swtcan::block_forward(ag::Tape& tape, const ag::Var& x, const BlockPlan& plan) {
  const std::string& p = plan.prefix;
  const Eigen::Index T = x.rows();
  ag::Var h = ag::layer_norm(x, param(tape, p + ".norm1.gain"), param(tape, p + ".norm1.bias"));
  h = ag::gather(h, T, plan.dim, plan.to_windows);
  ag::Var qkv = ag::linear(h, param(tape, p + ".attn.qkv.weight"), param(tape, p + ".attn.qkv.bias"));
  ag::Var bias = config_.relative_position_bias ? param(tape, p + ".attn.rel_bias") : ag::Var();
  ag::Var a = ag::window_attention(qkv, plan.heads, plan.layout, bias);
  a = ag::linear(a, param(tape, p + ".attn.proj.weight"), param(tape, p + ".attn.proj.bias"));
  a = ag::gather(a, T, plan.dim, plan.from_windows);
  ag::Var y = ag::add(x, a);
  ag::Var m = ag::layer_norm(y, param(tape, p + ".norm2.gain"), param(tape, p + ".norm2.bias"));
  m = ag::gelu(ag::linear(m, param(tape, p + ".mlp.fc1.weight"), param(tape, p + ".mlp.fc1.bias")));
  m = ag::linear(m, param(tape, p + ".mlp.fc2.weight"), param(tape, p + ".mlp.fc2.bias"));
  return ag::add(y, m);
}

ag::Var Swtcan::build_compressor(ag::Tape& tape, const ag::Var& y_real) {
  const int P = config_.n_subcarriers;
  const int N = config_.n_antennas();
  const int M = config_.pilot_slots;
  const int ps = config_.patch_size;
  if (y_real.rows() != P || y_real.cols() != 2 * M) throw ShapeError("compress: observation must be P x M");
  // Unit-power channel and pilot give per-entry observation power N_BS.
  ag::Var y = ag::scale(y_real, 1.0 / std::sqrt(static_cast<double>(N)));
  ag::Var img = ag::linear(y, param(tape, "enc.restore.weight"), param(tape, "enc.restore.bias"));
  ag::Var x = ag::gather(img, grid_h_ * grid_w_, ps * ps * 2, patch_partition_);
  x = ag::linear(x, param(tape, "enc.patch_embed.weight"), param(tape, "enc.patch_embed.bias"));
  x = ag::layer_norm(x, param(tape, "enc.patch_embed.norm.gain"), param(tape, "enc.patch_embed.norm.bias"));
  for (std::size_t s = 0; s < enc_blocks_.size(); ++s) {
    for (const auto& plan : enc_blocks_[s]) x = block_forward(tape, x, plan);
    if (s < merges_.size()) {
      const auto& mp = merges_[s];
      x = ag::gather(x, mp.out_tokens, mp.in_dim, mp.index);
      x = ag::layer_norm(x, param(tape, mp.prefix + ".norm.gain"), param(tape, mp.prefix + ".norm.bias"));
      x = ag::linear(x, param(tape, mp.prefix + ".reduction.weight"));
    }
  }
  x = ag::layer_norm(x, param(tape, "enc.norm.gain"), param(tape, "enc.norm.bias"));
  x = ag::gather(x, 1, last_tokens_ * last_dim_, flatten_index_);
  x = ag::linear(x, param(tape, "enc.head.weight"), param(tape, "enc.head.bias"));
  return ag::sigmoid(x);
}

ag::Var Swtcan::build_quantizer(ag::Tape& tape, const ag::Var& code) {
  const int b = config_.bits_per_element;
  const double levels = static_cast<double>(1L << b);
  Matrix q = code.value().unaryExpr([levels](double v) {
    double idx = std::min(std::floor(std::clamp(v, 0.0, 1.0) * levels), levels - 1.0);
    return (idx + 0.5) / levels;
  });
  int ic = code.id();
  // Straight-through: the backward pass treats quantize-dequantize as identity.
  return tape.push(std::move(q), code.requires_grad(),
                   [ic](ag::Tape& tp, const Matrix& g) { tp.accumulate(ic, g); });
}

ag::Var Swtcan::build_reconstructor(ag::Tape& tape, const ag::Var& code_hat) {
  const int L = config_.code_len();
  if (code_hat.rows() != 1 || code_hat.cols() != L) throw ShapeError("reconstruct: code length must equal L");
  ag::Var x = ag::linear(code_hat, param(tape, "dec.lift.weight"), param(tape, "dec.lift.bias"));
  x = ag::gather(x, last_tokens_, last_dim_, unflatten_index_);
  for (int s = static_cast<int>(dec_blocks_.size()) - 1; s >= 0; --s) {
    for (const auto& plan : dec_blocks_[static_cast<std::size_t>(s)]) x = block_forward(tape, x, plan);
    if (s > 0) {
      const auto& e = expands_[static_cast<std::size_t>(s)];
      x = ag::linear(x, param(tape, e.prefix + ".weight"));
      x = ag::gather(x, e.out_tokens, e.out_dim, e.index);
      x = ag::layer_norm(x, param(tape, e.prefix + ".norm.gain"), param(tape, e.prefix + ".norm.bias"));
    }
  }
  x = ag::layer_norm(x, param(tape, "dec.head.norm.gain"), param(tape, "dec.head.norm.bias"));
  x = ag::linear(x, param(tape, "dec.head.weight"), param(tape, "dec.head.bias"));
  return ag::gather(x, config_.n_subcarriers, 2 * config_.n_antennas(), patch_unpartition_);
}

ag::Var Swtcan::build_loss(ag::Tape& tape, const ChannelSample& sample, Rng& rng) {
  const CMatrix x = pilot();
  const double var = channelsim::noise_variance(x, config_.snr_db);
  CMatrix noise;
  if (var > 0.0) {
    const double s = std::sqrt(var / 2.0);
    noise.resize(config_.n_subcarriers, config_.pilot_slots);
    for (Eigen::Index j = 0; j < noise.cols(); ++j)
      for (Eigen::Index i = 0; i < noise.rows(); ++i) {
        double re = standard_normal(rng);
        double im = standard_normal(rng);
        noise(i, j) = Complex(s * re, s * im);
      }
  }
  ag::Var y = build_observation(tape, sample.h, noise);
  ag::Var code = build_compressor(tape, y);
  ag::Var code_hat = build_quantizer(tape, code);
  ag::Var out = build_reconstructor(tape, code_hat);
  const double ref = sample.h.squaredNorm();
  if (!(ref > 0.0)) throw std::invalid_argument("loss: reference channel has zero norm");
  ag::Var diff = ag::sub(out, tape.constant(to_real_stack(sample.h)));
  return ag::scale(ag::sum_squares(diff), 1.0 / ref);
}

Observation Swtcan::pilot_forward(const CMatrix& h, double snr_db, Rng& rng) const {
  return channelsim::observe(h, pilot(), snr_db, rng);
}

Vector Swtcan::compress(const Observation& obs) const {
  if (obs.y.rows() != config_.n_subcarriers || obs.y.cols() != config_.pilot_slots) {
    throw ShapeError("compress: observation must be P x M");
  }
  ag::Tape tape(false);
  auto& self = const_cast<Swtcan&>(*this);  // grad-disabled tape never writes
  ag::Var code = self.build_compressor(tape, tape.constant(to_real_stack(obs.y)));
  return code.value().row(0).transpose();
}

CMatrix Swtcan::reconstruct(const Vector& code_hat) const {
  if (code_hat.size() != config_.code_len()) throw ShapeError("reconstruct: code length must equal L");
  ag::Tape tape(false);
  auto& self = const_cast<Swtcan&>(*this);
  ag::Var out = self.build_reconstructor(tape, tape.constant(code_hat.transpose()));
  return from_real_stack(out.value());
}

CMatrix Swtcan::acquire(const CMatrix& h, Rng& rng) const {
  Observation obs = pilot_forward(h, config_.snr_db, rng);
  Vector code = compress(obs);
  BitCodeword q = quantize(code, config_.bits_per_element);
  return reconstruct(dequantize(q, config_.bits_per_element));
}

double Swtcan::accumulate_gradients(const ChannelSample& sample, Rng& rng, double weight) {
  ag::Tape tape;
  ag::Var loss = build_loss(tape, sample, rng);
  const double value = loss.scalar();
  if (!std::isfinite(value)) throw DivergenceError("SWTCAN loss is not finite");
  if (loss.requires_grad()) tape.backward(loss, weight);
  return value;
}

std::vector<std::string> Swtcan::decoder_layers() const {
  std::vector<std::string> out;
  for (const auto& layer : params_.layers())
    if (layer.rfind("dec.", 0) == 0) out.push_back(layer);
  return out;
}

double evaluate_nmse(const Swtcan& model, std::span<const ChannelSample> samples,
                     std::uint64_t seed) {
  if (samples.empty()) throw std::invalid_argument("evaluate_nmse: empty sample set");
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng(derive_seed(seed, i));
    CMatrix est = model.acquire(samples[i].h, rng);
    total += loss_nmse(est, samples[i].h);
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train_e2e(Swtcan& model, std::span<const ChannelSample> train_set,
                      std::span<const ChannelSample> val_set,
                      const TrainOptions& options) {
  TrainResult result;
  if (options.epochs <= 0) return result;
  if (train_set.empty() || val_set.empty()) throw std::invalid_argument("train_e2e: datasets must be non-empty");
  if (options.batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");

  ParamSet& params = model.params();
  for (auto& p : params.items()) p.requires_grad = true;
  Adam adam;
  const long n = static_cast<long>(train_set.size());
  const long steps_per_epoch = (n + options.batch_size - 1) / options.batch_size;
  const long total_steps = steps_per_epoch * options.epochs;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(options.seed, 0x5eed));
  ParamSet best = params;
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng() % i);
      std::swap(order[i - 1], order[j]);
    }
    double train_sum = 0.0;
    for (long b0 = 0; b0 < n; b0 += options.batch_size) {
      const long b1 = std::min(n, b0 + options.batch_size);
      params.zero_grad();
      const double w = 1.0 / static_cast<double>(b1 - b0);
      for (long k = b0; k < b1; ++k) {
        Rng rng(derive_seed(options.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(k)));
        train_sum += model.accumulate_gradients(train_set[order[static_cast<std::size_t>(k)]], rng, w);
      }
      adam.step(params, cosine_lr(options.learning_rate, step, total_steps, options.lr_floor_ratio));
      model.project_pilot();
      ++step;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_nmse_db = channelsim::to_db(train_sum / static_cast<double>(n));
    rec.val_nmse_db = channelsim::to_db(evaluate_nmse(model, val_set, options.eval_seed));
    if (!std::isfinite(rec.val_nmse_db) && rec.val_nmse_db > 0) throw DivergenceError("validation NMSE diverged");
    result.history.push_back(rec);
    if (result.best_epoch < 0 || rec.val_nmse_db < result.best_val_nmse_db) {
      result.best_epoch = rec.epoch;
      result.best_val_nmse_db = rec.val_nmse_db;
      best = params;
    }
  }
  params = std::move(best);
  return result;
}

ParamPartition partition_params(const Swtcan& model, const std::string& spec) {
  const ParamSet& params = model.params();
  std::unordered_set<std::string> chosen_layers;
  std::unordered_set<std::string> chosen_params;
  if (spec == "all") {
    for (const auto& l : params.layers()) chosen_layers.insert(l);
  } else if (spec == "none") {
    // nothing trainable
  } else if (spec == "last-two-decoder-layers") {
    auto dec = model.decoder_layers();
    for (std::size_t i = dec.size() >= 2 ? dec.size() - 2 : 0; i < dec.size(); ++i) chosen_layers.insert(dec[i]);
  } else {
    auto layers = params.layers();
    std::unordered_set<std::string> known_layers(layers.begin(), layers.end());
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (item.empty()) continue;
      if (known_layers.contains(item)) {
        chosen_layers.insert(item);
      } else if (params.contains(item)) {
        chosen_params.insert(item);
      } else {
        throw ConfigError("partition", "unknown layer or parameter '" + item + "'");
      }
    }
  }
  ParamPartition part;
  part.spec = spec;
  for (const auto& p : params.items()) {
    const bool on = chosen_layers.contains(p.layer) || chosen_params.contains(p.name);
    (on ? part.trainable : part.frozen).push_back(p.name);
    if (on) part.d += static_cast<std::size_t>(p.value.size());
    part.total += static_cast<std::size_t>(p.value.size());
  }
  return part;
}

}  // namespace csigpt::swtcan
