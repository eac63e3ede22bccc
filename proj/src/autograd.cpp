#include "csigpt/autograd.hpp"

#include "csigpt/params.hpp"

#include <cmath>

namespace csigpt::ag {

const Matrix& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.external = &p.value;
  if (p.requires_grad && grad_enabled_) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    }
    n.sink = &p.grad;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::variable(const Matrix& value, Matrix* grad_sink) {
  Node n;
  n.value = value;
  if (grad_sink != nullptr && grad_enabled_) {
    if (grad_sink->rows() != value.rows() || grad_sink->cols() != value.cols()) {
      *grad_sink = Matrix::Zero(value.rows(), value.cols());
    }
    n.sink = grad_sink;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::push(Matrix value, bool requires_grad, Backprop fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backprop = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.sink != nullptr) {
    *n.sink += g;
    return;
  }
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(const Var& root, double seed) {
  if (root.tape() != this) throw std::logic_error("backward: foreign Var");
  const Matrix& rv = value(root.id());
  if (rv.size() != 1) throw ShapeError("backward: root must be a scalar");
  accumulate(root.id(), Matrix::Constant(1, 1, seed));
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || !n.has_grad || !n.backprop) continue;
    Matrix g = std::move(n.grad);
    n.has_grad = false;
    n.backprop(*this, g);
  }
}

namespace {

void check_same_tape(const Var& a, const Var& b) {
  if (a.tape() != b.tape()) throw std::logic_error("operands on different tapes");
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var add(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "add");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                [ia, ib](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g);
                  tp.accumulate(ib, g);
                });
}

Var sub(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "sub");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                [ia, ib](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g);
                  if (tp.requires_grad(ib)) tp.accumulate(ib, -g);
                });
}

Var mul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  check_same_shape(a, b, "mul");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()),
                a.requires_grad() || b.requires_grad(),
                [ia, ib](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia))
                    tp.accumulate(ia, g.cwiseProduct(tp.value(ib)));
                  if (tp.requires_grad(ib))
                    tp.accumulate(ib, g.cwiseProduct(tp.value(ia)));
                });
}

Var scale(const Var& a, double s) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(a.value() * s, a.requires_grad(),
                [ia, s](Tape& tp, const Matrix& g) { tp.accumulate(ia, g * s); });
}

Var add_row(const Var& a, const Var& row) {
  check_same_tape(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: bias must be 1 x cols");
  }
  Tape& t = *a.tape();
  int ia = a.id(), ir = row.id();
  Matrix out = a.value();
  out.rowwise() += row.value().row(0);
  return t.push(std::move(out), a.requires_grad() || row.requires_grad(),
                [ia, ir](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g);
                  if (tp.requires_grad(ir)) tp.accumulate(ir, g.colwise().sum());
                });
}

Var matmul(const Var& a, const Var& b) {
  check_same_tape(a, b);
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimension mismatch");
  Tape& t = *a.tape();
  int ia = a.id(), ib = b.id();
  Matrix out = a.value() * b.value();
  return t.push(std::move(out), a.requires_grad() || b.requires_grad(),
                [ia, ib](Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ia))
                    tp.accumulate(ia, g * tp.value(ib).transpose());
                  if (tp.requires_grad(ib))
                    tp.accumulate(ib, tp.value(ia).transpose() * g);
                });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  check_same_tape(x, weight);
  check_same_tape(x, bias);
  if (x.cols() != weight.rows()) throw ShapeError("linear: input width mismatch");
  if (bias.rows() != 1 || bias.cols() != weight.cols()) {
    throw ShapeError("linear: bias must be 1 x out");
  }
  Tape& t = *x.tape();
  int ix = x.id(), iw = weight.id(), ib = bias.id();
  Matrix out = x.value() * weight.value();
  out.rowwise() += bias.value().row(0);
  bool rg = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  return t.push(std::move(out), rg, [ix, iw, ib](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(ix)) tp.accumulate(ix, g * tp.value(iw).transpose());
    if (tp.requires_grad(iw)) tp.accumulate(iw, tp.value(ix).transpose() * g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
  });
}

Var linear(const Var& x, const Var& weight) { return matmul(x, weight); }

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Tape& t = *parts[0].tape();
  Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  bool rg = false;
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
    rg = rg || p.requires_grad();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const Var& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return t.push(std::move(out), rg, [ids, widths](Tape& tp, const Matrix& g) {
    Eigen::Index c0 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (tp.requires_grad(ids[k])) tp.accumulate(ids[k], g.middleCols(c0, widths[k]));
      c0 += widths[k];
    }
  });
}

Var concat_cols(const Var& a, const Var& b) {
  Var parts[2] = {a, b};
  return concat_cols(std::span<const Var>(parts, 2));
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: range out of bounds");
  }
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::Index rows = a.rows(), cols = a.cols();
  return t.push(a.value().middleCols(start, count), a.requires_grad(),
                [ia, start, count, rows, cols](Tape& tp, const Matrix& g) {
                  Matrix full = Matrix::Zero(rows, cols);
                  full.middleCols(start, count) = g;
                  tp.accumulate(ia, full);
                });
}

Var gather(const Var& a, Eigen::Index rows, Eigen::Index cols,
           std::shared_ptr<const std::vector<int>> index) {
  if (static_cast<Eigen::Index>(index->size()) != rows * cols) {
    throw ShapeError("gather: index size does not match output shape");
  }
  const Matrix& src = a.value();
  const Eigen::Index src_cols = src.cols();
  const Eigen::Index src_size = src.size();
  Matrix out(rows, cols);
  const auto& idx = *index;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      int k = idx[static_cast<std::size_t>(i * cols + j)];
      if (k < 0 || k >= src_size) throw ShapeError("gather: index out of range");
      out(i, j) = src(k / src_cols, k % src_cols);
    }
  }
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::Index src_rows = src.rows();
  return t.push(std::move(out), a.requires_grad(),
                [ia, index, rows, cols, src_rows, src_cols](Tape& tp,
                                                            const Matrix& g) {
                  Matrix back = Matrix::Zero(src_rows, src_cols);
                  const auto& ix = *index;
                  for (Eigen::Index i = 0; i < rows; ++i) {
                    for (Eigen::Index j = 0; j < cols; ++j) {
                      int k = ix[static_cast<std::size_t>(i * cols + j)];
                      back(k / src_cols, k % src_cols) += g(i, j);
                    }
                  }
                  tp.accumulate(ia, back);
                });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw ShapeError("reshape: size mismatch");
  auto index = std::make_shared<std::vector<int>>(static_cast<std::size_t>(rows * cols));
  for (std::size_t k = 0; k < index->size(); ++k) (*index)[k] = static_cast<int>(k);
  return gather(a, rows, cols, std::move(index));
}

Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  const Matrix& x = a.value();
  Matrix out = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(std::move(out), a.requires_grad(), [ia](Tape& tp, const Matrix& g) {
    const Matrix& xv = tp.value(ia);
    Matrix d = xv.unaryExpr([](double v) {
      double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      return cdf + v * pdf;
    });
    tp.accumulate(ia, g.cwiseProduct(d));
  });
}

Var sigmoid(const Var& a) {
  Matrix out = a.value().unaryExpr([](double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix s = out;
  return t.push(std::move(out), a.requires_grad(),
                [ia, s = std::move(s)](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
                });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp().matrix();
  Tape& t = *a.tape();
  int ia = a.id();
  Matrix e = out;
  return t.push(std::move(out), a.requires_grad(),
                [ia, e = std::move(e)](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, g.cwiseProduct(e));
                });
}

Var leaky_relu(const Var& a, double slope) {
  Matrix out = a.value().unaryExpr([slope](double v) { return v > 0 ? v : slope * v; });
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(std::move(out), a.requires_grad(), [ia, slope](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix d = x.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; });
    tp.accumulate(ia, g.cwiseProduct(d));
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(std::move(out), a.requires_grad(), [ia, lo, hi](Tape& tp, const Matrix& g) {
    const Matrix& x = tp.value(ia);
    Matrix d = x.unaryExpr([lo, hi](double v) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
    tp.accumulate(ia, g.cwiseProduct(d));
  });
}

Var sum(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  Eigen::Index r = a.rows(), c = a.cols();
  return t.push(Matrix::Constant(1, 1, a.value().sum()), a.requires_grad(),
                [ia, r, c](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, Matrix::Constant(r, c, g(0, 0)));
                });
}

Var sum_squares(const Var& a) {
  Tape& t = *a.tape();
  int ia = a.id();
  return t.push(Matrix::Constant(1, 1, a.value().squaredNorm()), a.requires_grad(),
                [ia](Tape& tp, const Matrix& g) {
                  tp.accumulate(ia, tp.value(ia) * (2.0 * g(0, 0)));
                });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
  check_same_tape(x, gain);
  check_same_tape(x, bias);
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.rows(), c = xv.cols();
  if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
    throw ShapeError("layer_norm: gain/bias must be 1 x C");
  }
  Matrix xhat(n, c);
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mu = xv.row(i).mean();
    double var = (xv.row(i).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(i) = is;
    xhat.row(i) = (xv.row(i).array() - mu) * is;
  }
  Matrix out = xhat;
  out.array().rowwise() *= gain.value().row(0).array();
  out.rowwise() += bias.value().row(0);
  Tape& t = *x.tape();
  int ix = x.id(), ig = gain.id(), ib = bias.id();
  bool rg = x.requires_grad() || gain.requires_grad() || bias.requires_grad();
  return t.push(std::move(out), rg,
                [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                    Tape& tp, const Matrix& g) {
                  if (tp.requires_grad(ib)) tp.accumulate(ib, g.colwise().sum());
                  if (tp.requires_grad(ig)) tp.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
                  if (!tp.requires_grad(ix)) return;
                  Matrix gx = g;
                  gx.array().rowwise() *= tp.value(ig).row(0).array();
                  const double c_inv = 1.0 / static_cast<double>(gx.cols());
                  Matrix dx(gx.rows(), gx.cols());
                  for (Eigen::Index i = 0; i < gx.rows(); ++i) {
                    double m1 = gx.row(i).sum() * c_inv;
                    double m2 = gx.row(i).dot(xhat.row(i)) * c_inv;
                    dx.row(i) = inv_std(i) * (gx.row(i).array() - m1 - xhat.row(i).array() * m2);
                  }
                  tp.accumulate(ix, dx);
                });
}

Var window_attention(const Var& qkv, int heads,
                     std::shared_ptr<const WindowLayout> layout,
                     const Var& rel_bias) {
  const Matrix& in = qkv.value();
  const WindowLayout& L = *layout;
  const Eigen::Index total = in.rows();
  if (in.cols() % 3 != 0) throw ShapeError("window_attention: qkv width not divisible by 3");
  const Eigen::Index c = in.cols() / 3;
  if (heads <= 0 || c % heads != 0) throw ShapeError("window_attention: heads must divide width");
  if (total != static_cast<Eigen::Index>(L.n_windows) * L.tokens) {
    throw ShapeError("window_attention: token count does not match layout");
  }
  const bool use_bias = rel_bias.valid();
  if (use_bias && (rel_bias.rows() != L.rel_table_rows || rel_bias.cols() != heads)) {
    throw ShapeError("window_attention: relative bias table shape mismatch");
  }
  const Eigen::Index dh = c / heads;
  const Eigen::Index n = L.tokens;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  // Attention probabilities per (window, head) are kept for backward.
  auto probs = std::make_shared<std::vector<Matrix>>(
      static_cast<std::size_t>(L.n_windows * heads));
  Matrix out(total, c);
  Matrix bias_h(n, n);
  for (int h = 0; h < heads; ++h) {
    if (use_bias) {
      const Matrix& table = rel_bias.value();
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          bias_h(i, j) = table(L.rel_index[static_cast<std::size_t>(i * n + j)], h);
    }
    for (int w = 0; w < L.n_windows; ++w) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(w) * n;
      auto q = in.block(r0, h * dh, n, dh);
      auto k = in.block(r0, c + h * dh, n, dh);
      auto v = in.block(r0, 2 * c + h * dh, n, dh);
      Matrix s = (q * k.transpose()) * sc;
      if (use_bias) s += bias_h;
      if (!L.masks.empty()) s += L.masks[static_cast<std::size_t>(w)];
      for (Eigen::Index i = 0; i < n; ++i) {
        double mx = s.row(i).maxCoeff();
        s.row(i) = (s.row(i).array() - mx).exp();
        s.row(i) /= s.row(i).sum();
      }
      out.block(r0, h * dh, n, dh) = s * v;
      (*probs)[static_cast<std::size_t>(w * heads + h)] = std::move(s);
    }
  }

  Tape& t = *qkv.tape();
  int iq = qkv.id();
  int ib = use_bias ? rel_bias.id() : -1;
  bool rg = qkv.requires_grad() || (use_bias && rel_bias.requires_grad());
  return t.push(std::move(out), rg,
                [iq, ib, heads, layout, probs, c, dh, n, sc](Tape& tp, const Matrix& g) {
                  const WindowLayout& Ly = *layout;
                  const Matrix& x = tp.value(iq);
                  const bool want_bias = ib >= 0 && tp.requires_grad(ib);
                  Matrix gx = Matrix::Zero(x.rows(), x.cols());
                  Matrix gtable;
                  if (want_bias) gtable = Matrix::Zero(Ly.rel_table_rows, heads);
                  for (int h = 0; h < heads; ++h) {
                    Matrix gs_sum;
                    if (want_bias) gs_sum = Matrix::Zero(n, n);
                    for (int w = 0; w < Ly.n_windows; ++w) {
                      const Eigen::Index r0 = static_cast<Eigen::Index>(w) * n;
                      const Matrix& a = (*probs)[static_cast<std::size_t>(w * heads + h)];
                      auto q = x.block(r0, h * dh, n, dh);
                      auto k = x.block(r0, c + h * dh, n, dh);
                      auto v = x.block(r0, 2 * c + h * dh, n, dh);
                      auto go = g.block(r0, h * dh, n, dh);
                      Matrix ga = go * v.transpose();
                      gx.block(r0, 2 * c + h * dh, n, dh) += a.transpose() * go;
                      Matrix gs = a.cwiseProduct(
                          (ga.colwise() - a.cwiseProduct(ga).rowwise().sum()));
                      if (want_bias) gs_sum += gs;
                      gx.block(r0, h * dh, n, dh) += (gs * k) * sc;
                      gx.block(r0, c + h * dh, n, dh) += (gs.transpose() * q) * sc;
                    }
                    if (want_bias) {
                      for (Eigen::Index i = 0; i < n; ++i)
                        for (Eigen::Index j = 0; j < n; ++j)
                          gtable(Ly.rel_index[static_cast<std::size_t>(i * n + j)], h) += gs_sum(i, j);
                    }
                  }
                  if (tp.requires_grad(iq)) tp.accumulate(iq, gx);
                  if (want_bias) tp.accumulate(ib, gtable);
                });
}

}  // namespace csigpt::ag
