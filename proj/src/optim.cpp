#include "csigpt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace csigpt {

double cosine_lr(double base, long step, long total_steps, double floor_ratio) {
  if (total_steps <= 1) return base;
  double frac = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps - 1), 0.0, 1.0);
  double cosv = 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
  return base * (floor_ratio + (1.0 - floor_ratio) * cosv);
}

void Adam::step(ParamSet& params, double lr) {
  auto& items = params.items();
  if (m_.size() != items.size()) {
    m_.clear();
    v_.clear();
    for (const auto& p : items) {
      m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < items.size(); ++i) {
    Parameter& p = items[i];
    if (!p.requires_grad) continue;
    m_[i] = opts_.beta1 * m_[i] + (1.0 - opts_.beta1) * p.grad;
    v_[i] = opts_.beta2 * v_[i] + (1.0 - opts_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + opts_.eps);
  }
}

void FlatAdam::step(Vector& theta, const Vector& grad, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  m_ = opts_.beta1 * m_ + (1.0 - opts_.beta1) * grad;
  v_ = opts_.beta2 * v_ + (1.0 - opts_.beta2) * grad.cwiseAbs2();
  theta.array() -= lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + opts_.eps);
}

}  // namespace csigpt
