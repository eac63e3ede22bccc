#include "csigpt/params.hpp"

#include <cmath>
#include <unordered_set>

namespace csigpt {

Parameter& ParamSet::add(std::string name, std::string layer, Matrix init) {
  if (index_.contains(name)) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
  index_.emplace(name, params_.size());
  Parameter p;
  p.name = std::move(name);
  p.layer = std::move(layer);
  p.grad = Matrix::Zero(init.rows(), init.cols());
  p.value = std::move(init);
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter& ParamSet::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return params_[it->second];
}

const Parameter& ParamSet::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter: " + std::string(name));
  return params_[it->second];
}

bool ParamSet::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::vector<std::string> ParamSet::layers() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& p : params_) {
    if (seen.insert(p.layer).second) out.push_back(p.layer);
  }
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::size_t ParamSet::scalar_count(std::span<const std::string> names) const {
  std::size_t n = 0;
  for (const auto& name : names) n += static_cast<std::size_t>(at(name).value.size());
  return n;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      p.grad = Matrix::Zero(p.value.rows(), p.value.cols());
    } else {
      p.grad.setZero();
    }
  }
}

void ParamSet::set_requires_grad(std::span<const std::string> names) {
  std::unordered_set<std::string> on(names.begin(), names.end());
  for (auto& p : params_) p.requires_grad = on.contains(p.name);
}

Vector ParamSet::flatten(std::span<const std::string> names) const {
  Vector out(static_cast<Eigen::Index>(scalar_count(names)));
  Eigen::Index off = 0;
  for (const auto& name : names) {
    const Matrix& v = at(name).value;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) out(off++) = v(i, j);
  }
  return out;
}

Vector ParamSet::flatten_grad(std::span<const std::string> names) const {
  Vector out(static_cast<Eigen::Index>(scalar_count(names)));
  Eigen::Index off = 0;
  for (const auto& name : names) {
    const Parameter& p = at(name);
    for (Eigen::Index i = 0; i < p.value.rows(); ++i)
      for (Eigen::Index j = 0; j < p.value.cols(); ++j)
        out(off++) = p.grad.size() == p.value.size() ? p.grad(i, j) : 0.0;
  }
  return out;
}

void ParamSet::assign(std::span<const std::string> names, const Vector& flat) {
  if (static_cast<std::size_t>(flat.size()) != scalar_count(names)) {
    throw ShapeError("ParamSet::assign: vector length does not match parameter subset");
  }
  Eigen::Index off = 0;
  for (const auto& name : names) {
    Matrix& v = at(name).value;
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) = flat(off++);
  }
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.name);
  return out;
}

Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < fan_in; ++i)
    for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = (2.0 * uniform01(rng) - 1.0) * limit;
  return w;
}

Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix w(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) w(i, j) = stddev * standard_normal(rng);
  return w;
}

}  // namespace csigpt
