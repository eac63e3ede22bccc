#pragma once

#include "csigpt/params.hpp"

#include <vector>

namespace csigpt {

// Cosine decay from `base` to `base * floor_ratio` over `total_steps`.
double cosine_lr(double base, long step, long total_steps,
                 double floor_ratio = 0.0);

// Adaptive-moment SGD with bias correction, over every parameter whose
// requires_grad flag is set.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam() = default;
  explicit Adam(Options opts) : opts_(opts) {}

  void step(ParamSet& params, double lr);
  long steps() const { return t_; }

 private:
  Options opts_{};
  long t_ = 0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

// Same update on a flat vector.
class FlatAdam {
 public:
  explicit FlatAdam(Eigen::Index dim, Adam::Options opts = {})
      : opts_(opts), m_(Vector::Zero(dim)), v_(Vector::Zero(dim)) {}
  void step(Vector& theta, const Vector& grad, double lr);

 private:
  Adam::Options opts_;
  Vector m_, v_;
  long t_ = 0;
};

}  // namespace csigpt
