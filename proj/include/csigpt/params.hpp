#pragma once

#include "csigpt/core.hpp"

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace csigpt {

struct Parameter {
  std::string name;
  // Name of the layer the parameter belongs to; partitions operate on layers.
  std::string layer;
  Matrix value;
  Matrix grad;
  bool requires_grad = true;
};

// Ordered collection of named parameters. Registration order is the
// canonical order for flattening into a single vector.
class ParamSet {
 public:
  Parameter& add(std::string name, std::string layer, Matrix init);

  Parameter& at(std::string_view name);
  const Parameter& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Parameter>& items() { return params_; }
  const std::vector<Parameter>& items() const { return params_; }

  // Distinct layer names in registration order.
  std::vector<std::string> layers() const;

  std::size_t scalar_count() const;
  std::size_t scalar_count(std::span<const std::string> names) const;

  void zero_grad();
  void set_requires_grad(std::span<const std::string> names);

  Vector flatten(std::span<const std::string> names) const;
  Vector flatten_grad(std::span<const std::string> names) const;
  void assign(std::span<const std::string> names, const Vector& flat);

  std::vector<std::string> names() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Glorot-uniform initialization for a fan_in x fan_out weight.
Matrix glorot_uniform(Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng);
Matrix normal_init(Eigen::Index rows, Eigen::Index cols, double stddev,
                   Rng& rng);

}  // namespace csigpt
