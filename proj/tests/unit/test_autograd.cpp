#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "csigpt/autograd.hpp"
#include "csigpt/optim.hpp"
#include "csigpt/params.hpp"
#include "gradcheck.hpp"

#include <numeric>

using namespace csigpt;
using csigpt::testing::central_difference;
using csigpt::testing::close;
using csigpt::testing::random_matrix;

namespace {

// Checks d/dx sum(R .* f(x)) for every entry of every input against central
// differences.
void check_op(std::vector<Matrix> inputs,
              const std::function<ag::Var(ag::Tape&, std::vector<ag::Var>&)>& op,
              double rtol = 1e-6) {
  Rng rng(99);
  Matrix weights;
  auto forward = [&]() {
    ag::Tape tape(false);
    std::vector<ag::Var> vars;
    for (auto& m : inputs) vars.push_back(tape.constant(m));
    ag::Var out = op(tape, vars);
    if (weights.size() == 0) weights = random_matrix(out.rows(), out.cols(), rng);
    return out.value().cwiseProduct(weights).sum();
  };
  forward();
  std::vector<Matrix> grads(inputs.size());
  {
    ag::Tape tape;
    std::vector<ag::Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.variable(inputs[i], &grads[i]));
    ag::Var out = op(tape, vars);
    ag::Var loss = ag::sum(ag::mul(out, tape.constant(weights)));
    tape.backward(loss);
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].rows(); ++i)
      for (Eigen::Index j = 0; j < inputs[k].cols(); ++j) {
        double fd = central_difference(forward, inputs[k](i, j));
        INFO("input " << k << " (" << i << "," << j << ")");
        CHECK(close(grads[k](i, j), fd, rtol, 1e-7));
      }
  }
}

}  // namespace

TEST_CASE("elementwise and matrix ops match finite differences") {
  Rng rng(1);
  Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  check_op({a, b}, [](ag::Tape&, auto& v) { return ag::add(v[0], v[1]); });
  check_op({a, b}, [](ag::Tape&, auto& v) { return ag::sub(v[0], v[1]); });
  check_op({a, b}, [](ag::Tape&, auto& v) { return ag::mul(v[0], v[1]); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::scale(v[0], -2.5); });
  check_op({a, random_matrix(4, 5, rng)}, [](ag::Tape&, auto& v) { return ag::matmul(v[0], v[1]); });
  check_op({a, random_matrix(4, 2, rng), random_matrix(1, 2, rng)},
           [](ag::Tape&, auto& v) { return ag::linear(v[0], v[1], v[2]); });
  check_op({a, random_matrix(1, 4, rng)}, [](ag::Tape&, auto& v) { return ag::add_row(v[0], v[1]); });
  check_op({a, random_matrix(3, 2, rng)}, [](ag::Tape&, auto& v) { return ag::concat_cols(v[0], v[1]); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::slice_cols(v[0], 1, 2); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::reshape(v[0], 2, 6); });
}

TEST_CASE("nonlinearities and reductions match finite differences") {
  Rng rng(2);
  Matrix a = random_matrix(4, 3, rng);
  check_op({a}, [](ag::Tape&, auto& v) { return ag::gelu(v[0]); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::sigmoid(v[0]); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::exp(v[0]); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::leaky_relu(v[0], 0.1); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::clamp(v[0], -0.5, 0.5); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::sum_squares(v[0]); });
  check_op({a}, [](ag::Tape&, auto& v) { return ag::sum(v[0]); });
  check_op({a, random_matrix(1, 3, rng), random_matrix(1, 3, rng)},
           [](ag::Tape&, auto& v) { return ag::layer_norm(v[0], v[1], v[2]); });
}

TEST_CASE("gather with repeated indices accumulates gradient") {
  Rng rng(3);
  auto idx = std::make_shared<std::vector<int>>(std::vector<int>{0, 0, 5, 3, 3, 3});
  check_op({random_matrix(2, 3, rng)}, [idx](ag::Tape&, auto& v) { return ag::gather(v[0], 2, 3, idx); });
}

TEST_CASE("window attention matches finite differences with bias and masks") {
  Rng rng(4);
  auto layout = std::make_shared<ag::WindowLayout>();
  layout->n_windows = 2;
  layout->tokens = 4;  // 2x2 windows
  layout->rel_table_rows = 9;
  for (int k1 = 0; k1 < 4; ++k1)
    for (int k2 = 0; k2 < 4; ++k2)
      layout->rel_index.push_back((k1 / 2 - k2 / 2 + 1) * 3 + (k1 % 2 - k2 % 2 + 1));
  Matrix mask = Matrix::Zero(4, 4);
  mask(0, 3) = mask(3, 0) = -100.0;
  layout->masks = {Matrix::Zero(4, 4), mask};
  const int heads = 2;
  check_op({random_matrix(8, 12, rng), random_matrix(9, heads, rng, 0.1)},
           [layout](ag::Tape&, auto& v) { return ag::window_attention(v[0], heads, layout, v[1]); });
  auto plain = std::make_shared<ag::WindowLayout>(*layout);
  plain->masks.clear();
  check_op({random_matrix(8, 12, rng)},
           [plain](ag::Tape&, auto& v) { return ag::window_attention(v[0], heads, plain, ag::Var()); });
}

TEST_CASE("window attention without position bias is permutation equivariant inside a window") {
  Rng rng(5);
  auto layout = std::make_shared<ag::WindowLayout>();
  layout->n_windows = 1;
  layout->tokens = 5;
  layout->rel_table_rows = 1;
  layout->rel_index.assign(25, 0);
  Matrix qkv = random_matrix(5, 6, rng);
  std::vector<int> perm = {3, 0, 4, 1, 2};
  Matrix permuted(5, 6);
  for (int i = 0; i < 5; ++i) permuted.row(i) = qkv.row(perm[static_cast<std::size_t>(i)]);
  ag::Tape tape(false);
  Matrix out = ag::window_attention(tape.constant(qkv), 2, layout, ag::Var()).value();
  Matrix out_p = ag::window_attention(tape.constant(permuted), 2, layout, ag::Var()).value();
  for (int i = 0; i < 5; ++i) {
    CHECK((out_p.row(i) - out.row(perm[static_cast<std::size_t>(i)])).norm() < 1e-12);
  }
}

TEST_CASE("frozen leaves receive no gradient and are not visited") {
  ParamSet ps;
  ps.add("w", "l0", Matrix::Constant(2, 2, 1.0));
  ps.add("v", "l1", Matrix::Constant(2, 2, 2.0));
  ps.at("w").requires_grad = false;
  ps.zero_grad();
  ag::Tape tape;
  ag::Var x = tape.constant(Matrix::Identity(2, 2));
  ag::Var y = ag::matmul(ag::matmul(x, tape.parameter(ps.at("w"))), tape.parameter(ps.at("v")));
  tape.backward(ag::sum(y));
  CHECK(ps.at("w").grad.isZero());
  CHECK(ps.at("v").grad.sum() > 0.0);
}

TEST_CASE("backward rejects non-scalar roots") {
  ag::Tape tape;
  Matrix g;
  ag::Var x = tape.variable(Matrix::Ones(2, 2), &g);
  CHECK_THROWS_AS(tape.backward(x), ShapeError);
}

TEST_CASE("param set flatten and assign are inverse in registration order") {
  Rng rng(6);
  ParamSet ps;
  ps.add("a", "l0", random_matrix(2, 3, rng));
  ps.add("b", "l1", random_matrix(1, 4, rng));
  std::vector<std::string> names = {"b", "a"};
  Vector flat = ps.flatten(names);
  CHECK(flat.size() == 10);
  CHECK(flat(0) == ps.at("b").value(0, 0));
  Vector twice = 2.0 * flat;
  ps.assign(names, twice);
  CHECK(ps.flatten(names).isApprox(twice));
  CHECK_THROWS_AS(ps.assign(names, Vector::Zero(3)), ShapeError);
  CHECK_THROWS(ps.add("a", "l2", Matrix::Zero(1, 1)));
}

TEST_CASE("adam minimizes a quadratic") {
  ParamSet ps;
  ps.add("x", "l", Matrix::Constant(1, 3, 5.0));
  Adam adam;
  for (int i = 0; i < 2000; ++i) {
    ps.zero_grad();
    ps.at("x").grad = 2.0 * (ps.at("x").value.array() - 1.0).matrix();
    adam.step(ps, 0.05);
  }
  CHECK((ps.at("x").value.array() - 1.0).abs().maxCoeff() < 1e-3);
  CHECK(cosine_lr(1.0, 0, 10) == doctest::Approx(1.0));
  CHECK(cosine_lr(1.0, 9, 10, 0.1) == doctest::Approx(0.1));
}
