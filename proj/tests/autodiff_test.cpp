#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "ngramgrad/autodiff.hpp"

using namespace ngramgrad;

namespace {

Matrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double lo,
                     double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = u(rng);
  return m;
}

// Reduces a non-scalar output to a scalar with fixed random weights so every
// output coordinate carries a distinct adjoint.
Var weighted_sum(Tape& tape, Var y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sum(y * tape.constant(random_matrix(rng, y.rows(), y.cols(), -1.0, 1.0)));
}

struct PrimitiveCase {
  std::string name;
  std::size_t rows;
  std::size_t cols;
  double lo;
  double hi;
  std::function<Var(Tape&, Var, const Matrix&)> fn;
};

std::vector<PrimitiveCase> primitive_cases() {
  // `other` is a second operand drawn per point; it enters as a constant.
  return {
      {"add", 2, 3, -2, 2, [](Tape& t, Var x, const Matrix& o) { return x + t.constant(o); }},
      {"add_row_broadcast", 1, 3, -2, 2,
       [](Tape& t, Var x, const Matrix&) { return t.constant(Matrix(4, 3, 0.25)) + x; }},
      {"mul_col_broadcast", 2, 1, -2, 2,
       [](Tape& t, Var x, const Matrix&) {
         return x * t.constant(Matrix(2, 3, std::vector<double>{1, 2, 3, -1, -2, 0.5}));
       }},
      {"div_scalar_broadcast", 1, 1, 0.5, 2,
       [](Tape& t, Var x, const Matrix&) { return t.constant(Matrix::row({1.0, -2.0})) / x; }},
      {"sub", 2, 3, -2, 2, [](Tape& t, Var x, const Matrix& o) { return t.constant(o) - x; }},
      {"mul", 2, 3, -2, 2, [](Tape& t, Var x, const Matrix& o) { return x * t.constant(o) * x; }},
      {"div_num", 2, 3, -2, 2,
       [](Tape& t, Var x, const Matrix& o) {
         Matrix d = o;
         for (double& v : d.flat()) v = 1.5 + std::abs(v);
         return x / t.constant(d);
       }},
      {"div_den", 2, 3, 0.5, 2, [](Tape& t, Var x, const Matrix& o) { return t.constant(o) / x; }},
      {"min", 2, 3, -2, 2, [](Tape& t, Var x, const Matrix& o) { return min(x, t.constant(o)); }},
      {"matmul_left", 2, 3, -1, 1,
       [](Tape& t, Var x, const Matrix& o) {
         Matrix w(3, 4);
         for (std::size_t i = 0; i < w.size(); ++i) w[i] = o[i % o.size()] + 0.1 * i;
         return matmul(x, t.constant(w));
       }},
      {"matmul_right", 2, 3, -1, 1,
       [](Tape& t, Var x, const Matrix& o) {
         Matrix w(4, 2);
         for (std::size_t i = 0; i < w.size(); ++i) w[i] = o[i % o.size()] - 0.05 * i;
         return matmul(t.constant(w), x);
       }},
      {"tanh", 2, 3, -2, 2, [](Tape&, Var x, const Matrix&) { return tanh(x); }},
      {"sigmoid", 2, 3, -3, 3, [](Tape&, Var x, const Matrix&) { return sigmoid(x); }},
      {"exp", 2, 3, -2, 2, [](Tape&, Var x, const Matrix&) { return exp(x); }},
      {"log", 2, 3, 0.1, 3, [](Tape&, Var x, const Matrix&) { return log(x); }},
      {"gather_rows", 3, 2, -2, 2,
       [](Tape&, Var x, const Matrix&) { return gather_rows(x, {2, 0, 2, 1}); }},
      {"concat_rows", 2, 3, -2, 2,
       [](Tape& t, Var x, const Matrix& o) { return concat({x, t.constant(o), x}, 0); }},
      {"concat_cols", 2, 3, -2, 2,
       [](Tape& t, Var x, const Matrix& o) { return concat({t.constant(o), x}, 1); }},
      {"sum", 2, 3, -2, 2, [](Tape&, Var x, const Matrix&) { return sum(x) * sum(x); }},
      {"softmax", 2, 4, -3, 3, [](Tape&, Var x, const Matrix&) { return softmax(x); }},
      {"scale", 2, 3, -2, 2, [](Tape&, Var x, const Matrix&) { return scale(x, -2.5); }},
      {"reshape", 2, 3, -2, 2, [](Tape&, Var x, const Matrix&) { return reshape(x, 3, 2); }},
  };
}

}  // namespace

TEST(AutodiffForward, Multiply) {
  Tape tape;
  EXPECT_EQ((tape.leaf(Matrix::scalar(2)) * tape.leaf(Matrix::scalar(3))).item(), 6.0);
}

TEST(AutodiffForward, SoftmaxOfZerosIsUniform) {
  Tape tape;
  const Matrix out = softmax(tape.leaf(Matrix::row({0.0, 0.0}))).value();
  EXPECT_EQ(out, Matrix::row({0.5, 0.5}));
}

TEST(AutodiffForward, SoftmaxSurvivesLargeLogits) {
  Tape tape;
  const Matrix out = softmax(tape.leaf(Matrix::row({1000.0, 1000.0, -1000.0}))).value();
  EXPECT_DOUBLE_EQ(out[0], 0.5);
  EXPECT_DOUBLE_EQ(out[1], 0.5);
  EXPECT_EQ(out[2], 0.0);
}

TEST(AutodiffForward, ScalarMin) {
  Tape tape;
  EXPECT_EQ(min(tape.leaf(Matrix::scalar(0.7)), tape.constant(1.0)).item(), 0.7);
}

TEST(AutodiffForward, LogOfZeroIsFloored) {
  Tape tape;
  EXPECT_DOUBLE_EQ(log(tape.leaf(Matrix::scalar(0.0))).item(), std::log(1e-12));
}

TEST(AutodiffForward, ShapeMismatchNamesPrimitiveAndShapes) {
  Tape tape;
  Var a = tape.leaf(Matrix(2, 3));
  Var b = tape.leaf(Matrix(3, 2));
  try {
    (void)add(a, b);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos) << msg;
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3x2"), std::string::npos) << msg;
  }
  EXPECT_THROW((void)matmul(a, a), Error);
  EXPECT_THROW((void)concat({a, b}, 0), Error);
  EXPECT_THROW((void)gather_rows(a, {2}), Error);
}

TEST(AutodiffBackward, ProductRule) {
  Tape tape;
  Var x = tape.leaf(Matrix::scalar(2));
  Var y = tape.leaf(Matrix::scalar(3));
  tape.backward(x * y);
  EXPECT_EQ(x.adjoint().item(), 3.0);
  EXPECT_EQ(y.adjoint().item(), 2.0);
}

TEST(AutodiffBackward, Log) {
  Tape tape;
  Var x = tape.leaf(Matrix::scalar(4));
  tape.backward(log(x));
  EXPECT_EQ(x.adjoint().item(), 0.25);
}

TEST(AutodiffBackward, MinRoutesToSmallerArgument) {
  for (auto [x0, expected] : {std::pair{0.7, 1.0}, std::pair{1.3, 0.0}}) {
    Tape tape;
    Var x = tape.leaf(Matrix::scalar(x0));
    tape.backward(min(x, tape.constant(1.0)));
    EXPECT_EQ(x.adjoint().item(), expected) << "x = " << x0;
  }
}

TEST(AutodiffBackward, MinTieGoesToFirstArgument) {
  Tape tape;
  Var a = tape.leaf(Matrix::scalar(1.0));
  Var b = tape.leaf(Matrix::scalar(1.0));
  tape.backward(min(a, b));
  EXPECT_EQ(a.adjoint().item(), 1.0);
  EXPECT_EQ(b.adjoint().item(), 0.0);
}

TEST(AutodiffBackward, NonScalarRootIsAnError) {
  Tape tape;
  Var x = tape.leaf(Matrix::row({1.0, 2.0}));
  EXPECT_THROW(tape.backward(x * x), Error);
}

TEST(AutodiffBackward, SecondBackwardIsAnError) {
  Tape tape;
  Var x = tape.leaf(Matrix::scalar(1.0));
  Var y = x * x;
  tape.backward(y);
  EXPECT_THROW(tape.backward(y), Error);
}

TEST(AutodiffBackward, RecordingOnStaleTapeIsAnError) {
  Tape tape;
  Var x = tape.leaf(Matrix::scalar(1.0));
  tape.backward(x * x);
  EXPECT_THROW((void)(x + x), Error);
  tape.clear();
  Var z = tape.leaf(Matrix::scalar(2.0));
  tape.backward(z * z);
  EXPECT_EQ(z.adjoint().item(), 4.0);
}

TEST(AutodiffBackward, AdjointShapeMatchesValue) {
  Tape tape;
  Var x = tape.leaf(Matrix(3, 2, 0.5));
  Var y = sum(softmax(matmul(x, tape.constant(Matrix(2, 4, 0.1)))));
  tape.backward(y);
  EXPECT_TRUE(x.adjoint().same_shape(x.value()));
}

TEST(AutodiffBackward, ParamsAccumulateIntoExternalGrad) {
  Matrix value = Matrix::row({1.0, 2.0});
  Matrix grad(1, 2);
  for (int round = 0; round < 2; ++round) {
    Tape tape;
    Var p = tape.param(value, grad);
    tape.backward(sum(p * p));
  }
  EXPECT_EQ(grad, Matrix::row({4.0, 8.0}));
}

TEST(AutodiffBackward, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Matrix::scalar(3.0));
  Var x = tape.leaf(Matrix::scalar(2.0));
  tape.backward(c * x);
  EXPECT_EQ(x.adjoint().item(), 3.0);
}

TEST(AutodiffBackward, LinearityOfAccumulation) {
  for (int k : {1, 2, 5, 17}) {
    Tape tape;
    Var x = tape.leaf(Matrix::scalar(0.3));
    Var total = x;
    for (int i = 1; i < k; ++i) total = total + x;
    tape.backward(total);
    EXPECT_EQ(x.adjoint().item(), static_cast<double>(k));
  }
}

TEST(AutodiffBackward, EveryPrimitiveMatchesFiniteDifferences) {
  for (const PrimitiveCase& pc : primitive_cases()) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(1000 + seed);
      const Matrix point = random_matrix(rng, pc.rows, pc.cols, pc.lo, pc.hi);
      const Matrix other = random_matrix(rng, pc.rows, pc.cols, pc.lo, pc.hi);
      const double err = grad_check(
          [&](Tape& t, Var x) { return weighted_sum(t, pc.fn(t, x, other), seed); }, point,
          1e-6);
      EXPECT_LE(err, 1e-5) << pc.name << " seed " << seed;
    }
  }
}

TEST(AutodiffDeterminism, IdenticalInputsGiveBitIdenticalResults) {
  auto run = [] {
    std::mt19937_64 rng(42);
    Tape tape;
    Var x = tape.leaf(random_matrix(rng, 4, 5, -1, 1));
    Var w = tape.leaf(random_matrix(rng, 5, 3, -1, 1));
    Var y = sum(log(softmax(tanh(matmul(x, w)))));
    tape.backward(y);
    return std::pair{y.item(), w.adjoint()};
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(GradCheck, ExactQuadratic) {
  const double err =
      grad_check([](Tape&, Var x) { return x * x; }, Matrix::scalar(3.0), 1e-4);
  EXPECT_LE(err, 1e-6);
}

TEST(GradCheck, SoftmaxCrossEntropy) {
  const double err = grad_check(
      [](Tape&, Var logits) { return scale(log(element(softmax(logits), 0, 1)), -1.0); },
      Matrix::row({0.3, -1.2, 2.0}), 1e-5);
  EXPECT_LE(err, 1e-5);
}

TEST(GradCheck, ReportsWrongGradient) {
  const double err = grad_check([](const Matrix& p) { return p[0] * p[0]; },
                                Matrix::scalar(1.0), Matrix::scalar(3.0), 1e-4);
  EXPECT_NEAR(err, 5.0 / 6.0, 1e-6);
}

TEST(GradCheck, NonFiniteProbeNamesCoordinate) {
  try {
    (void)grad_check([](const Matrix& p) { return p[1] > 1.0005 ? std::log(-1.0) : 0.0; },
                     Matrix::row({0.0, 0.0}), Matrix::row({1.0, 1.0}), 1e-3);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos) << e.what();
  }
}
