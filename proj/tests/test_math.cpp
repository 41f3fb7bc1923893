#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "fedsim/adam.hpp"
#include "fedsim/common.hpp"
#include "fedsim/gradcheck.hpp"
#include "fedsim/matrix.hpp"

using namespace fedsim;

TEST(MixSeed, DeterministicAndSpread) {
  EXPECT_EQ(mix_seed(1, 2), mix_seed(1, 2));
  EXPECT_NE(mix_seed(1, 2), mix_seed(2, 1));
  EXPECT_NE(mix_seed(1, 2), mix_seed(1, 3));
  EXPECT_NE(mix_seed(0, 0), 0u);
  EXPECT_EQ(mix_seed(7, 8, 9), mix_seed(7, 8, 9));
  EXPECT_NE(mix_seed(7, 8, 9), mix_seed(7, 9, 8));
}

TEST(Matrix, Norms) {
  Matrix m = zeros(1, 2);
  m.a = {3.0, 4.0};
  EXPECT_DOUBLE_EQ(l2_norm(m.a), 5.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(m), 5.0);
  EXPECT_DOUBLE_EQ(lp_norm(m.a, 1.0), 7.0);
  EXPECT_NEAR(lp_norm(m.a, 2.0), 5.0, 1e-12);
}

TEST(Matrix, AxpyScaleDiff) {
  Matrix x = zeros(2, 2), y = zeros(2, 2);
  x.a = {1, 2, 3, 4};
  y.a = {10, 20, 30, 40};
  axpy(2.0, x, y);
  EXPECT_DOUBLE_EQ(y.a[0], 12.0);
  EXPECT_DOUBLE_EQ(y.a[3], 48.0);
  scale(y, 0.5);
  EXPECT_DOUBLE_EQ(y.a[0], 6.0);
  EXPECT_DOUBLE_EQ(max_abs_diff(x, x), 0.0);
  EXPECT_DOUBLE_EQ(dot(x.a, x.a), 30.0);
}

TEST(Adam, ZeroGradIsFixedPoint) {
  Matrix v = zeros(1, 3);
  v.a = {1.0, -2.0, 0.5};
  const std::vector<double> before = v.a;
  AdamState st = make_adam_state(1, 3);
  std::vector<double> g(3, 0.0);
  for (int i = 0; i < 5; ++i) adam_step(std::span<double>(v.a), std::span<const double>(g), st, 0.1);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(v.a[t], before[t], 1e-12);
}

TEST(Adam, FirstStepMagnitude) {
  Matrix v = zeros(1, 1);
  v.a = {0.0};
  AdamState st = make_adam_state(1, 1);
  std::vector<double> g = {1.0};
  adam_step(std::span<double>(v.a), std::span<const double>(g), st, 0.001);
  EXPECT_NEAR(v.a[0], -0.001, 1e-10);
}

TEST(Adam, DescendsQuadratic) {
  Matrix v = zeros(1, 2);
  v.a = {3.0, -4.0};
  AdamState st = make_adam_state(1, 2);
  double prev = v.a[0] * v.a[0] + v.a[1] * v.a[1];
  for (int i = 0; i < 200; ++i) {
    std::vector<double> g = {2.0 * v.a[0], 2.0 * v.a[1]};
    adam_step(std::span<double>(v.a), std::span<const double>(g), st, 0.05);
    const double cur = v.a[0] * v.a[0] + v.a[1] * v.a[1];
    EXPECT_LE(cur, prev + 1e-9);
    prev = cur;
  }
  EXPECT_LT(prev, 1.0);
}

TEST(ParamSet, Structure) {
  ParamSet ps;
  ps.add("w", zeros(2, 2));
  EXPECT_THROW(ps.add("w", zeros(2, 2)), StructuralError);
  EXPECT_THROW(ps.at("nope"), StructuralError);
  EXPECT_EQ(ps.size(), 1u);

  GradMap bad;
  bad.emplace_back("nope", zeros(2, 2));
  EXPECT_THROW(adam_step(ps, bad, 0.1), StructuralError);

  GradMap wrong_shape;
  wrong_shape.emplace_back("w", zeros(3, 2));
  EXPECT_THROW(sgd_step(ps, wrong_shape, 0.1), StructuralError);

  GradMap ok;
  Matrix g = zeros(2, 2);
  g.a = {1, 1, 1, 1};
  ok.emplace_back("w", g);
  sgd_step(ps, ok, 0.5);
  for (double x : ps.at("w").a) EXPECT_DOUBLE_EQ(x, -0.5);
}

TEST(GradCheck, AcceptsExactGradient) {
  // f(x) = sum of squares over both entries.
  ParamSet ps;
  Matrix x = zeros(1, 3);
  x.a = {0.7, -1.2, 2.0};
  ps.add("x", x);
  auto f = [](const ParamSet& p) {
    double s = 0.0;
    for (double v : p.at("x").a) s += v * v;
    return s;
  };
  GradMap g;
  Matrix gx = zeros(1, 3);
  for (int t = 0; t < 3; ++t) gx.a[t] = 2.0 * x.a[t];
  g.emplace_back("x", gx);
  EXPECT_LT(finite_diff_check(f, ps, g, 1e-4), 1e-6);
}

TEST(GradCheck, FlagsCorruptedGradient) {
  ParamSet ps;
  Matrix x = zeros(1, 2);
  x.a = {1.0, 1.0};
  ps.add("x", x);
  auto f = [](const ParamSet& p) {
    double s = 0.0;
    for (double v : p.at("x").a) s += v * v;
    return s;
  };
  GradMap g;
  Matrix gx = zeros(1, 2);
  gx.a = {2.0, 3.1};  // second entry is wrong
  g.emplace_back("x", gx);
  EXPECT_GT(finite_diff_check(f, ps, g, 1e-4), 0.1);
}

TEST(GradCheck, RejectsBadStep) {
  ParamSet ps;
  ps.add("x", zeros(1, 1));
  GradMap g;
  g.emplace_back("x", zeros(1, 1));
  auto f = [](const ParamSet&) { return 0.0; };
  EXPECT_THROW(finite_diff_check(f, ps, g, 0.0), StructuralError);
}
