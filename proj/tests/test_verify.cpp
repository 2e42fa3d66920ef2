#include <cmath>
#include <random>

#include "doctest.h"
#include "listennet/verify.hpp"

using namespace listennet;

TEST_CASE("naive_conv: hand-evaluated depthwise and identity cases") {
  Tensor4d x({1, 1, 1, 4});
  for (int w = 0; w < 4; ++w) x.at(0, 0, 0, w) = w + 1.0;
  ConvSpec spec{1, 1, 1, 2, 1, 1, 1, false};
  ConvParams<double> p{Tensor4d({1, 1, 1, 2}, 1.0), {}};
  Tensor4d out = naive_conv(x, spec, p);
  CHECK(out.at(0, 0, 0, 0) == doctest::Approx(3.0));
  CHECK(out.at(0, 0, 0, 1) == doctest::Approx(5.0));
  CHECK(out.at(0, 0, 0, 2) == doctest::Approx(7.0));

  std::mt19937 rng(41);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Tensor4d y({1, 2, 3, 3});
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = dist(rng);
  ConvSpec id{2, 2, 1, 1, 1, 1, 1, false};
  ConvParams<double> pid{Tensor4d({2, 2, 1, 1}, 0.0), {}};
  pid.weight.at(0, 0, 0, 0) = 1.0;
  pid.weight.at(1, 1, 0, 0) = 1.0;
  Tensor4d same = naive_conv(y, id, pid);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(same.data()[i] == doctest::Approx(y.data()[i]));
}

TEST_CASE("finite_diff_check: quadratic is exact to 1e-8") {
  double theta = 3.0;
  double analytic = 6.0;
  std::mt19937_64 rng(42);
  auto eval = [&theta] { return theta * theta; };
  GradCheckReport r = finite_diff_check("theta^2", eval, &theta, &analytic, 1, 1e-4, 1e-8, 1, rng);
  CHECK(r.pass);
  CHECK(r.max_rel_err < 1e-8);
  CHECK(theta == 3.0);  // restored after perturbation
}

TEST_CASE("finite_diff_check: a corrupted analytic gradient fails the gate") {
  double theta = 1.5;
  double wrong = 2.0 * theta * 1.05;  // 5% off
  std::mt19937_64 rng(43);
  auto eval = [&theta] { return theta * theta; };
  GradCheckReport r = finite_diff_check("corrupt", eval, &theta, &wrong, 1, 1e-4, 1e-4, 1, rng);
  CHECK(!r.pass);
}

TEST_CASE("finite_diff_check: non-finite objective is reported as failure") {
  double theta = 0.0;
  double analytic = 0.0;
  std::mt19937_64 rng(44);
  auto eval = [&theta] { return std::log(theta - 1.0); };  // nan near theta=0
  GradCheckReport r = finite_diff_check("nan", eval, &theta, &analytic, 1, 1e-4, 1e-4, 1, rng);
  CHECK(!r.pass);
}

TEST_CASE("gradient battery passes every gate") {
  std::vector<GradCheckReport> reports = run_gradient_battery(7, false);
  CHECK(reports.size() >= 11);
  for (const auto& r : reports) {
    INFO(r.op);
    CHECK(r.pass);
    CHECK(r.checked >= 50);
  }
}

TEST_CASE("check_alignment: whitened scopes near zero, raw correlated scopes far") {
  std::mt19937_64 rng(45);
  std::vector<DecisionWindow> wins = make_correlated_scope(6, 20, 48, rng);
  const double raw = check_alignment(wins);
  CHECK(raw > 0.1);
  AlignmentMatrix m = compute_alignment(wins, "t");
  for (auto& w : wins) w = apply_alignment(w, m);
  CHECK(check_alignment(wins) < 1e-6);
}
