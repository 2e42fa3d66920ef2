// Scalar reference vs AVX2 kernel equivalence. Elementwise kernels may differ
// by FMA rounding only; reductions additionally reassociate, so tolerances
// scale with the absolute-value sum.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "listennet/kernels.hpp"

using namespace listennet;

namespace {

std::vector<float> random_vec(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

std::vector<double> random_vecd(std::size_t n, std::mt19937& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

const std::size_t kSizes[] = {1, 2, 7, 8, 9, 15, 16, 17, 31, 53, 57, 64, 100, 912};

struct ScalarGuard {
  ~ScalarGuard() { kernels::force_scalar(false); }
};

}  // namespace

TEST_CASE("dispatch: force_scalar switches the active backend") {
  ScalarGuard guard;
  kernels::force_scalar(true);
  CHECK(std::string(kernels::active_backend()) == "scalar");
  kernels::force_scalar(false);
  if (kernels::avx2_available())
    CHECK(std::string(kernels::active_backend()) == "avx2");
  else
    CHECK(std::string(kernels::active_backend()) == "scalar");
}

TEST_CASE("axpy/add/hadamard/scale: scalar and simd agree elementwise") {
  if (!kernels::avx2_available()) return;
  ScalarGuard guard;
  std::mt19937 rng(11);
  for (std::size_t n : kSizes) {
    auto x = random_vec(n, rng);
    auto y0 = random_vec(n, rng);
    auto y1 = y0;

    kernels::force_scalar(true);
    kernels::axpy(0.37f, x.data(), y0.data(), n);
    kernels::add(x.data(), y0.data(), n);
    kernels::hadamard(x.data(), y0.data(), n);
    kernels::scale(1.31f, y0.data(), n);

    kernels::force_scalar(false);
    kernels::axpy(0.37f, x.data(), y1.data(), n);
    kernels::add(x.data(), y1.data(), n);
    kernels::hadamard(x.data(), y1.data(), n);
    kernels::scale(1.31f, y1.data(), n);

    for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y0[i]).epsilon(1e-6));
  }
}

TEST_CASE("dot/sum: scalar and simd agree within reassociation error") {
  if (!kernels::avx2_available()) return;
  ScalarGuard guard;
  std::mt19937 rng(12);
  for (std::size_t n : kSizes) {
    auto x = random_vec(n, rng);
    auto y = random_vec(n, rng);
    double scale = 1e-9;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(static_cast<double>(x[i]) * y[i]);

    kernels::force_scalar(true);
    const float d0 = kernels::dot(x.data(), y.data(), n);
    const float s0 = kernels::sum(x.data(), n);
    kernels::force_scalar(false);
    const float d1 = kernels::dot(x.data(), y.data(), n);
    const float s1 = kernels::sum(x.data(), n);

    // Reassociation error grows with n; allow sqrt(n)-ish slack over 1 ulp.
    CHECK(std::abs(d1 - d0) <= 1e-5 * scale);
    CHECK(std::abs(s1 - s0) <= 1e-5 * static_cast<double>(n) + 1e-7);
  }
}

TEST_CASE("taps kernels: scalar and simd agree for strided and overlapping layouts") {
  if (!kernels::avx2_available()) return;
  ScalarGuard guard;
  std::mt19937 rng(13);
  struct Layout {
    int taps;
    std::ptrdiff_t stride;  // stride < n makes adjoint regions overlap
    std::size_t n;
  };
  const Layout layouts[] = {
      {1, 1, 5}, {3, 1, 53}, {8, 2, 57}, {17, 57, 57}, {64, 57, 57}, {5, 3, 912},
  };
  for (const auto& lay : layouts) {
    const std::size_t span = static_cast<std::size_t>(lay.taps) * lay.stride + lay.n + 8;
    auto x = random_vec(span, rng);
    auto w = random_vec(static_cast<std::size_t>(lay.taps), rng);
    std::vector<std::ptrdiff_t> offsets(static_cast<std::size_t>(lay.taps));
    for (int t = 0; t < lay.taps; ++t) offsets[static_cast<std::size_t>(t)] = t * lay.stride;

    auto y0 = random_vec(span, rng);
    auto y1 = y0;
    auto acc0 = random_vec(static_cast<std::size_t>(lay.taps), rng);
    auto acc1 = acc0;

    kernels::force_scalar(true);
    kernels::axpy_taps(x.data(), y0.data(), w.data(), offsets.data(), lay.taps, lay.n);
    kernels::axpy_taps_adj(x.data(), y0.data(), w.data(), offsets.data(), lay.taps, lay.n);
    kernels::dot_taps(x.data(), y0.data(), acc0.data(), offsets.data(), lay.taps, lay.n);
    kernels::force_scalar(false);
    kernels::axpy_taps(x.data(), y1.data(), w.data(), offsets.data(), lay.taps, lay.n);
    kernels::axpy_taps_adj(x.data(), y1.data(), w.data(), offsets.data(), lay.taps, lay.n);
    kernels::dot_taps(x.data(), y1.data(), acc1.data(), offsets.data(), lay.taps, lay.n);

    for (std::size_t i = 0; i < span; ++i) CHECK(y1[i] == doctest::Approx(y0[i]).epsilon(2e-5));
    for (int t = 0; t < lay.taps; ++t)
      CHECK(acc1[static_cast<std::size_t>(t)] ==
            doctest::Approx(acc0[static_cast<std::size_t>(t)]).epsilon(2e-5));
  }
}

TEST_CASE("double kernels: scalar and simd agree tightly") {
  if (!kernels::avx2_available()) return;
  ScalarGuard guard;
  std::mt19937 rng(14);
  const std::size_t n = 911;
  auto x = random_vecd(n, rng);
  auto y0 = random_vecd(n, rng);
  auto y1 = y0;
  kernels::force_scalar(true);
  kernels::axpy(0.73, x.data(), y0.data(), n);
  const double d0 = kernels::dot(x.data(), y0.data(), n);
  kernels::force_scalar(false);
  kernels::axpy(0.73, x.data(), y1.data(), n);
  const double d1 = kernels::dot(x.data(), y1.data(), n);
  for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y0[i]).epsilon(1e-15));
  CHECK(d1 == doctest::Approx(d0).epsilon(1e-13));
}
