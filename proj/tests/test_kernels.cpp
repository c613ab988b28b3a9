#include <cstring>
#include <vector>

#include "doctest.h"
#include "gundet/kernels.hpp"
#include "gundet/rng.hpp"

using namespace gundet;

namespace {

std::vector<double> random_vec(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("gemm matches a hand-rolled triple loop") {
  const int m = 7, n = 5, k = 9;
  const auto a = random_vec(static_cast<size_t>(m) * k, 1);
  const auto b = random_vec(static_cast<size_t>(k) * n, 2);
  std::vector<double> c(static_cast<size_t>(m) * n);
  kernels::serial::gemm(false, false, m, n, k, a.data(), b.data(), c.data(), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double want = 0.0;
      for (int p = 0; p < k; ++p) want += a[i * k + p] * b[p * n + j];
      CHECK(c[i * n + j] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("gemm transpose flags agree with explicit transposition") {
  const int m = 4, n = 6, k = 3;
  const auto a = random_vec(static_cast<size_t>(k) * m, 3);  // stored k x m
  const auto b = random_vec(static_cast<size_t>(n) * k, 4);  // stored n x k
  std::vector<double> c(static_cast<size_t>(m) * n);
  kernels::serial::gemm(true, true, m, n, k, a.data(), b.data(), c.data(), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double want = 0.0;
      for (int p = 0; p < k; ++p) want += a[p * m + i] * b[j * k + p];
      CHECK(c[i * n + j] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("serial and openmp kernels are bit-identical") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const int m = 3 + static_cast<int>(rng.uniform_index(20));
    const int n = 3 + static_cast<int>(rng.uniform_index(20));
    const int k = 3 + static_cast<int>(rng.uniform_index(20));
    const auto a = random_vec(static_cast<size_t>(m) * k, 100 + trial);
    const auto b = random_vec(static_cast<size_t>(k) * n, 200 + trial);
    std::vector<double> c1(static_cast<size_t>(m) * n), c2 = c1;
    kernels::serial::gemm(false, false, m, n, k, a.data(), b.data(), c1.data(), 0.0);
    kernels::omp::gemm(false, false, m, n, k, a.data(), b.data(), c2.data(), 0.0);
    CHECK(bit_equal(c1, c2));
  }

  kernels::Conv2dShape s;
  s.in_channels = 3;
  s.height = 17;
  s.width = 13;
  s.out_channels = 6;
  s.kernel = 3;
  s.stride = 2;
  s.pad = 1;
  const auto in = random_vec(static_cast<size_t>(s.in_channels) * s.height * s.width, 5);
  const auto w = random_vec(static_cast<size_t>(s.out_channels) * s.in_channels * 9, 6);
  const auto bias = random_vec(static_cast<size_t>(s.out_channels), 7);
  const size_t out_n =
      static_cast<size_t>(s.out_channels) * s.out_height() * s.out_width();
  std::vector<double> o1(out_n), o2(out_n);
  kernels::serial::conv2d_forward(s, in.data(), w.data(), bias.data(), o1.data());
  kernels::omp::conv2d_forward(s, in.data(), w.data(), bias.data(), o2.data());
  CHECK(bit_equal(o1, o2));

  const auto go = random_vec(out_n, 8);
  std::vector<double> gi1(in.size()), gi2(in.size());
  kernels::serial::conv2d_backward_input(s, go.data(), w.data(), gi1.data());
  kernels::omp::conv2d_backward_input(s, go.data(), w.data(), gi2.data());
  CHECK(bit_equal(gi1, gi2));

  std::vector<double> gw1(w.size()), gw2(w.size()), gb1(bias.size()), gb2(bias.size());
  kernels::serial::conv2d_backward_params(s, in.data(), go.data(), gw1.data(), gb1.data());
  kernels::omp::conv2d_backward_params(s, in.data(), go.data(), gw2.data(), gb2.data());
  CHECK(bit_equal(gw1, gw2));
  CHECK(bit_equal(gb1, gb2));
}

TEST_CASE("conv2d gradients match finite differences") {
  kernels::Conv2dShape s;
  s.in_channels = 2;
  s.height = 6;
  s.width = 5;
  s.out_channels = 3;
  s.kernel = 3;
  s.stride = 1;
  s.pad = 1;
  auto in = random_vec(static_cast<size_t>(s.in_channels) * s.height * s.width, 21);
  auto w = random_vec(static_cast<size_t>(s.out_channels) * s.in_channels * 9, 22);
  const auto bias = random_vec(static_cast<size_t>(s.out_channels), 23);
  const size_t out_n =
      static_cast<size_t>(s.out_channels) * s.out_height() * s.out_width();
  const auto weights_l = random_vec(out_n, 24);  // random linear functional

  auto loss = [&]() {
    std::vector<double> out(out_n);
    kernels::serial::conv2d_forward(s, in.data(), w.data(), bias.data(), out.data());
    double acc = 0.0;
    for (size_t i = 0; i < out_n; ++i) acc += out[i] * weights_l[i];
    return acc;
  };

  std::vector<double> grad_in(in.size());
  kernels::serial::conv2d_backward_input(s, weights_l.data(), w.data(), grad_in.data());
  std::vector<double> grad_w(w.size()), grad_b(bias.size());
  kernels::serial::conv2d_backward_params(s, in.data(), weights_l.data(),
                                          grad_w.data(), grad_b.data());

  Rng rng(25);
  const double eps = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    const size_t i = rng.uniform_index(in.size());
    const double saved = in[i];
    in[i] = saved + eps;
    const double up = loss();
    in[i] = saved - eps;
    const double down = loss();
    in[i] = saved;
    CHECK(grad_in[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-6));
  }
  for (int trial = 0; trial < 20; ++trial) {
    const size_t i = rng.uniform_index(w.size());
    const double saved = w[i];
    w[i] = saved + eps;
    const double up = loss();
    w[i] = saved - eps;
    const double down = loss();
    w[i] = saved;
    CHECK(grad_w[i] == doctest::Approx((up - down) / (2 * eps)).epsilon(1e-6));
  }
}

TEST_CASE("maxpool forward picks window maxima and routes gradients back") {
  // 1 channel, 4x4 with known maxima
  const std::vector<double> in = {
      1, 2, 0, 0,
      3, 4, 0, 5,
      0, 0, 9, 8,
      0, 7, 6, 0};
  std::vector<double> out(4);
  std::vector<uint8_t> arg(4);
  kernels::serial::maxpool2_forward(1, 4, 4, in.data(), out.data(), arg.data());
  CHECK(out == std::vector<double>{4, 5, 9, 8});

  const std::vector<double> go = {10, 20, 30, 40};
  std::vector<double> gi(16);
  kernels::serial::maxpool2_backward(1, 4, 4, go.data(), arg.data(), gi.data());
  CHECK(gi[5] == 10);   // position of 4
  CHECK(gi[7] == 20);   // position of 5
  CHECK(gi[10] == 30);  // position of 9
  CHECK(gi[11] == 40);  // position of 8
  double total = 0;
  for (double v : gi) total += v;
  CHECK(total == 100);

  std::vector<double> out2(4);
  std::vector<uint8_t> arg2(4);
  kernels::omp::maxpool2_forward(1, 4, 4, in.data(), out2.data(), arg2.data());
  CHECK(out == out2);
}

TEST_CASE("backend dispatch is switchable and restores") {
  const auto before = kernels::backend();
  kernels::set_backend(kernels::Backend::serial);
  CHECK(kernels::backend() == kernels::Backend::serial);
  kernels::set_backend(kernels::Backend::openmp);
  CHECK(kernels::backend() == kernels::Backend::openmp);
  kernels::set_backend(before);
}
