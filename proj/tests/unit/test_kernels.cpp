#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "lcm/error.hpp"
#include "lcm/kernels.hpp"
#include "lcm/ops.hpp"
#include "lcm/rng.hpp"
#include "lcm/tape.hpp"

namespace k = lcm::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(lcm::Rng& rng, std::size_t n) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.uniform(-1.0, 1.0));
  return v;
}

template <typename T>
double tol();
template <>
double tol<float>() {
  return 1e-5;
}
template <>
double tol<double>() {
  return 1e-13;
}

class IsaGuard {
 public:
  IsaGuard() : saved_(k::active_isa()) {}
  ~IsaGuard() { k::set_isa(saved_); }

 private:
  k::Isa saved_;
};

}  // namespace

TEST(Kernels, ScalarIsAlwaysSupported) {
  EXPECT_TRUE(k::isa_supported(k::Isa::kScalar));
  EXPECT_EQ(k::isa_name(k::Isa::kScalar), "scalar");
  EXPECT_EQ(k::isa_name(k::Isa::kAvx2), "avx2");
}

TEST(Kernels, SetIsaSwitchesDispatch) {
  IsaGuard guard;
  k::set_isa(k::Isa::kScalar);
  EXPECT_EQ(k::active_isa(), k::Isa::kScalar);
  if (k::isa_supported(k::Isa::kAvx2)) {
    k::set_isa(k::Isa::kAvx2);
    EXPECT_EQ(k::active_isa(), k::Isa::kAvx2);
  } else {
    EXPECT_THROW(k::set_isa(k::Isa::kAvx2), lcm::ContractError);
  }
}

#ifdef LCMKIT_HAVE_AVX2_KERNELS

template <typename T>
class SimdEquivalence : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!k::isa_supported(k::Isa::kAvx2)) GTEST_SKIP() << "CPU lacks AVX2/FMA";
  }
};
using RealTypes = ::testing::Types<float, double>;
TYPED_TEST_SUITE(SimdEquivalence, RealTypes);

// Lengths straddle every vector-width and unroll boundary.
TYPED_TEST(SimdEquivalence, DotSumAxpy) {
  using T = TypeParam;
  lcm::Rng rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 32u, 33u, 63u, 64u, 65u, 100u, 1000u}) {
    const auto a = random_vec<T>(rng, n);
    const auto b = random_vec<T>(rng, n);
    const double scale = std::max<double>(1.0, static_cast<double>(n));
    EXPECT_NEAR(k::scalar::dot(a.data(), b.data(), n), k::avx2::dot(a.data(), b.data(), n), tol<T>() * scale) << n;
    EXPECT_NEAR(k::scalar::sum(a.data(), n), k::avx2::sum(a.data(), n), tol<T>() * scale) << n;
    auto y1 = b, y2 = b;
    k::scalar::axpy(T(0.37), a.data(), y1.data(), n);
    k::avx2::axpy(T(0.37), a.data(), y2.data(), n);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(y1[i], y2[i], tol<T>()) << n << ":" << i;
  }
}

TYPED_TEST(SimdEquivalence, GemmAccumulate) {
  using T = TypeParam;
  lcm::Rng rng(12);
  const std::size_t dims[] = {1, 2, 3, 4, 5, 7, 8, 9, 16, 17, 33};
  for (std::size_t m : dims)
    for (std::size_t n : dims)
      for (std::size_t kk : {1u, 4u, 9u, 27u}) {
        // padded leading dimensions
        const std::size_t lda = kk + 1, ldb = n + 3, ldc = n + 2;
        const auto a = random_vec<T>(rng, m * lda);
        const auto b = random_vec<T>(rng, kk * ldb);
        const auto c0 = random_vec<T>(rng, m * ldc);
        auto c1 = c0, c2 = c0;
        k::scalar::gemm_acc(m, n, kk, a.data(), lda, b.data(), ldb, c1.data(), ldc);
        k::avx2::gemm_acc(m, n, kk, a.data(), lda, b.data(), ldb, c2.data(), ldc);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < ldc; ++j) {
            const std::size_t at = i * ldc + j;
            if (j >= n) {
              ASSERT_EQ(c2[at], c0[at]) << "wrote past the row end";
              continue;
            }
            double want = c0[at];
            for (std::size_t p = 0; p < kk; ++p) want += static_cast<double>(a[i * lda + p]) * b[p * ldb + j];
            ASSERT_NEAR(c1[at], want, tol<T>() * kk) << m << "x" << n << "x" << kk;
            ASSERT_NEAR(c2[at], want, tol<T>() * kk) << m << "x" << n << "x" << kk;
          }
      }
}

// The whole convolution path agrees across ISAs, forward and backward.
TYPED_TEST(SimdEquivalence, Conv2dForwardBackward) {
  using T = TypeParam;
  IsaGuard guard;
  lcm::Rng rng(13);
  const auto x = rng.uniform_tensor<T>(lcm::Shape{3, 5, 9, 11}, -1, 1);
  const auto w = rng.uniform_tensor<T>(lcm::Shape{6, 5, 3, 3}, -1, 1);
  const auto b = rng.uniform_tensor<T>(lcm::Shape{6}, -1, 1);
  auto run = [&](k::Isa isa) {
    k::set_isa(isa);
    lcm::ParamBlock<T> xp("x", x), wp("w", w), bp("b", b);
    lcm::Tape<T> tape;
    auto out = lcm::ops::conv2d(tape, tape.param(xp), tape.param(wp), tape.param(bp), 1, 1);
    auto y = tape.value(out);
    tape.backward(lcm::ops::sum_square(tape, out));
    return std::vector<lcm::Tensor<T>>{y, xp.grad, wp.grad, bp.grad};
  };
  const auto ref = run(k::Isa::kScalar);
  const auto got = run(k::Isa::kAvx2);
  for (std::size_t t = 0; t < ref.size(); ++t) {
    double peak = 0.0;
    for (std::size_t i = 0; i < ref[t].size(); ++i) peak = std::max(peak, std::fabs(static_cast<double>(ref[t][i])));
    for (std::size_t i = 0; i < ref[t].size(); ++i) {
      ASSERT_NEAR(ref[t][i], got[t][i], 50 * tol<T>() * std::max(1.0, peak)) << "tensor " << t << " entry " << i;
    }
  }
}

#endif
