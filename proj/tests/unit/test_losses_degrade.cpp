#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "lcm/degrade.hpp"
#include "lcm/error.hpp"
#include "lcm/losses.hpp"
#include "lcm/ops.hpp"
#include "lcm/rng.hpp"
#include "lcm/tape.hpp"
#include "oracles/oracles.hpp"

using lcm::Shape;
using lcm::Tape;
using lcm::Tensor;

TEST(Pyramid, ReconstructionIdentityAllLevelsAndSizes) {
  lcm::Rng rng(31);
  for (int h : {1, 2, 3, 5, 8, 13, 16, 31, 32, 64})
    for (int w : {1, 4, 7, 32, 64}) {
      const auto x = rng.uniform_tensor<double>(Shape{1, 2, h, w}, -1, 1);
      const int deepest = std::max(1, lcm::PyramidSpec::max_levels(h, w));
      if (deepest > 1) EXPECT_THROW(lcm::laplacian_pyramid(x, lcm::PyramidSpec{deepest + 1}), lcm::ContractError);
      for (int j = 1; j <= deepest; ++j) {
        const auto levels = lcm::laplacian_pyramid(x, lcm::PyramidSpec{j});
        const auto back = lcm::reconstruct_pyramid(levels);
        EXPECT_LE(oracle::max_rel_error(back, x), 1e-5) << h << "x" << w << " J=" << j;
      }
    }
}

TEST(Pyramid, SingleLevelIsTheImage) {
  lcm::Rng rng(32);
  const auto x = rng.uniform_tensor<double>(Shape{1, 1, 5, 5}, -1, 1);
  const auto levels = lcm::laplacian_pyramid(x, lcm::PyramidSpec{1});
  ASSERT_EQ(levels.size(), 1u);
  EXPECT_EQ(levels[0], x);
}

TEST(Pyramid, DefaultLevels) {
  EXPECT_EQ(lcm::PyramidSpec::default_for(32, 32).levels, 3);
  EXPECT_EQ(lcm::PyramidSpec::default_for(64, 64).levels, 4);
  EXPECT_EQ(lcm::PyramidSpec::default_for(4, 4).levels, 1);
}

TEST(Pyramid, ReflectIndexMirrorsWithoutEdgeRepeat) {
  EXPECT_EQ(lcm::reflect_index(-1, 5), 1);
  EXPECT_EQ(lcm::reflect_index(-2, 5), 2);
  EXPECT_EQ(lcm::reflect_index(5, 5), 3);
  EXPECT_EQ(lcm::reflect_index(6, 5), 2);
  EXPECT_EQ(lcm::reflect_index(3, 1), 0);
}

TEST(Loss, LapL1ZeroForEqualImagesAndCombinedAddsMse) {
  lcm::Rng rng(33);
  const auto a = rng.uniform_tensor<double>(Shape{2, 3, 16, 16}, 0, 1);
  const auto b = rng.uniform_tensor<double>(Shape{2, 3, 16, 16}, 0, 1);
  const lcm::PyramidSpec spec{3};
  EXPECT_EQ(lcm::lap_l1(a, a, spec), 0.0);
  double mse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mse += (a[i] - b[i]) * (a[i] - b[i]);
  mse /= static_cast<double>(a.size());
  EXPECT_NEAR(lcm::combined_loss(a, b, spec), lcm::lap_l1(a, b, spec) + mse, 1e-12);
  Tape<double> tape;
  EXPECT_NEAR(tape.scalar(lcm::ops::combined_loss(tape, tape.constant(a), tape.constant(b), spec)),
              lcm::combined_loss(a, b, spec), 1e-12);
}

TEST(Lanczos, PreservesConstants) {
  for (int f : {1, 2, 4, 8})
    for (int n : {8, 16, 32, 64}) {
      const Tensor<double> x(Shape{1, 3, n, n}, 0.37);
      const auto y = lcm::lanczos_down(x, f);
      ASSERT_EQ(y.shape(), (Shape{1, 3, n / f, n / f}));
      for (std::size_t i = 0; i < y.size(); ++i) ASSERT_NEAR(y[i], 0.37, 1e-6) << "f=" << f << " n=" << n;
    }
}

TEST(Lanczos, FactorOneIsIdentity) {
  lcm::Rng rng(34);
  const auto x = rng.uniform_tensor<double>(Shape{1, 2, 6, 7}, -1, 1);
  const auto y = lcm::lanczos_down(x, 1);
  EXPECT_LE(oracle::max_rel_error(y, x), 1e-12);
}

TEST(Lanczos, Linear) {
  lcm::Rng rng(35);
  const auto x1 = rng.uniform_tensor<double>(Shape{1, 1, 16, 16}, -1, 1);
  const auto x2 = rng.uniform_tensor<double>(Shape{1, 1, 16, 16}, -1, 1);
  Tensor<double> mix(x1.shape());
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] = 2.0 * x1[i] - 0.5 * x2[i];
  const auto lhs = lcm::lanczos_down(mix, 4);
  const auto d1 = lcm::lanczos_down(x1, 4), d2 = lcm::lanczos_down(x2, 4);
  for (std::size_t i = 0; i < lhs.size(); ++i) EXPECT_NEAR(lhs[i], 2.0 * d1[i] - 0.5 * d2[i], 1e-5);
}

TEST(Lanczos, KernelShape) {
  EXPECT_DOUBLE_EQ(lcm::lanczos_kernel(0.0), 1.0);
  EXPECT_NEAR(lcm::lanczos_kernel(1.0), 0.0, 1e-15);
  EXPECT_EQ(lcm::lanczos_kernel(3.0), 0.0);
  EXPECT_EQ(lcm::lanczos_kernel(-4.0), 0.0);
}

TEST(Lanczos, RejectsNonDivisibleExtent) {
  EXPECT_THROW(lcm::lanczos_down(Tensor<double>(Shape{1, 1, 10, 10}), 4), lcm::ShapeError);
}

TEST(Gray, AveragesChannels) {
  Tensor<double> x(Shape{1, 3, 1, 1}, std::vector<double>{0.3, 0.6, 0.9});
  const auto g = lcm::to_gray(x);
  EXPECT_EQ(g.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_NEAR(g[0], 0.6, 1e-15);
  EXPECT_THROW(lcm::to_gray(Tensor<double>(Shape{1, 1, 2, 2})), lcm::ShapeError);
}

TEST(Masks, CenterHoleCountsExact) {
  const auto m = lcm::center_mask(128, 128, 50, 50);
  EXPECT_EQ(lcm::count_zeros(m), 2500u);
  for (float v : m.data()) ASSERT_TRUE(v == 0.0f || v == 1.0f);
  EXPECT_EQ(m[0], 1.0f);
  EXPECT_EQ(m[64 * 128 + 64], 0.0f);
  EXPECT_THROW(lcm::center_mask(8, 8, 9, 2), lcm::ContractError);
}

TEST(Masks, RandomFractionIsExactAndSeeded) {
  const auto m = lcm::random_mask(128, 128, 0.95, 5);
  // round(0.95 * 128 * 128) = round(15564.8)
  EXPECT_EQ(lcm::count_zeros(m), 15565u);
  EXPECT_EQ(m, lcm::random_mask(128, 128, 0.95, 5));
  EXPECT_NE(m, lcm::random_mask(128, 128, 0.95, 6));
  EXPECT_EQ(lcm::count_zeros(lcm::random_mask(16, 16, 0.0, 1)), 0u);
  EXPECT_THROW(lcm::random_mask(4, 4, 1.5, 1), lcm::ContractError);
}

TEST(Masks, HalfMasks) {
  EXPECT_EQ(lcm::count_zeros(lcm::half_mask(6, 8, lcm::Side::kRight)), 24u);
  const auto top = lcm::half_mask(6, 8, lcm::Side::kTop);
  EXPECT_EQ(top[0], 0.0f);
  EXPECT_EQ(top[5 * 8], 1.0f);
  EXPECT_EQ(lcm::parse_side("left"), lcm::Side::kLeft);
  EXPECT_THROW(lcm::parse_side("middle"), lcm::ContractError);
}

TEST(Degradation, SpecValidationAndObservedShapes) {
  EXPECT_THROW(lcm::DegradationSpec::superres(3).validate(), lcm::ContractError);
  EXPECT_THROW(lcm::DegradationSpec::inpaint(lcm::Mask(Shape{2, 2}, 0.5f)).validate(), lcm::ContractError);
  EXPECT_THROW(lcm::DegradationSpec::colorize(-1.0).validate(), lcm::ContractError);
  const Shape img{1, 3, 32, 32};
  EXPECT_EQ(lcm::DegradationSpec::superres(8).observed_shape(img), (Shape{1, 3, 4, 4}));
  EXPECT_EQ(lcm::DegradationSpec::colorize().observed_shape(img), (Shape{1, 1, 32, 32}));
  EXPECT_EQ(lcm::DegradationSpec::inpaint(lcm::full_mask(32, 32)).observed_shape(img), img);
  EXPECT_EQ(lcm::parse_task("sr"), lcm::TaskKind::kSuperres);
  EXPECT_EQ(lcm::parse_task("color"), lcm::TaskKind::kColorize);
}

TEST(Degradation, EnergyMatchesDirectFormulas) {
  lcm::Rng rng(36);
  const auto x = rng.uniform_tensor<double>(Shape{1, 3, 8, 8}, 0, 1);
  const auto truth = rng.uniform_tensor<double>(Shape{1, 3, 8, 8}, 0, 1);
  const auto z = rng.uniform_tensor<double>(Shape{1, 2, 2, 2}, -1, 1);
  double zz = 0.0;
  for (double v : z.data()) zz += v * v;

  const auto mask = lcm::center_mask(8, 8, 4, 4);
  struct Case {
    lcm::DegradationSpec spec;
    Tensor<double> dx, y;
  };
  std::vector<Case> cases;
  {
    auto s = lcm::DegradationSpec::inpaint(mask, 0.5);
    cases.push_back({s, x, lcm::degrade(truth, s)});
  }
  {
    auto s = lcm::DegradationSpec::superres(2, 0.5);
    cases.push_back({s, lcm::lanczos_down(x, 2), lcm::degrade(truth, s)});
  }
  {
    auto s = lcm::DegradationSpec::colorize(0.5);
    cases.push_back({s, lcm::to_gray(x), lcm::degrade(truth, s)});
  }
  for (const auto& c : cases) {
    double data = 0.0;
    if (c.spec.kind == lcm::TaskKind::kInpaint) {
      data = oracle::mse_region(c.dx, c.y, mask, 0);
    } else {
      for (std::size_t i = 0; i < c.dx.size(); ++i) data += (c.dx[i] - c.y[i]) * (c.dx[i] - c.y[i]);
      data /= static_cast<double>(c.dx.size());
    }
    Tape<double> tape;
    const auto zn = lcm::ops::sum_square(tape, tape.constant(z));
    const auto e = lcm::ops::energy(tape, tape.constant(x), tape.constant(c.y), c.spec, zn);
    EXPECT_NEAR(tape.scalar(e.data_term), data, 1e-12) << lcm::task_name(c.spec.kind);
    EXPECT_NEAR(tape.scalar(e.total), data + 0.5 * zz, 1e-12) << lcm::task_name(c.spec.kind);
  }
}

TEST(Degradation, InpaintObservationZeroesHole) {
  const Tensor<double> x(Shape{1, 3, 8, 8}, 0.7);
  const auto y = lcm::degrade(x, lcm::DegradationSpec::inpaint(lcm::center_mask(8, 8, 2, 2)));
  EXPECT_EQ(y.at(0, 1, 4, 4), 0.0);
  EXPECT_EQ(y.at(0, 1, 0, 0), 0.7);
}
