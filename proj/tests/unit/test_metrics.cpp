#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "lcm/error.hpp"
#include "lcm/metrics.hpp"
#include "lcm/rng.hpp"

using lcm::Shape;
using lcm::Tensor;

TEST(MseRegion, PerfectRestorationIsZeroEverywhere) {
  lcm::Rng rng(51);
  const auto x = rng.uniform_tensor<double>(Shape{1, 3, 8, 8}, 0, 1);
  const auto m = lcm::center_mask(8, 8, 4, 4);
  for (auto r : {lcm::Region::kKnown, lcm::Region::kHole, lcm::Region::kFull}) EXPECT_EQ(lcm::mse_region(x, x, m, r), 0.0);
}

TEST(MseRegion, KnownAndHoleRecomposeFull) {
  lcm::Rng rng(52);
  const auto a = rng.uniform_tensor<double>(Shape{2, 3, 9, 7}, 0, 1);
  const auto b = rng.uniform_tensor<double>(Shape{2, 3, 9, 7}, 0, 1);
  const auto m = lcm::random_mask(9, 7, 0.4, 3);
  const double holes = static_cast<double>(lcm::count_zeros(m));
  const double known = 63.0 - holes;
  const double recomposed = (known * lcm::mse_region(a, b, m, lcm::Region::kKnown) +
                             holes * lcm::mse_region(a, b, m, lcm::Region::kHole)) /
                            63.0;
  EXPECT_NEAR(recomposed, lcm::mse_region(a, b, m, lcm::Region::kFull), 1e-14);
}

TEST(MseRegion, Errors) {
  const Tensor<double> a(Shape{1, 1, 4, 4});
  EXPECT_THROW(lcm::mse_region(a, a, lcm::full_mask(4, 4), lcm::Region::kHole), lcm::ContractError);
  EXPECT_THROW(lcm::mse_region(a, a, lcm::Mask(Shape{4, 4}, 0.5f), lcm::Region::kFull), lcm::ContractError);
  EXPECT_THROW(lcm::mse_region(a, Tensor<double>(Shape{1, 1, 4, 5}), lcm::full_mask(4, 4), lcm::Region::kFull),
               lcm::ShapeError);
  EXPECT_EQ(lcm::parse_region("hole"), lcm::Region::kHole);
}

TEST(Evaluate, InpaintRowAndAggregate) {
  Tensor<lcm::Real> truth(Shape{1, 3, 4, 4}, 0.5f);
  Tensor<lcm::Real> restored = truth;
  const auto mask = lcm::center_mask(4, 4, 2, 2);
  for (int c = 0; c < 3; ++c) restored.at(0, c, 1, 1) = 0.7f;  // inside the hole
  restored.at(0, 0, 0, 0) = 0.6f;                              // known pixel
  lcm::EvalItem a{"a", restored, truth, lcm::DegradationSpec::inpaint(mask), "manifold"};
  lcm::EvalItem b{"b", truth, truth, lcm::DegradationSpec::inpaint(mask), "manifold"};
  const auto report = lcm::evaluate({a, b});
  ASSERT_EQ(report.rows.size(), 2u);
  const auto& r = report.rows[0];
  EXPECT_NEAR(r.mse_hole, 3 * 0.04 / 12.0, 1e-7);
  EXPECT_NEAR(r.mse_known, 0.01 / 36.0, 1e-7);
  EXPECT_NEAR(r.mse_full, (0.12 + 0.01) / 48.0, 1e-7);
  EXPECT_EQ(report.rows[1].mse_full, 0.0);
  const auto agg = report.aggregate();
  EXPECT_NEAR(agg.mse_hole, r.mse_hole / 2, 1e-12);
  EXPECT_EQ(agg.id, "mean");

  std::ostringstream csv;
  report.write_csv(csv);
  const std::string text = csv.str();
  EXPECT_EQ(text.rfind("id,task,mode,mse_full,mse_known,mse_hole,lap_l1\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 4);
}

TEST(Evaluate, NonInpaintTasksHaveNoHoleColumn) {
  lcm::Rng rng(53);
  const auto truth = rng.uniform_tensor<lcm::Real>(Shape{1, 3, 8, 8}, 0, 1);
  lcm::EvalItem item{"x", truth, truth, lcm::DegradationSpec::superres(2), "zspace"};
  const auto row = lcm::evaluate_one(item);
  EXPECT_TRUE(std::isnan(row.mse_hole));
  EXPECT_EQ(row.mse_known, 0.0);
  EXPECT_EQ(row.task, "sr");
  lcm::EvalReport rep;
  rep.rows = {row, row};
  EXPECT_TRUE(std::isnan(rep.aggregate().mse_hole));
}

TEST(Evaluate, LengthMismatchIsAnError) {
  EXPECT_THROW(lcm::evaluate({"a"}, {}, {}, {}), lcm::ContractError);
}
