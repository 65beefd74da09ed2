#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "lcm/gradcheck.hpp"

TEST(GradCheck, RelativeInfError) {
  EXPECT_EQ(lcm::relative_inf_error({0.0, 0.0}, {0.0, 0.0}), 0.0);
  EXPECT_DOUBLE_EQ(lcm::relative_inf_error({1.0, 2.0}, {1.0, 2.5}), 0.2);
  EXPECT_DOUBLE_EQ(lcm::relative_inf_error({1.0}, {-1.0}), 2.0);
}

TEST(GradCheck, EveryPrimitivePasses) {
  lcm::GradCheckOptions opt;
  opt.instances = 20;
  const auto report = lcm::run_gradcheck(lcm::primitive_cases(), opt);
  std::ostringstream log;
  report.print(log);
  for (const auto& c : report.cases) {
    EXPECT_TRUE(c.passed) << c.name << " max error " << c.max_error;
    EXPECT_EQ(c.instances, 20) << c.name;
    EXPECT_LT(c.max_error, 1e-5) << c.name;
  }
  EXPECT_TRUE(report.passed()) << log.str();
  EXPECT_LT(report.seconds, 120.0);
}

TEST(GradCheck, CoversTheDifferentiableSurface) {
  std::set<std::string> names;
  for (const auto& c : lcm::primitive_cases()) names.insert(c.name);
  for (const char* required : {"conv2d", "upsample_conv", "channel_norm_train", "channel_norm_eval", "leaky_relu",
                               "sigmoid", "linear", "lap_l1", "combined_loss", "lanczos_down_x2", "to_gray",
                               "energy_inpaint", "energy_superres", "energy_colorize"}) {
    EXPECT_TRUE(names.count(required)) << required;
  }
}

TEST(GradCheck, FullToyModelPasses) {
  lcm::GradCheckOptions opt;
  opt.instances = 3;
  opt.entries_per_block = 3;
  const auto report = lcm::run_gradcheck(lcm::preset_cases("toy16"), opt);
  for (const auto& c : report.cases) EXPECT_TRUE(c.passed) << c.name << " max error " << c.max_error;
}

TEST(GradCheck, InjectedSignFlipIsCaught) {
  lcm::GradCheckOptions opt;
  opt.instances = 5;
  const auto r = lcm::check_case(lcm::injected_bug_case(), opt);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_error, 1.0);
}
