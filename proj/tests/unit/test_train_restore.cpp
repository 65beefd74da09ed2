#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "lcm/dataset.hpp"
#include "lcm/degrade.hpp"
#include "lcm/error.hpp"
#include "lcm/metrics.hpp"
#include "lcm/restore.hpp"
#include "lcm/train.hpp"

using lcm::ModelVariant;

namespace {

lcm::TrainConfig toy_config(ModelVariant variant = ModelVariant::kLcm) {
  lcm::TrainConfig c;
  c.preset = "toy16";
  c.variant = variant;
  c.vector_dim = variant == ModelVariant::kGloVector ? 16 : 0;
  c.steps = 40;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

const lcm::Dataset& toy_data() {
  static const lcm::Dataset data = lcm::make_toy_dataset(8, 16, 3);
  return data;
}

const lcm::TrainState& trained_lcm() {
  static const lcm::TrainState state = [] {
    auto c = toy_config();
    c.steps = 150;
    return lcm::train(toy_data(), c);
  }();
  return state;
}

}  // namespace

TEST(Train, ConfigValidation) {
  auto c = toy_config();
  c.lr_latent = 0;
  EXPECT_THROW(c.validate(), lcm::ContractError);
  c = toy_config();
  c.steps = 0;
  EXPECT_THROW(c.validate(), lcm::ContractError);
  c = toy_config(ModelVariant::kGloVector);
  c.vector_dim = 0;
  EXPECT_THROW(c.validate(), lcm::ContractError);
}

TEST(Train, PresetMustMatchImages) {
  auto c = toy_config();
  c.preset = "toy32";
  EXPECT_THROW(lcm::init_train_state(toy_data(), c), lcm::ShapeError);
}

TEST(Train, LatentParametersStayBoxedAfterEveryStep) {
  const auto c = toy_config();
  auto s = lcm::init_train_state(toy_data(), c);
  EXPECT_LE(s.max_abs_phi(), 0.01);
  const std::vector<int> batch{0, 3, 5, 6};
  for (int step = 0; step < 25; ++step) {
    lcm::train_step(s, toy_data(), batch, c);
    ASSERT_LE(s.max_abs_phi(), 0.01) << "step " << step;
  }
  // the box is active, not vacuous
  EXPECT_EQ(s.max_abs_phi(), static_cast<lcm::Real>(0.01));
}

TEST(Train, LossDecreasesForEveryVariant) {
  for (auto v : {ModelVariant::kLcm, ModelVariant::kGloMap, ModelVariant::kGloVector}) {
    auto c = toy_config(v);
    c.steps = 80;
    const double before = lcm::population_loss(lcm::init_train_state(toy_data(), c), toy_data(), c);
    auto s = lcm::train(toy_data(), c);
    const double after = lcm::eval_loss_train(s, toy_data(), c);
    EXPECT_LT(after, before) << lcm::variant_name(v);
    EXPECT_EQ(s.step, 80);
    EXPECT_EQ(s.step_losses.size(), 80u);
  }
}

TEST(Train, SeededRunsAreBitIdentical) {
  const auto c = toy_config();
  const auto a = lcm::train(toy_data(), c);
  const auto b = lcm::train(toy_data(), c);
  EXPECT_EQ(a.step_losses, b.step_losses);
  std::ostringstream ca, cb;
  lcm::write_loss_csv(a, ca);
  lcm::write_loss_csv(b, cb);
  EXPECT_EQ(ca.str(), cb.str());
  EXPECT_EQ(ca.str().rfind("epoch,split,loss\n", 0), 0u);
  auto c2 = c;
  c2.seed = 6;
  EXPECT_NE(lcm::train(toy_data(), c2).step_losses, a.step_losses);
}

TEST(Train, ResumeContinuesTheSameTrajectory) {
  auto c = toy_config();
  c.steps = 20;
  c.recalibrate = false;
  const auto full = lcm::train(toy_data(), c);
  c.steps = 10;
  auto half = lcm::train(toy_data(), c);
  auto resumed = lcm::from_checkpoint(lcm::to_checkpoint(half, toy_data().ids, "h", "{}"));
  lcm::train_more(resumed, toy_data(), c);
  ASSERT_EQ(resumed.step_losses.size(), 10u);
  for (int i = 0; i < 10; ++i) EXPECT_NEAR(resumed.step_losses[i], full.step_losses[10 + i], 1e-6) << i;
}

TEST(Train, NonFiniteLossRaisesNumericalError) {
  lcm::Dataset bad = toy_data();
  bad.images[2][17] = std::numeric_limits<lcm::Real>::quiet_NaN();
  auto c = toy_config();
  lcm::TrainHooks hooks;
  hooks.last_checkpoint = "ckpt-epoch3.lcmk";
  try {
    lcm::train(bad, c, hooks);
    FAIL() << "expected NumericalError";
  } catch (const lcm::NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("ckpt-epoch3.lcmk"), std::string::npos) << e.what();
  }
}

TEST(Train, EpochHookFires) {
  auto c = toy_config();
  c.steps = 0;
  c.epochs = 3;
  int calls = 0;
  lcm::TrainHooks hooks;
  hooks.on_epoch = [&](const lcm::TrainState& s) { EXPECT_EQ(s.epoch, ++calls); };
  const auto s = lcm::train(toy_data(), c, hooks);
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(s.history.size(), 3u);
  EXPECT_EQ(s.step, 3 * 2);
}

namespace {

lcm::Tensor<lcm::Real> observe(const lcm::DegradationSpec& spec, int i) {
  return lcm::degrade(toy_data().images[static_cast<std::size_t>(i)], spec);
}

}  // namespace

TEST(Restore, ReturnsBestIterateWithFullTrace) {
  const auto& s = trained_lcm();
  const auto spec = lcm::DegradationSpec::inpaint(lcm::center_mask(16, 16, 6, 6));
  lcm::RestoreConfig cfg;
  cfg.steps = 60;
  for (auto mode : {lcm::RestoreMode::kManifold, lcm::RestoreMode::kZSpace}) {
    cfg.mode = mode;
    const auto r = mode == lcm::RestoreMode::kManifold
                       ? lcm::restore_manifold(s.generator, s.arch.latent, s.noise, observe(spec, 1), spec, cfg)
                       : lcm::restore_zspace(s.generator, s.arch.latent, s.noise, observe(spec, 1), spec, cfg);
    ASSERT_EQ(r.energy_trace.size(), 61u);
    const auto best = std::min_element(r.energy_trace.begin(), r.energy_trace.end());
    EXPECT_EQ(r.best_energy, *best);
    EXPECT_EQ(r.best_step, best - r.energy_trace.begin());
    EXPECT_LT(r.best_energy, r.energy_trace.front());
    // with lambda = 0 the energy is the data term of the returned image
    const double known = lcm::mse_region(r.image, toy_data().images[1], spec.mask, lcm::Region::kKnown);
    EXPECT_NEAR(known, r.best_energy, 1e-5 * std::max(1.0, r.best_energy));
    EXPECT_NEAR(r.known_mse, r.best_energy, 1e-6);
    EXPECT_EQ(r.mode, mode);
    if (mode == lcm::RestoreMode::kManifold) {
      ASSERT_TRUE(r.phi.has_value());
      EXPECT_LE(r.phi->max_abs(), static_cast<lcm::Real>(0.01));
    }
  }
}

TEST(Restore, SeededRestorationIsDeterministic) {
  const auto& s = trained_lcm();
  const auto spec = lcm::DegradationSpec::superres(2);
  lcm::RestoreConfig cfg;
  cfg.steps = 20;
  cfg.seed = 9;
  const auto a = lcm::restore_manifold(s.generator, s.arch.latent, s.noise, observe(spec, 2), spec, cfg);
  const auto b = lcm::restore_manifold(s.generator, s.arch.latent, s.noise, observe(spec, 2), spec, cfg);
  EXPECT_EQ(a.energy_trace, b.energy_trace);
  EXPECT_EQ(a.image, b.image);
}

TEST(Restore, ColorizationAndGlo) {
  auto c = toy_config(ModelVariant::kGloMap);
  c.steps = 30;
  const auto s = lcm::train(toy_data(), c);
  const auto spec = lcm::DegradationSpec::colorize();
  lcm::RestoreConfig cfg;
  cfg.steps = 30;
  cfg.mode = lcm::RestoreMode::kGlo;
  EXPECT_DOUBLE_EQ(cfg.effective_lr(), 10.0);
  const auto r = lcm::restore_glo(s.generator, s.glo[0], observe(spec, 0), spec, cfg);
  EXPECT_LT(r.best_energy, r.energy_trace.front());
  EXPECT_EQ(r.image.shape(), toy_data().images[0].shape());
  // a vector latent does not fit a map generator
  const auto vec = lcm::init_glo_latent<lcm::Real>(lcm::GloKind::kVector, s.arch.generator.input, 16, 0);
  EXPECT_THROW(lcm::restore_glo(s.generator, vec, observe(spec, 0), spec, cfg), lcm::ContractError);
}

TEST(Restore, ObservationShapeIsChecked) {
  const auto& s = trained_lcm();
  const auto spec = lcm::DegradationSpec::superres(4);
  lcm::RestoreConfig cfg;
  cfg.steps = 5;
  EXPECT_THROW(lcm::restore_manifold(s.generator, s.arch.latent, s.noise, toy_data().images[0], spec, cfg),
               lcm::ShapeError);
}

TEST(Restore, DivergenceGuardTrips) {
  const auto& s = trained_lcm();
  const auto spec = lcm::DegradationSpec::inpaint(lcm::center_mask(16, 16, 4, 4));
  lcm::RestoreConfig cfg;
  cfg.mode = lcm::RestoreMode::kZSpace;
  cfg.steps = 200;
  cfg.lr = 1e4;
  cfg.divergence_factor = 1.01;
  cfg.divergence_patience = 5;
  try {
    lcm::restore_zspace(s.generator, s.arch.latent, s.noise, observe(spec, 0), spec, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const lcm::DivergenceError& e) {
    EXPECT_GE(e.trace().size(), 6u);
  }
}

TEST(Restore, PenaltyNeverImprovesTheFit) {
  const auto& s = trained_lcm();
  const auto spec = lcm::DegradationSpec::inpaint(lcm::center_mask(16, 16, 6, 6));
  lcm::RestoreConfig cfg;
  cfg.steps = 80;
  cfg.mode = lcm::RestoreMode::kZSpace;
  double prev_total = -1.0;
  for (double lambda : {0.0, 1.0}) {
    cfg.latent_penalty = lambda;
    const auto r = lcm::restore_zspace(s.generator, s.arch.latent, s.noise, observe(spec, 3), spec, cfg);
    EXPECT_GT(r.best_energy, prev_total);
    prev_total = r.best_energy;
  }
}

TEST(Restore, ModeNames) {
  for (auto m : {lcm::RestoreMode::kManifold, lcm::RestoreMode::kZSpace, lcm::RestoreMode::kGlo}) {
    EXPECT_EQ(lcm::parse_mode(lcm::mode_name(m)), m);
  }
  EXPECT_THROW(lcm::parse_mode("bogus"), lcm::ContractError);
  lcm::RestoreConfig cfg;
  cfg.steps = 0;
  EXPECT_THROW(cfg.validate(), lcm::ContractError);
}
