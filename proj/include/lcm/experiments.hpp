#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lcm/metrics.hpp"
#include "lcm/restore.hpp"
#include "lcm/train.hpp"

namespace lcm {

struct CompareConfig {
  TrainConfig train;  // variant and vector_dim are overridden per row
  std::vector<int> vector_dims{64, 128, 256};
  int restore_images = 10;
  int hole = 0;  // center hole side; 0: 3/8 of the image side
  RestoreConfig restore;
  double slack = 0.05;
};

struct VariantRow {
  std::string variant;
  std::size_t latent_dim = 0;
  double initial_loss = 0.0;
  double train_loss = 0.0;
  double seconds = 0.0;
};

struct Claim {
  std::string name;
  bool holds = false;
  std::string detail;
};

struct CompareReport {
  std::vector<VariantRow> variants;
  EvalReport manifold;
  EvalReport zspace;
  std::vector<Claim> claims;

  void write_table(std::ostream& out) const;
};

// Trains one model and returns its row; `state` receives the trained model.
VariantRow train_variant(const Dataset& data, const TrainConfig& config, TrainState& state);

// Center-hole inpainting of the first `count` training images with manifold
// and z-space restoration at equal budget.
std::pair<EvalReport, EvalReport> compare_restoration(const TrainState& lcm_state, const Dataset& data, int count,
                                                      int hole, const RestoreConfig& cfg);

CompareReport run_comparison(const Dataset& data, const CompareConfig& config);

}  // namespace lcm
