#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lcm/degrade.hpp"
#include "lcm/restore.hpp"

namespace lcm {

enum class Region { kKnown, kHole, kFull };

Region parse_region(const std::string& name);

// Mean squared difference over the selected pixels, all channels. The mask
// is H x W; an empty selection is an error.
template <typename T>
double mse_region(const Tensor<T>& x_hat, const Tensor<T>& x, const Mask& mask, Region region);

struct EvalRow {
  std::string id;
  std::string task;
  std::string mode;
  double mse_full = 0.0;
  double mse_known = 0.0;
  double mse_hole = 0.0;  // NaN when the task has no hole
  double lap_l1 = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  // Column means; NaN entries are skipped (NaN when a column has none).
  EvalRow aggregate() const;
  void write_csv(std::ostream& out, bool with_aggregate = true) const;
};

struct EvalItem {
  std::string id;
  Tensor<Real> restored;
  Tensor<Real> truth;
  DegradationSpec spec;
  std::string mode;
};

EvalRow evaluate_one(const EvalItem& item);
EvalReport evaluate(const std::vector<EvalItem>& items);
// Aligned lists; throws ContractError on length mismatch.
EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<RestorationResult>& results,
                    const std::vector<Tensor<Real>>& truth, const std::vector<DegradationSpec>& specs);

}  // namespace lcm
