#include "lcm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "lcm/losses.hpp"

namespace lcm {

Region parse_region(const std::string& name) {
  if (name == "known") return Region::kKnown;
  if (name == "hole") return Region::kHole;
  if (name == "full") return Region::kFull;
  throw ContractError("unknown region '" + name + "' (known|hole|full)");
}

template <typename T>
double mse_region(const Tensor<T>& x_hat, const Tensor<T>& x, const Mask& mask, Region region) {
  if (!(x_hat.shape() == x.shape())) throw ShapeError("mse_region: " + x_hat.shape().str() + " vs " + x.shape().str());
  require_rank4(x.shape(), "mse_region");
  const int n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
  if (!(mask.shape() == Shape{h, w})) throw ShapeError("mse_region: mask " + mask.shape().str() + " for image " + x.shape().str());
  const auto m = mask.data();
  for (float v : m) {
    if (v != 0.0f && v != 1.0f) throw ContractError("mse_region: mask is not binary");
  }
  const auto a = x_hat.data();
  const auto b = x.data();
  double sum = 0.0;
  std::size_t count = 0;
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (std::size_t p = 0; p < plane; ++p) {
    const bool known = m[p] != 0.0f;
    if (region == Region::kKnown && !known) continue;
    if (region == Region::kHole && known) continue;
    for (int k = 0; k < n * c; ++k) {
      const double d = static_cast<double>(a[k * plane + p]) - static_cast<double>(b[k * plane + p]);
      sum += d * d;
    }
    count += static_cast<std::size_t>(n) * c;
  }
  if (count == 0) throw ContractError("mse_region: selected region is empty");
  return sum / static_cast<double>(count);
}

template double mse_region<float>(const Tensor<float>&, const Tensor<float>&, const Mask&, Region);
template double mse_region<double>(const Tensor<double>&, const Tensor<double>&, const Mask&, Region);

EvalRow evaluate_one(const EvalItem& item) {
  const Shape& s = item.truth.shape();
  require_rank4(s, "evaluate");
  EvalRow row;
  row.id = item.id;
  row.task = task_name(item.spec.kind);
  row.mode = item.mode;
  const int h = s[2], w = s[3];
  const Mask full = full_mask(h, w);
  row.mse_full = mse_region(item.restored, item.truth, full, Region::kFull);
  if (item.spec.kind == TaskKind::kInpaint) {
    row.mse_known = mse_region(item.restored, item.truth, item.spec.mask, Region::kKnown);
    row.mse_hole = count_zeros(item.spec.mask) > 0 ? mse_region(item.restored, item.truth, item.spec.mask, Region::kHole)
                                                   : std::numeric_limits<double>::quiet_NaN();
  } else {
    // fit in observation space
    const auto a = degrade(item.restored, item.spec);
    const auto b = degrade(item.truth, item.spec);
    row.mse_known = mse_region(a, b, full_mask(a.shape()[2], a.shape()[3]), Region::kFull);
    row.mse_hole = std::numeric_limits<double>::quiet_NaN();
  }
  row.lap_l1 = lap_l1(item.restored, item.truth, PyramidSpec::default_for(h, w));
  return row;
}

EvalReport evaluate(const std::vector<EvalItem>& items) {
  EvalReport r;
  r.rows.reserve(items.size());
  for (const auto& it : items) r.rows.push_back(evaluate_one(it));
  return r;
}

EvalReport evaluate(const std::vector<std::string>& ids, const std::vector<RestorationResult>& results,
                    const std::vector<Tensor<Real>>& truth, const std::vector<DegradationSpec>& specs) {
  if (ids.size() != results.size() || results.size() != truth.size() || truth.size() != specs.size()) {
    throw ContractError("evaluate: ids/results/truth/specs lengths differ");
  }
  std::vector<EvalItem> items;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    items.push_back({ids[i], results[i].image, truth[i], specs[i], mode_name(results[i].mode)});
  }
  return evaluate(items);
}

EvalRow EvalReport::aggregate() const {
  EvalRow agg;
  agg.id = "mean";
  auto mean = [&](double EvalRow::*field) {
    double sum = 0;
    int n = 0;
    for (const auto& r : rows) {
      if (std::isnan(r.*field)) continue;
      sum += r.*field;
      ++n;
    }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
  };
  agg.mse_full = mean(&EvalRow::mse_full);
  agg.mse_known = mean(&EvalRow::mse_known);
  agg.mse_hole = mean(&EvalRow::mse_hole);
  agg.lap_l1 = mean(&EvalRow::lap_l1);
  if (!rows.empty()) {
    agg.task = rows.front().task;
    agg.mode = rows.front().mode;
    for (const auto& r : rows) {
      if (r.task != agg.task) agg.task = "mixed";
      if (r.mode != agg.mode) agg.mode = "mixed";
    }
  }
  return agg;
}

void EvalReport::write_csv(std::ostream& out, bool with_aggregate) const {
  out << "id,task,mode,mse_full,mse_known,mse_hole,lap_l1\n";
  char buf[256];
  auto emit = [&](const EvalRow& r) {
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g,%.9g,%.9g\n", r.mse_full, r.mse_known, r.mse_hole, r.lap_l1);
    out << r.id << ',' << r.task << ',' << r.mode << buf;
  };
  for (const auto& r : rows) emit(r);
  if (with_aggregate && !rows.empty()) emit(aggregate());
}

}  // namespace lcm
