#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "lcm/rng.hpp"
#include "lcm/tape.hpp"

namespace lcm {

// One random problem: parameter blocks plus a scalar objective over them.
// The blocks live inside `owner`.
struct GradInstance {
  std::shared_ptr<void> owner;
  std::vector<ParamBlock<double>*> params;
  std::function<Var(Tape<double>&)> loss;
};

struct GradCase {
  std::string name;
  std::function<GradInstance(Rng&)> sample;
};

struct GradCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-5;  // pass iff error < tolerance
  int instances = 20;
  // Entries checked per block; 0 checks every entry.
  int entries_per_block = 0;
  // Entries whose h and h/2 central differences disagree by more than this
  // (relative to the largest difference quotient) straddle a kink and are
  // skipped; instances losing more than half their entries are resampled.
  double kink_threshold = 2e-6;
  int max_rejections = 400;
  std::uint64_t seed = 0;
};

struct CaseReport {
  std::string name;
  int instances = 0;
  int rejected = 0;
  double max_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  std::vector<CaseReport> cases;
  double seconds = 0.0;
  bool passed() const;
  void print(std::ostream& out) const;
};

// max|a - b| / max(max|a|, max|b|), 0 when both vanish.
double relative_inf_error(const std::vector<double>& a, const std::vector<double>& b);

CaseReport check_case(const GradCase& c, const GradCheckOptions& options);
GradCheckReport run_gradcheck(const std::vector<GradCase>& cases, const GradCheckOptions& options);

// Every differentiable primitive, the losses and the restoration energies.
std::vector<GradCase> primitive_cases();
// Latent net and generator of a preset composed with the training loss.
std::vector<GradCase> preset_cases(const std::string& preset);
// Squaring op whose backward has a flipped sign; must fail.
GradCase injected_bug_case();

}  // namespace lcm
