#include "lcm/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <ostream>

#include "lcm/degrade.hpp"
#include "lcm/losses.hpp"
#include "lcm/nets.hpp"
#include "lcm/ops.hpp"

namespace lcm {

bool GradCheckReport::passed() const {
  if (cases.empty()) return false;
  return std::all_of(cases.begin(), cases.end(), [](const CaseReport& c) { return c.passed; });
}

void GradCheckReport::print(std::ostream& out) const {
  char buf[256];
  for (const auto& c : cases) {
    std::snprintf(buf, sizeof buf, "%-28s %s  max_rel_err=%.3e  instances=%d  rejected=%d\n", c.name.c_str(),
                  c.passed ? "ok  " : "FAIL", c.max_error, c.instances, c.rejected);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%zu cases, %.1fs, %s\n", cases.size(), seconds, passed() ? "passed" : "FAILED");
  out << buf;
}

double relative_inf_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  if (!std::isfinite(diff) || !std::isfinite(scale)) return std::numeric_limits<double>::infinity();
  return scale == 0 ? 0.0 : diff / scale;
}

namespace {

double evaluate(GradInstance& inst) {
  Tape<double> tape;
  return tape.scalar(inst.loss(tape));
}

struct Entry {
  std::size_t block;
  std::size_t index;
};

std::vector<Entry> pick_entries(const GradInstance& inst, int per_block, Rng& rng) {
  std::vector<Entry> out;
  for (std::size_t b = 0; b < inst.params.size(); ++b) {
    const std::size_t n = inst.params[b]->value.size();
    if (per_block <= 0 || n <= static_cast<std::size_t>(per_block)) {
      for (std::size_t i = 0; i < n; ++i) out.push_back({b, i});
    } else {
      for (int k = 0; k < per_block; ++k) out.push_back({b, static_cast<std::size_t>(rng.below(n))});
    }
  }
  return out;
}

struct Sides {
  double up = 0, down = 0;
};

Sides probe_entry(GradInstance& inst, const Entry& e, double h) {
  double& v = inst.params[e.block]->value.data()[e.index];
  const double saved = v;
  v = saved + h;
  const double up = evaluate(inst);
  v = saved - h;
  const double down = evaluate(inst);
  v = saved;
  return {up, down};
}

}  // namespace

CaseReport check_case(const GradCase& c, const GradCheckOptions& options) {
  CaseReport report;
  report.name = c.name;
  report.passed = true;
  Rng rng(options.seed, std::hash<std::string>{}(c.name) & 0xffffffffULL);
  while (report.instances < options.instances) {
    GradInstance inst = c.sample(rng);
    const auto entries = pick_entries(inst, options.entries_per_block, rng);
    const double f0 = evaluate(inst);
    const double h = options.step;
    std::vector<double> fd, fd_half, bend;
    for (const auto& e : entries) {
      const Sides a = probe_entry(inst, e, h);
      const Sides b = probe_entry(inst, e, h / 2);
      fd.push_back((a.up - a.down) / (2 * h));
      fd_half.push_back((b.up - b.down) / h);
      // h * f'' for smooth f, so the h and h/2 second differences differ
      // by a factor of two; a kink at distance < h breaks that.
      bend.push_back((a.up - 2 * f0 + a.down) / h - 4 * (b.up - 2 * f0 + b.down) / h);
    }
    double scale = 0;
    for (double v : fd) scale = std::max(scale, std::abs(v));
    std::vector<std::size_t> smooth;
    for (std::size_t k = 0; k < entries.size(); ++k) {
      const double tol = options.kink_threshold * scale;
      if (std::abs(fd[k] - fd_half[k]) <= tol && std::abs(bend[k]) <= tol) smooth.push_back(k);
    }
    if (smooth.empty() || 2 * smooth.size() < entries.size()) {
      if (++report.rejected > options.max_rejections) {
        report.passed = false;
        break;
      }
      continue;
    }
    Tape<double> tape;
    tape.backward(inst.loss(tape));
    std::vector<double> analytic, reference;
    for (std::size_t k : smooth) {
      analytic.push_back(inst.params[entries[k].block]->grad.data()[entries[k].index]);
      reference.push_back(fd[k]);
    }
    const double err = relative_inf_error(analytic, reference);
    report.max_error = std::max(report.max_error, err);
    if (!(err < options.tolerance)) report.passed = false;
    ++report.instances;
  }
  return report;
}

GradCheckReport run_gradcheck(const std::vector<GradCase>& cases, const GradCheckOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  GradCheckReport r;
  for (const auto& c : cases) r.cases.push_back(check_case(c, options));
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace {

using T = double;
using Block = ParamBlock<T>;
using Blocks = std::vector<Block>;
using LossFn = std::function<Var(Tape<T>&, Blocks&)>;

Tensor<T> uniform(Rng& rng, Shape s, double lo = -1.0, double hi = 1.0) { return rng.uniform_tensor<T>(s, lo, hi); }

// Entries in [lo, hi] with random sign; keeps values off the origin.
Tensor<T> away_from_zero(Rng& rng, Shape s, double lo = 0.1, double hi = 1.0) {
  Tensor<T> t(s);
  for (auto& v : t.data()) {
    const double m = rng.uniform(lo, hi);
    v = rng.uniform() < 0.5 ? -m : m;
  }
  return t;
}

int extent(Rng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

// Reduces a tensor-valued output to a scalar with fixed random weights.
struct Probe {
  std::shared_ptr<Tensor<T>> weights = std::make_shared<Tensor<T>>();
  std::uint64_t seed = 0;

  Var operator()(Tape<T>& tape, Var out) const {
    const auto& v = tape.value(out);
    if (!(weights->shape() == v.shape()) || weights->size() != v.size() || weights->size() == 0) {
      Rng r(seed);
      *weights = r.uniform_tensor<T>(v.shape(), -1.0, 1.0);
    }
    return ops::sum(tape, ops::mul(tape, out, tape.constant(*weights)));
  }
};

Probe make_probe(Rng& rng) {
  Probe p;
  p.seed = rng.below(~0ULL);
  return p;
}

GradInstance instance(Blocks params, LossFn loss) {
  auto owned = std::make_shared<Blocks>(std::move(params));
  GradInstance inst;
  for (auto& b : *owned) inst.params.push_back(&b);
  inst.loss = [owned, loss = std::move(loss)](Tape<T>& tape) { return loss(tape, *owned); };
  inst.owner = owned;
  return inst;
}

Block block(const char* name, Tensor<T> value) { return Block(name, std::move(value)); }

GradCase tensor_case(std::string name, std::function<Shape(Rng&)> shape,
                     std::function<Var(Tape<T>&, Var)> op, bool avoid_zero = false) {
  return {std::move(name), [shape, op, avoid_zero](Rng& rng) {
            const Shape s = shape(rng);
            Probe probe = make_probe(rng);
            return instance({block("x", avoid_zero ? away_from_zero(rng, s) : uniform(rng, s))},
                            [op, probe](Tape<T>& tape, Blocks& p) { return probe(tape, op(tape, tape.param(p[0]))); });
          }};
}

Shape small4(Rng& rng, int lo = 2, int hi = 5) {
  return Shape{extent(rng, 1, 2), extent(rng, 1, 3), extent(rng, lo, hi), extent(rng, lo, hi)};
}

GradCase conv_case() {
  return {"conv2d", [](Rng& rng) {
            const int n = extent(rng, 1, 2), ci = extent(rng, 1, 3), co = extent(rng, 1, 3);
            const int k = rng.below(2) ? 3 : 1;
            const int stride = extent(rng, 1, 2), pad = extent(rng, 0, 1);
            const int h = extent(rng, k, 6), w = extent(rng, k, 6);
            Probe probe = make_probe(rng);
            return instance({block("x", uniform(rng, Shape{n, ci, h, w})), block("w", uniform(rng, Shape{co, ci, k, k})),
                             block("b", uniform(rng, Shape{co}))},
                            [=](Tape<T>& tape, Blocks& p) {
                              return probe(tape, ops::conv2d(tape, tape.param(p[0]), tape.param(p[1]), tape.param(p[2]),
                                                             stride, pad));
                            });
          }};
}

GradCase upsample_conv_case() {
  return {"upsample_conv", [](Rng& rng) {
            const int ci = extent(rng, 1, 3), co = extent(rng, 1, 3);
            const int scale = extent(rng, 2, 3);
            Probe probe = make_probe(rng);
            return instance({block("x", uniform(rng, Shape{extent(rng, 1, 2), ci, extent(rng, 1, 3), extent(rng, 1, 3)})),
                             block("w", uniform(rng, Shape{co, ci, 3, 3})), block("b", uniform(rng, Shape{co}))},
                            [=](Tape<T>& tape, Blocks& p) {
                              return probe(tape, ops::upsample_conv(tape, tape.param(p[0]), tape.param(p[1]),
                                                                    tape.param(p[2]), scale));
                            });
          }};
}

GradCase norm_case(ops::NormMode mode, const char* name) {
  return {name, [mode](Rng& rng) {
            const int c = extent(rng, 1, 3);
            const Shape s{extent(rng, 1, 3), c, extent(rng, 2, 4), extent(rng, 2, 4)};
            auto stats = std::make_shared<ops::NormStats<T>>(c);
            stats->mean = uniform(rng, Shape{c}, -0.5, 0.5);
            stats->var = uniform(rng, Shape{c}, 0.5, 2.0);
            Probe probe = make_probe(rng);
            return instance({block("x", uniform(rng, s)), block("gain", uniform(rng, Shape{c}, 0.5, 1.5)),
                             block("shift", uniform(rng, Shape{c}))},
                            [=](Tape<T>& tape, Blocks& p) {
                              return probe(tape, ops::channel_norm(tape, tape.param(p[0]), tape.param(p[1]),
                                                                   tape.param(p[2]), *stats, mode));
                            });
          }};
}

GradCase binary_case(std::string name, std::function<Var(Tape<T>&, Var, Var)> op) {
  return {std::move(name), [op](Rng& rng) {
            const Shape s = small4(rng);
            Probe probe = make_probe(rng);
            return instance({block("a", uniform(rng, s)), block("b", uniform(rng, s))},
                            [=](Tape<T>& tape, Blocks& p) { return probe(tape, op(tape, tape.param(p[0]), tape.param(p[1]))); });
          }};
}

GradCase pair_loss_case(std::string name, std::function<Var(Tape<T>&, Var, Var, const PyramidSpec&)> op) {
  return {std::move(name), [op](Rng& rng) {
            const int h = extent(rng, 2, 8), w = extent(rng, 2, 8);
            const Shape s{extent(rng, 1, 2), extent(rng, 1, 3), h, w};
            const PyramidSpec spec{extent(rng, 1, PyramidSpec::max_levels(h, w))};
            return instance({block("x1", uniform(rng, s, 0, 1)), block("x2", uniform(rng, s, 0, 1))},
                            [=](Tape<T>& tape, Blocks& p) { return op(tape, tape.param(p[0]), tape.param(p[1]), spec); });
          }};
}

GradCase lanczos_case(int factor) {
  return {"lanczos_down_x" + std::to_string(factor), [factor](Rng& rng) {
            const Shape s{1, extent(rng, 1, 3), factor * extent(rng, 1, 3), factor * extent(rng, 1, 3)};
            Probe probe = make_probe(rng);
            return instance({block("x", uniform(rng, s))}, [=](Tape<T>& tape, Blocks& p) {
              return probe(tape, ops::lanczos_down(tape, tape.param(p[0]), factor));
            });
          }};
}

// Energy over x = sigmoid(u) with a penalized latent z, as in restoration.
GradCase energy_case(std::string name, TaskKind kind, bool pyramid_term) {
  return {std::move(name), [kind, pyramid_term](Rng& rng) {
            const int factor = kind == TaskKind::kSuperres ? (rng.below(2) ? 2 : 4) : 1;
            const int h = factor * extent(rng, 1, 2) * 2, w = factor * extent(rng, 1, 2) * 2;
            const Shape s{1, 3, h, w};
            DegradationSpec spec;
            switch (kind) {
              case TaskKind::kInpaint: {
                Mask m = random_mask(h, w, rng.uniform(0.1, 0.7), rng.below(1000000));
                spec = DegradationSpec::inpaint(std::move(m), 0.1);
                break;
              }
              case TaskKind::kSuperres: spec = DegradationSpec::superres(factor, 0.1); break;
              case TaskKind::kColorize: spec = DegradationSpec::colorize(0.1); break;
            }
            spec.pyramid_term = pyramid_term;
            const Tensor<T> y = uniform(rng, spec.observed_shape(s), 0, 1);
            return instance({block("u", uniform(rng, s, -2, 2)), block("z", uniform(rng, Shape{1, 2, 2, 2}))},
                            [=](Tape<T>& tape, Blocks& p) {
                              Var x = ops::sigmoid(tape, tape.param(p[0]));
                              Var zz = ops::sum_square(tape, tape.param(p[1]));
                              return ops::energy(tape, x, tape.constant(y), spec, zz).total;
                            });
          }};
}

ArchSpec tiny_generator() {
  ArchSpec a;
  a.input = {2, 4, 4};
  a.output = {3, 8, 8};
  a.output_activation = OutputActivation::kSigmoid;
  LayerSpec l0{LayerKind::kConv, 2, 3, 3, 1, 1, 1, true, true, -1};
  LayerSpec l1{LayerKind::kConv, 3, 4, 3, 2, 1, 1, true, true, -1};
  LayerSpec l2{LayerKind::kUpConv, 4, 3, 3, 1, 0, 2, true, true, -1};
  LayerSpec l3{LayerKind::kUpConv, 6, 3, 3, 1, 0, 2, false, false, 0};
  a.layers = {l0, l1, l2, l3};
  a.validate();
  return a;
}

struct NetState {
  GeneratorModel<T> generator;
  std::vector<LatentCodec<T>> codecs;
  Tensor<T> noise;
  Block z;
};

// Generator (and optionally a latent net in front of it) under the
// training loss; every block of the model is checked.
GradInstance model_instance(std::shared_ptr<NetState> st, ops::NormMode mode, const Tensor<T>& target) {
  GradInstance inst;
  inst.owner = st;
  const int levels = PyramidSpec::default_for(target.shape()[2], target.shape()[3]).levels;
  if (!st->codecs.empty()) {
    for (auto& c : st->codecs)
      for (auto& b : c.phi) inst.params.push_back(&b);
  } else {
    inst.params.push_back(&st->z);
  }
  for (auto* b : st->generator.params()) inst.params.push_back(b);
  inst.loss = [st, mode, target, levels](Tape<T>& tape) {
    Var x;
    if (!st->codecs.empty()) {
      Var s = tape.constant(st->noise);
      std::vector<Var> zs;
      for (auto& c : st->codecs) zs.push_back(forward_latent(tape, c, s));
      x = forward_generator(tape, st->generator, ops::stack_batch<T>(tape, zs), mode);
    } else if (st->generator.input_linear) {
      x = forward_generator_vector(tape, st->generator, tape.param(st->z), mode);
    } else {
      x = forward_generator(tape, st->generator, tape.param(st->z), mode);
    }
    return ops::combined_loss(tape, x, tape.constant(target), PyramidSpec{levels});
  };
  return inst;
}

void randomize_stats(GeneratorModel<T>& g, Rng& rng) {
  for (auto& l : g.layers) {
    if (!l.gain) continue;
    l.stats.mean = uniform(rng, l.stats.mean.shape(), -0.3, 0.3);
    l.stats.var = uniform(rng, l.stats.var.shape(), 0.5, 1.5);
  }
}

GradCase generator_case(std::string name, ops::NormMode mode, int vector_dim) {
  return {std::move(name), [mode, vector_dim](Rng& rng) {
            auto st = std::make_shared<NetState>();
            st->generator = init_generator<T>(tiny_generator(), rng.below(~0ULL), vector_dim);
            randomize_stats(st->generator, rng);
            st->z = block("z", vector_dim ? uniform(rng, Shape{2, vector_dim}) : uniform(rng, st->generator.arch.input.batch(2)));
            return model_instance(st, mode, uniform(rng, st->generator.arch.output.batch(2), 0, 1));
          }};
}

constexpr int kBatch = 3;

GradCase preset_case(const std::string& preset, bool with_latent, ops::NormMode mode, int vector_dim) {
  std::string name = preset + (with_latent ? "_lcm" : vector_dim ? "_glo_vector" : "_glo_map") +
                     (mode == ops::NormMode::kEval ? "_eval" : "_train");
  return {name, [preset, with_latent, mode, vector_dim](Rng& rng) {
            const ArchPreset arch = toy_arch_templates(preset);
            auto st = std::make_shared<NetState>();
            st->generator = init_generator<T>(arch.generator, rng.below(~0ULL), vector_dim);
            randomize_stats(st->generator, rng);
            if (with_latent) {
              // wider box than training so the latent path carries signal
              for (int i = 0; i < kBatch; ++i) st->codecs.push_back(init_latent_codec<T>(arch.latent, rng.below(~0ULL), T(0.5)));
              st->noise = init_noise<T>(arch.latent.input.batch(1), rng.below(~0ULL));
            } else {
              st->z = block("z", vector_dim ? uniform(rng, Shape{kBatch, vector_dim})
                                            : uniform(rng, arch.generator.input.batch(kBatch)));
            }
            return model_instance(st, mode, uniform(rng, arch.generator.output.batch(kBatch), 0, 1));
          }};
}

}  // namespace

GradCase injected_bug_case() {
  return {"injected_sign_flip", [](Rng& rng) {
            return instance({block("x", uniform(rng, Shape{1, 1, 2, 3}))}, [](Tape<T>& tape, Blocks& p) {
              Var x = tape.param(p[0]);
              Tensor<T> v = tape.value(x);
              for (auto& e : v.data()) e *= e;
              Var y = tape.record("bad_square", std::move(v), {x}, [x](Tape<T>& t, Var self) {
                const auto& g = t.grad(self);
                const auto& xv = t.value(x);
                auto& gx = t.grad_buffer(x);
                for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] -= 2 * xv.data()[i] * g.data()[i];
              });
              return ops::sum(tape, y);
            });
          }};
}

std::vector<GradCase> primitive_cases() {
  std::vector<GradCase> cases;
  cases.push_back(conv_case());
  cases.push_back(tensor_case("upsample_nearest", [](Rng& r) { return small4(r, 1, 3); },
                              [](Tape<T>& t, Var x) { return ops::upsample_nearest(t, x, 2); }));
  cases.push_back(tensor_case("expand2_to", [](Rng& r) { return small4(r, 1, 4); }, [](Tape<T>& t, Var x) {
    const auto& s = t.value(x).shape();
    return ops::expand2_to(t, x, 2 * s[2] - 1, 2 * s[3]);
  }));
  cases.push_back(upsample_conv_case());
  cases.push_back(tensor_case("leaky_relu", [](Rng& r) { return small4(r); },
                              [](Tape<T>& t, Var x) { return ops::leaky_relu(t, x, 0.2); }, true));
  cases.push_back(tensor_case("sigmoid", [](Rng& r) { return small4(r); },
                              [](Tape<T>& t, Var x) { return ops::sigmoid(t, ops::scale(t, x, 3.0)); }));
  cases.push_back(norm_case(ops::NormMode::kTrain, "channel_norm_train"));
  cases.push_back(norm_case(ops::NormMode::kEval, "channel_norm_eval"));
  cases.push_back({"concat_channels", [](Rng& rng) {
                     const int n = extent(rng, 1, 2), h = extent(rng, 1, 4), w = extent(rng, 1, 4);
                     Probe probe = make_probe(rng);
                     return instance({block("a", uniform(rng, Shape{n, extent(rng, 1, 3), h, w})),
                                      block("b", uniform(rng, Shape{n, extent(rng, 1, 3), h, w}))},
                                     [=](Tape<T>& t, Blocks& p) {
                                       return probe(t, ops::concat_channels(t, t.param(p[0]), t.param(p[1])));
                                     });
                   }});
  cases.push_back({"stack_batch", [](Rng& rng) {
                     const int c = extent(rng, 1, 3), h = extent(rng, 1, 4), w = extent(rng, 1, 4);
                     Probe probe = make_probe(rng);
                     return instance({block("a", uniform(rng, Shape{extent(rng, 1, 2), c, h, w})),
                                      block("b", uniform(rng, Shape{1, c, h, w}))},
                                     [=](Tape<T>& t, Blocks& p) {
                                       const Var parts[] = {t.param(p[0]), t.param(p[1]), t.param(p[0])};
                                       return probe(t, ops::stack_batch<T>(t, parts));
                                     });
                   }});
  cases.push_back({"linear", [](Rng& rng) {
                     const int n = extent(rng, 1, 3), in = extent(rng, 1, 5), out = extent(rng, 1, 5);
                     Probe probe = make_probe(rng);
                     return instance({block("x", uniform(rng, Shape{n, in})), block("w", uniform(rng, Shape{out, in})),
                                      block("b", uniform(rng, Shape{out}))},
                                     [=](Tape<T>& t, Blocks& p) {
                                       return probe(t, ops::linear(t, t.param(p[0]), t.param(p[1]), t.param(p[2])));
                                     });
                   }});
  cases.push_back(tensor_case("reshape", [](Rng& r) { return Shape{1, 2, extent(r, 1, 3), 4}; }, [](Tape<T>& t, Var x) {
    const auto& s = t.value(x).shape();
    return ops::reshape(t, x, Shape{4, s[2] * 2});
  }));
  cases.push_back(binary_case("add", [](Tape<T>& t, Var a, Var b) { return ops::add(t, a, b); }));
  cases.push_back(binary_case("sub", [](Tape<T>& t, Var a, Var b) { return ops::sub(t, a, b); }));
  cases.push_back(binary_case("mul", [](Tape<T>& t, Var a, Var b) { return ops::mul(t, a, b); }));
  cases.push_back(binary_case("mul_shared", [](Tape<T>& t, Var a, Var) { return ops::mul(t, a, a); }));
  cases.push_back(tensor_case("scale", [](Rng& r) { return small4(r); },
                              [](Tape<T>& t, Var x) { return ops::scale(t, x, -1.7); }));
  cases.push_back(tensor_case("sum", [](Rng& r) { return small4(r); },
                              [](Tape<T>& t, Var x) { return ops::scale(t, ops::sum(t, x), 0.3); }));
  cases.push_back(tensor_case("mean_abs", [](Rng& r) { return small4(r); },
                              [](Tape<T>& t, Var x) { return ops::mean_abs(t, x); }, true));
  cases.push_back(tensor_case("mean_square", [](Rng& r) { return small4(r); },
                              [](Tape<T>& t, Var x) { return ops::mean_square(t, x); }));
  cases.push_back(tensor_case("sum_square", [](Rng& r) { return small4(r); },
                              [](Tape<T>& t, Var x) { return ops::sum_square(t, x); }));
  cases.push_back(binary_case("weighted_sum", [](Tape<T>& t, Var a, Var b) {
    const Var parts[] = {ops::sum_square(t, a), ops::sum(t, b), ops::mean_square(t, ops::mul(t, a, b))};
    const T weights[] = {0.5, -2.0, 3.0};
    return ops::weighted_sum<T>(t, parts, weights);
  }));
  cases.push_back({"masked_mean_square", [](Rng& rng) {
                     const Shape s = small4(rng);
                     const Tensor<T> mask = random_mask(s[2], s[3], rng.uniform(0.0, 0.6), rng.below(1000000)).cast<T>();
                     return instance({block("x", uniform(rng, s)), block("y", uniform(rng, s))},
                                     [=](Tape<T>& t, Blocks& p) {
                                       return ops::masked_mean_square(t, t.param(p[0]), t.param(p[1]), mask);
                                     });
                   }});
  cases.push_back(tensor_case("gaussian_down", [](Rng& r) { return small4(r, 2, 8); },
                              [](Tape<T>& t, Var x) { return ops::gaussian_down(t, x); }));
  cases.push_back({"laplacian_pyramid", [](Rng& rng) {
                     const int h = extent(rng, 2, 8), w = extent(rng, 2, 8);
                     const Shape s{1, extent(rng, 1, 3), h, w};
                     const PyramidSpec spec{extent(rng, 1, PyramidSpec::max_levels(h, w))};
                     std::vector<Probe> probes;
                     for (int j = 0; j < spec.levels; ++j) probes.push_back(make_probe(rng));
                     return instance({block("x", uniform(rng, s))}, [=](Tape<T>& t, Blocks& p) {
                       auto levels = ops::laplacian_pyramid(t, t.param(p[0]), spec);
                       std::vector<Var> parts;
                       for (std::size_t j = 0; j < levels.size(); ++j) parts.push_back(probes[j](t, levels[j]));
                       const std::vector<T> ones(parts.size(), 1.0);
                       return ops::weighted_sum<T>(t, parts, ones);
                     });
                   }});
  cases.push_back(pair_loss_case("lap_l1", [](Tape<T>& t, Var a, Var b, const PyramidSpec& s) { return ops::lap_l1(t, a, b, s); }));
  cases.push_back(pair_loss_case("combined_loss",
                                 [](Tape<T>& t, Var a, Var b, const PyramidSpec& s) { return ops::combined_loss(t, a, b, s); }));
  cases.push_back(lanczos_case(2));
  cases.push_back(lanczos_case(4));
  cases.push_back({"to_gray", [](Rng& rng) {
                     Probe probe = make_probe(rng);
                     return instance({block("x", uniform(rng, Shape{extent(rng, 1, 2), 3, extent(rng, 1, 4), extent(rng, 1, 4)}))},
                                     [=](Tape<T>& t, Blocks& p) { return probe(t, ops::to_gray(t, t.param(p[0]))); });
                   }});
  cases.push_back(energy_case("energy_inpaint", TaskKind::kInpaint, false));
  cases.push_back(energy_case("energy_superres", TaskKind::kSuperres, false));
  cases.push_back(energy_case("energy_colorize", TaskKind::kColorize, false));
  cases.push_back(energy_case("energy_inpaint_pyramid", TaskKind::kInpaint, true));
  cases.push_back(generator_case("generator_train", ops::NormMode::kTrain, 0));
  cases.push_back(generator_case("generator_eval", ops::NormMode::kEval, 0));
  cases.push_back(generator_case("generator_vector", ops::NormMode::kTrain, 5));
  cases.push_back({"conv_norm_leaky_mse", [](Rng& rng) {
                     const Shape s{2, 2, 5, 5};
                     const Tensor<T> target = uniform(rng, Shape{2, 3, 5, 5});
                     auto stats = std::make_shared<ops::NormStats<T>>(3);
                     return instance({block("x", uniform(rng, s)), block("w", uniform(rng, Shape{3, 2, 3, 3})),
                                      block("b", uniform(rng, Shape{3})), block("gain", uniform(rng, Shape{3}, 0.5, 1.5)),
                                      block("shift", uniform(rng, Shape{3}))},
                                     [=](Tape<T>& t, Blocks& p) {
                                       Var h = ops::conv2d(t, t.param(p[0]), t.param(p[1]), t.param(p[2]), 1, 1);
                                       h = ops::channel_norm(t, h, t.param(p[3]), t.param(p[4]), *stats, ops::NormMode::kTrain);
                                       h = ops::leaky_relu(t, h, 0.2);
                                       return ops::mean_square(t, ops::sub(t, h, t.constant(target)));
                                     });
                   }});
  return cases;
}

std::vector<GradCase> preset_cases(const std::string& preset) {
  return {preset_case(preset, true, ops::NormMode::kTrain, 0), preset_case(preset, true, ops::NormMode::kEval, 0),
          preset_case(preset, false, ops::NormMode::kTrain, 0), preset_case(preset, false, ops::NormMode::kTrain, 16)};
}

}  // namespace lcm
