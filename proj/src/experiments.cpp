#include "lcm/experiments.hpp"

#include <chrono>
#include <cstdio>
#include <ostream>
#include <tuple>

#include "lcm/rng.hpp"

namespace lcm {

VariantRow train_variant(const Dataset& data, const TrainConfig& config, TrainState& state) {
  const auto t0 = std::chrono::steady_clock::now();
  state = init_train_state(data, config);
  VariantRow row;
  row.variant = variant_name(config.variant);
  if (config.variant == ModelVariant::kGloVector) row.variant += "(" + std::to_string(config.vector_dim) + ")";
  row.latent_dim = config.variant == ModelVariant::kGloVector ? static_cast<std::size_t>(config.vector_dim)
                                                              : state.arch.generator.input.numel();
  row.initial_loss = population_loss(state, data, config);
  train_more(state, data, config);
  row.train_loss = eval_loss_train(state, data, config);
  row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

std::pair<EvalReport, EvalReport> compare_restoration(const TrainState& lcm_state, const Dataset& data, int count,
                                                      int hole, const RestoreConfig& cfg) {
  if (lcm_state.variant != ModelVariant::kLcm) throw ContractError("restoration comparison needs an LCM model");
  const int h = data.shape.height, w = data.shape.width;
  if (hole <= 0) hole = std::max(1, 3 * std::min(h, w) / 8);
  const DegradationSpec spec = DegradationSpec::inpaint(center_mask(h, w, hole, hole), cfg.latent_penalty);
  std::vector<EvalItem> man, zs;
  const int n = std::min<int>(count, static_cast<int>(data.size()));
  for (int i = 0; i < n; ++i) {
    const Tensor<Real>& x = data.images[i];
    const Tensor<Real> y = degrade(x, spec);
    RestoreConfig c = cfg;
    c.seed = Rng::mix(cfg.seed, static_cast<std::uint64_t>(i));
    c.box = lcm_state.box;
    const auto a = restore_manifold(lcm_state.generator, lcm_state.arch.latent, lcm_state.noise, y, spec, c);
    const auto b = restore_zspace(lcm_state.generator, lcm_state.arch.latent, lcm_state.noise, y, spec, c);
    man.push_back({data.ids[i], a.image, x, spec, mode_name(RestoreMode::kManifold)});
    zs.push_back({data.ids[i], b.image, x, spec, mode_name(RestoreMode::kZSpace)});
  }
  return {evaluate(man), evaluate(zs)};
}

CompareReport run_comparison(const Dataset& data, const CompareConfig& config) {
  CompareReport r;
  TrainState lcm_state, state;
  TrainConfig c = config.train;
  c.variant = ModelVariant::kLcm;
  r.variants.push_back(train_variant(data, c, lcm_state));
  c.variant = ModelVariant::kGloMap;
  r.variants.push_back(train_variant(data, c, state));
  for (int d : config.vector_dims) {
    c.variant = ModelVariant::kGloVector;
    c.vector_dim = d;
    r.variants.push_back(train_variant(data, c, state));
  }
  std::tie(r.manifold, r.zspace) =
      compare_restoration(lcm_state, data, config.restore_images, config.hole, config.restore);

  char buf[256];
  const double lcm_loss = r.variants[0].train_loss;
  const double map_loss = r.variants[1].train_loss;
  std::snprintf(buf, sizeof buf, "glo_map %.6g vs lcm %.6g (+%.0f%% slack)", map_loss, lcm_loss, 100 * config.slack);
  r.claims.push_back({"glo_map_fits_at_least_as_well_as_lcm", map_loss <= lcm_loss * (1 + config.slack), buf});
  bool monotone = true, map_best = true;
  std::string sweep;
  for (std::size_t i = 2; i < r.variants.size(); ++i) {
    if (i > 2 && r.variants[i].train_loss > r.variants[i - 1].train_loss) monotone = false;
    if (map_loss > r.variants[i].train_loss) map_best = false;
    std::snprintf(buf, sizeof buf, "%s%s %.6g", sweep.empty() ? "" : ", ", r.variants[i].variant.c_str(),
                  r.variants[i].train_loss);
    sweep += buf;
  }
  r.claims.push_back({"glo_vector_loss_non_increasing_in_d", monotone, sweep});
  r.claims.push_back({"glo_map_beats_every_vector_variant", map_best, sweep});
  const double zk = r.zspace.aggregate().mse_known, mk = r.manifold.aggregate().mse_known;
  std::snprintf(buf, sizeof buf, "known-pixel mse zspace %.6g vs manifold %.6g", zk, mk);
  r.claims.push_back({"zspace_fits_known_pixels_at_least_as_well", zk <= mk, buf});
  return r;
}

void CompareReport::write_table(std::ostream& out) const {
  char buf[256];
  out << "variant,latent_dim,initial_loss,train_loss,seconds\n";
  for (const auto& v : variants) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.9g,%.9g,%.1f\n", v.variant.c_str(), v.latent_dim, v.initial_loss,
                  v.train_loss, v.seconds);
    out << buf;
  }
  out << "\nrestoration\n";
  EvalReport both;
  both.rows.push_back(manifold.aggregate());
  both.rows.push_back(zspace.aggregate());
  both.write_csv(out, false);
  out << "\nclaim,holds,detail\n";
  for (const auto& c : claims) out << c.name << ',' << (c.holds ? "yes" : "no") << ",\"" << c.detail << "\"\n";
}

}  // namespace lcm
