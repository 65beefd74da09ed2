#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "lcm/checkpoint.hpp"
#include "lcm/dataset.hpp"
#include "lcm/experiments.hpp"
#include "lcm/gradcheck.hpp"
#include "lcm/imageio.hpp"
#include "lcm/kernels.hpp"
#include "lcm/metrics.hpp"
#include "lcm/restore.hpp"
#include "lcm/rng.hpp"
#include "lcm/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

// Command options resolved as flag > config file > default. Every option
// is also a config key (dashes become underscores).
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON config file; keys mirror the long flags");
  }

  template <typename T>
  void add(const std::string& key, T fallback, const std::string& help, bool hashed = true) {
    defaults_[key] = fallback;
    auto holder = std::make_shared<T>(fallback);
    app_->add_option(flag(key), *holder, help);
    values_[key] = [holder] { return json(*holder); };
    if (!hashed) unhashed_.push_back(key);
  }

  void add_flag(const std::string& key, const std::string& help) {
    defaults_[key] = false;
    auto holder = std::make_shared<bool>(false);
    app_->add_flag(flag(key), *holder, help);
    values_[key] = [holder] { return json(*holder); };
  }

  // Call after parsing.
  const json& resolve() {
    effective_ = defaults_;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw lcm::IoError("cannot read config " + config_path_);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::exception& e) {
        throw lcm::FormatError("config " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw lcm::FormatError("config " + config_path_ + " must hold a JSON object");
      for (auto it = file.begin(); it != file.end(); ++it) {
        if (!defaults_.contains(it.key())) {
          throw lcm::ContractError("unknown config key '" + it.key() + "' in " + config_path_);
        }
        const json& d = defaults_[it.key()];
        const bool ok = (d.is_number() && it->is_number()) || (d.is_string() && it->is_string()) ||
                        (d.is_boolean() && it->is_boolean());
        if (!ok) throw lcm::ContractError("config key '" + it.key() + "' has the wrong type");
        effective_[it.key()] = *it;
      }
    }
    for (const auto& [key, value] : values_) {
      if (app_->count(flag(key)) > 0) effective_[key] = value();
    }
    return effective_;
  }

  const json& effective() const { return effective_; }

  // Hash of everything that determines the output bytes.
  std::string config_hash() const {
    json h = effective_;
    for (const auto& k : unhashed_) h.erase(k);
    return lcm::fnv1a_hex(h.dump());
  }

  template <typename T>
  T get(const std::string& key) const {
    return effective_.at(key).get<T>();
  }

 private:
  static std::string flag(const std::string& key) {
    std::string f = "--" + key;
    std::replace(f.begin(), f.end(), '_', '-');
    return f;
  }

  CLI::App* app_;
  std::string config_path_;
  json defaults_ = json::object();
  json effective_;
  std::map<std::string, std::function<json()>> values_;
  std::vector<std::string> unhashed_;
};

fs::path prepare_output(const Options& opt, const std::string& command) {
  const fs::path dir = fs::path(opt.get<std::string>("out")) / (command + "-" + opt.config_hash().substr(0, 12));
  fs::create_directories(dir);
  std::ofstream(dir / "effective-config.json") << opt.effective().dump(2) << '\n';
  return dir;
}

lcm::MapShape parse_shape(const std::string& text) {
  int c = 0, h = 0, w = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d,%d,%d%c", &c, &h, &w, &tail) != 3 || c < 1 || h < 1 || w < 1 ||
      (c != 1 && c != 3)) {
    throw lcm::ContractError("shape '" + text + "' must be C,H,W with C in {1,3}");
  }
  return {c, h, w};
}

// center:N, center:HxW, half:SIDE, random:F, full
lcm::Mask parse_mask(const std::string& spec, int h, int w, std::uint64_t seed) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "full") return lcm::full_mask(h, w);
  if (kind == "center") {
    int hh = 0, hw = 0;
    char tail = 0;
    if (std::sscanf(arg.c_str(), "%dx%d%c", &hh, &hw, &tail) == 2) return lcm::center_mask(h, w, hh, hw);
    if (std::sscanf(arg.c_str(), "%d%c", &hh, &tail) == 1) return lcm::center_mask(h, w, hh, hh);
  } else if (kind == "half") {
    return lcm::half_mask(h, w, lcm::parse_side(arg.empty() ? "right" : arg));
  } else if (kind == "random") {
    char* end = nullptr;
    const double f = std::strtod(arg.c_str(), &end);
    if (!arg.empty() && end && *end == '\0') return lcm::random_mask(h, w, f, seed);
  }
  throw lcm::ContractError("bad mask spec '" + spec + "' (center:N|center:HxW|half:SIDE|random:F|full)");
}

lcm::DegradationSpec build_spec(const Options& opt, int h, int w, std::uint64_t seed) {
  const lcm::TaskKind kind = lcm::parse_task(opt.get<std::string>("task"));
  const double lambda = opt.get<double>("lambda");
  switch (kind) {
    case lcm::TaskKind::kInpaint:
      return lcm::DegradationSpec::inpaint(parse_mask(opt.get<std::string>("mask"), h, w, seed), lambda);
    case lcm::TaskKind::kSuperres:
      return lcm::DegradationSpec::superres(opt.get<int>("factor"), lambda);
    case lcm::TaskKind::kColorize:
      return lcm::DegradationSpec::colorize(lambda);
  }
  throw lcm::ContractError("unreachable task");
}

std::vector<fs::path> list_pngs(const fs::path& p) {
  std::vector<fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p)) {
      if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
  } else if (fs::exists(p)) {
    out.push_back(p);
  } else {
    throw lcm::IoError("no such file or directory: " + p.string());
  }
  return out;
}

int worker_limit(bool deterministic) {
  if (deterministic) return 1;
  int n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  if (const char* env = std::getenv("LCMKIT_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, cap);
  }
  return n;
}

// Runs jobs[0..n) on up to `workers` threads; the first exception is rethrown.
void run_pool(std::size_t n, int workers, const std::function<void(std::size_t)>& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  auto loop = [&] {
    for (std::size_t i; (i = next++) < n;) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::min<int>(workers, static_cast<int>(n)); ++t) pool.emplace_back(loop);
  loop();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

lcm::Dataset dataset_from(const Options& opt) {
  const int synthetic = opt.get<int>("synthetic");
  if (synthetic > 0) {
    const int size = opt.get<int>("synthetic_size");
    return lcm::make_toy_dataset(synthetic, size, opt.get<std::uint64_t>("synthetic_seed"));
  }
  const std::string manifest = opt.get<std::string>("manifest");
  if (manifest.empty()) throw lcm::ContractError("need --manifest or --synthetic N");
  const fs::path path(manifest);
  return lcm::load_dataset(lcm::DatasetManifest::load(path));
}

std::string dataset_hash(const Options& opt, const lcm::Dataset& data) {
  if (opt.get<int>("synthetic") > 0) {
    lcm::DatasetManifest m;
    for (std::size_t i = 0; i < data.size(); ++i) m.entries.push_back({data.ids[i], data.ids[i] + ".png", data.shape});
    return m.hash();
  }
  return lcm::DatasetManifest::load(opt.get<std::string>("manifest")).hash();
}

void add_dataset_options(Options& opt) {
  opt.add<std::string>("manifest", "", "dataset manifest JSON");
  opt.add<int>("synthetic", 0, "use N procedural toy images instead of a manifest");
  opt.add<int>("synthetic_size", 32, "side of the procedural images");
  opt.add<std::uint64_t>("synthetic_seed", 7, "seed of the procedural images");
}

void add_train_options(Options& opt) {
  opt.add<std::string>("preset", "toy32", "architecture preset (toy16|toy32|toy64)");
  opt.add<std::string>("variant", "lcm", "model variant (lcm|glo_map|glo_vector)");
  opt.add<int>("vector_dim", 0, "latent length for glo_vector");
  opt.add<int>("steps", 2000, "optimizer steps (0: epochs only)");
  opt.add<int>("epochs", 0, "epochs (0: steps only)");
  opt.add<int>("batch_size", 16, "minibatch size");
  opt.add<double>("lr_latent", 1.0, "learning rate of the latent ConvNets");
  opt.add<double>("lr_generator", 1.0, "learning rate of the generator");
  opt.add<double>("lr_glo", 10.0, "learning rate of GLO latents");
  opt.add<double>("box", 0.01, "latent parameter bound");
  opt.add<int>("pyramid_levels", 0, "Laplacian levels (0: default for the image size)");
  opt.add<std::uint64_t>("seed", 0, "seed for initialization and shuffling");
}

lcm::TrainConfig train_config(const Options& opt) {
  lcm::TrainConfig c;
  c.preset = opt.get<std::string>("preset");
  c.variant = lcm::parse_variant(opt.get<std::string>("variant"));
  c.vector_dim = opt.get<int>("vector_dim");
  c.steps = opt.get<int>("steps");
  c.epochs = opt.get<int>("epochs");
  c.batch_size = opt.get<int>("batch_size");
  c.lr_latent = opt.get<double>("lr_latent");
  c.lr_generator = opt.get<double>("lr_generator");
  c.lr_glo = opt.get<double>("lr_glo");
  c.box = opt.get<double>("box");
  c.pyramid_levels = opt.get<int>("pyramid_levels");
  c.seed = opt.get<std::uint64_t>("seed");
  return c;
}

void write_trace(const std::vector<double>& trace, const fs::path& path) {
  std::ofstream out(path);
  out << "step,energy\n";
  char buf[64];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, trace[i]);
    out << buf;
  }
}

// ---- commands -------------------------------------------------------------

int cmd_synth(Options& opt) {
  const int count = opt.get<int>("count");
  const int size = opt.get<int>("size");
  const fs::path dir = opt.get<std::string>("out");
  const auto data = lcm::make_toy_dataset(count, size, opt.get<std::uint64_t>("seed"));
  const auto manifest = lcm::write_dataset(data, dir);
  manifest.save(dir / "manifest.json");
  std::cout << "wrote " << count << " images and " << (dir / "manifest.json").string() << '\n';
  return kExitOk;
}

int cmd_prepare_data(Options& opt) {
  const fs::path src = opt.get<std::string>("src");
  const fs::path out = opt.get<std::string>("manifest_out");
  const auto scan = lcm::scan_directory(src, parse_shape(opt.get<std::string>("shape")));
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  scan.manifest.save(out);
  const auto data = lcm::load_dataset(lcm::DatasetManifest::load(out));
  std::cout << "manifest " << out.string() << ": " << data.size() << " images, " << scan.skipped << " skipped\n";
  if (scan.skipped > 0) std::cerr << "warning: skipped " << scan.skipped << " non-image or undecodable files\n";
  return kExitOk;
}

int cmd_train(Options& opt) {
  const lcm::Dataset data = dataset_from(opt);
  const lcm::TrainConfig cfg = train_config(opt);
  const fs::path dir = prepare_output(opt, "train");
  const std::string hash = dataset_hash(opt, data);
  const std::string config_text = opt.effective().dump();
  const int every = opt.get<int>("checkpoint_every");

  lcm::TrainState state;
  const std::string resume = opt.get<std::string>("resume");
  if (!resume.empty()) {
    const auto ckpt = lcm::load_checkpoint(resume);
    if (ckpt.manifest_hash != hash) throw lcm::ContractError("checkpoint was trained on a different dataset");
    if (ckpt.ids != data.ids) throw lcm::ContractError("checkpoint ids differ from the dataset ids");
    state = lcm::from_checkpoint(ckpt);
  } else {
    state = lcm::init_train_state(data, cfg);
  }
  const double initial = lcm::population_loss(state, data, cfg);

  lcm::TrainHooks hooks;
  hooks.on_epoch = [&](const lcm::TrainState& s) {
    if (every > 0 && s.epoch % every == 0) {
      const fs::path p = dir / ("checkpoint-epoch" + std::to_string(s.epoch) + ".lcmk");
      lcm::save_checkpoint(lcm::to_checkpoint(s, data.ids, hash, config_text), p);
      hooks.last_checkpoint = p.string();
    }
  };
  lcm::train_more(state, data, cfg, hooks);
  const double final_loss = lcm::eval_loss_train(state, data, cfg);
  lcm::save_checkpoint(lcm::to_checkpoint(state, data.ids, hash, config_text), dir / "checkpoint.lcmk");
  std::ofstream csv(dir / "loss.csv");
  lcm::write_loss_csv(state, csv);
  std::printf("%s: %d steps, loss %.6g -> %.6g (eval mode)\n", dir.string().c_str(), state.step, initial, final_loss);
  return kExitOk;
}

int cmd_restore(Options& opt) {
  const auto ckpt = lcm::load_checkpoint(opt.get<std::string>("checkpoint"));
  const auto inputs = list_pngs(opt.get<std::string>("input"));
  const std::string mode_text = opt.get<std::string>("mode");
  lcm::RestoreConfig base;
  base.mode = !mode_text.empty() ? lcm::parse_mode(mode_text)
                                 : (ckpt.variant == lcm::ModelVariant::kLcm ? lcm::RestoreMode::kManifold
                                                                             : lcm::RestoreMode::kGlo);
  if ((base.mode == lcm::RestoreMode::kGlo) != (ckpt.variant != lcm::ModelVariant::kLcm)) {
    throw lcm::ContractError("mode '" + lcm::mode_name(base.mode) + "' does not fit a " +
                             lcm::variant_name(ckpt.variant) + " checkpoint");
  }
  base.steps = opt.get<int>("steps");
  if (opt.get<double>("lr") > 0) base.lr = opt.get<double>("lr");
  base.latent_penalty = opt.get<double>("lambda");
  base.box = ckpt.box;
  const std::uint64_t seed = opt.get<std::uint64_t>("seed");
  const bool observed = opt.get<bool>("observed");
  const lcm::MapShape image = ckpt.generator.arch.output;
  // validate flags before any work
  const lcm::DegradationSpec probe = build_spec(opt, image.height, image.width, seed);
  probe.validate();
  const fs::path dir = prepare_output(opt, "restore");
  for (const char* sub : {"restored", "observed", "masks", "traces"}) fs::create_directories(dir / sub);

  lcm::GloLatent<lcm::Real> templ;
  if (base.mode == lcm::RestoreMode::kGlo) {
    templ = lcm::init_glo_latent<lcm::Real>(
        ckpt.variant == lcm::ModelVariant::kGloVector ? lcm::GloKind::kVector : lcm::GloKind::kMap,
        ckpt.generator.arch.input, ckpt.vector_dim, 0);
  }

  std::mutex log_mu;
  run_pool(inputs.size(), worker_limit(opt.get<bool>("deterministic")), [&](std::size_t i) {
    const fs::path& in = inputs[i];
    const std::string id = in.stem().string();
    const std::uint64_t job_seed = lcm::Rng::mix(seed, std::hash<std::string>{}(id));
    const lcm::DegradationSpec spec = build_spec(opt, image.height, image.width, seed);
    lcm::Tensor<lcm::Real> y;
    if (observed) {
      const lcm::Shape s = spec.observed_shape(image.batch(1));
      y = lcm::load_image(in, lcm::MapShape{s[1], s[2], s[3]});
    } else {
      y = lcm::degrade(lcm::load_image(in, image), spec);
      lcm::save_image(y, dir / "observed" / (id + ".png"));
    }
    lcm::RestoreConfig cfg = base;
    cfg.seed = job_seed;
    lcm::RestorationResult r;
    switch (cfg.mode) {
      case lcm::RestoreMode::kManifold:
        r = lcm::restore_manifold(ckpt.generator, ckpt.latent_arch, ckpt.noise, y, spec, cfg);
        break;
      case lcm::RestoreMode::kZSpace:
        r = lcm::restore_zspace(ckpt.generator, ckpt.latent_arch, ckpt.noise, y, spec, cfg);
        break;
      case lcm::RestoreMode::kGlo:
        r = lcm::restore_glo(ckpt.generator, templ, y, spec, cfg);
        break;
    }
    lcm::save_image(r.image, dir / "restored" / (id + ".png"));
    write_trace(r.energy_trace, dir / "traces" / (id + ".csv"));
    if (spec.kind == lcm::TaskKind::kInpaint) lcm::save_mask(spec.mask, dir / "masks" / (id + ".png"));
    std::lock_guard<std::mutex> lock(log_mu);
    std::printf("%s: best energy %.6g at step %d, known mse %.6g, %.1fs\n", id.c_str(), r.best_energy, r.best_step,
                r.known_mse, r.seconds);
  });
  std::printf("outputs in %s\n", dir.string().c_str());
  return kExitOk;
}

int cmd_eval(Options& opt) {
  const auto restored = list_pngs(opt.get<std::string>("restored"));
  const auto truth = list_pngs(opt.get<std::string>("truth"));
  if (restored.size() != truth.size()) {
    throw lcm::ContractError("restored has " + std::to_string(restored.size()) + " images, truth has " +
                             std::to_string(truth.size()));
  }
  const std::string masks = opt.get<std::string>("masks");
  std::vector<lcm::EvalItem> items;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const std::string id = truth[i].stem().string();
    if (restored[i].stem().string() != id) {
      throw lcm::ContractError("unpaired files " + restored[i].filename().string() + " and " +
                               truth[i].filename().string());
    }
    const lcm::Image8 t8 = lcm::read_png(truth[i]);
    const lcm::MapShape shape{t8.channels, t8.height, t8.width};
    lcm::EvalItem item;
    item.id = id;
    item.truth = lcm::image_to_tensor(t8);
    item.restored = lcm::load_image(restored[i], shape);
    item.spec = build_spec(opt, shape.height, shape.width, opt.get<std::uint64_t>("seed"));
    if (item.spec.kind == lcm::TaskKind::kInpaint && !masks.empty()) {
      item.spec.mask = lcm::load_mask(fs::path(masks) / (id + ".png"));
    }
    item.mode = opt.get<std::string>("mode");
    items.push_back(std::move(item));
  }
  const auto report = lcm::evaluate(items);
  const std::string out = opt.get<std::string>("out");
  if (out.empty() || out == "-") {
    report.write_csv(std::cout);
  } else {
    std::ofstream f(out);
    report.write_csv(f);
    std::cout << "wrote " << out << '\n';
  }
  return kExitOk;
}

int cmd_gradcheck(Options& opt) {
  lcm::GradCheckOptions o;
  o.tolerance = opt.get<double>("tolerance");
  o.instances = opt.get<int>("instances");
  o.seed = opt.get<std::uint64_t>("seed");
  std::vector<lcm::GradCase> cases;
  if (opt.get<bool>("inject_bug")) {
    cases.push_back(lcm::injected_bug_case());
  } else {
    cases = lcm::primitive_cases();
  }
  auto report = lcm::run_gradcheck(cases, o);
  const std::string preset = opt.get<std::string>("preset");
  if (!preset.empty() && !opt.get<bool>("inject_bug")) {
    lcm::GradCheckOptions p = o;
    p.entries_per_block = opt.get<int>("entries");
    p.instances = std::max(1, o.instances / 10);
    const auto extra = lcm::run_gradcheck(lcm::preset_cases(preset), p);
    report.cases.insert(report.cases.end(), extra.cases.begin(), extra.cases.end());
    report.seconds += extra.seconds;
  }
  report.print(std::cout);
  return report.passed() ? kExitOk : kExitValidation;
}

int cmd_compare(Options& opt) {
  const lcm::Dataset data = dataset_from(opt);
  lcm::CompareConfig cfg;
  cfg.train = train_config(opt);
  cfg.restore.steps = opt.get<int>("restore_steps");
  cfg.restore.seed = cfg.train.seed;
  cfg.restore_images = opt.get<int>("restore_images");
  cfg.hole = opt.get<int>("hole");
  cfg.vector_dims.clear();
  std::stringstream dims(opt.get<std::string>("vector_dims"));
  for (std::string tok; std::getline(dims, tok, ',');) cfg.vector_dims.push_back(std::stoi(tok));
  const fs::path dir = prepare_output(opt, "compare");
  const auto report = lcm::run_comparison(data, cfg);
  std::ofstream f(dir / "compare.csv");
  report.write_table(f);
  report.write_table(std::cout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent convolutional models: training, restoration and evaluation"};
  app.require_subcommand(1);
  std::vector<std::pair<CLI::App*, std::function<int()>>> commands;
  std::vector<std::unique_ptr<Options>> holders;
  auto command = [&](const char* name, const char* help, const std::function<void(Options&)>& setup,
                     int (*run)(Options&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    holders.push_back(std::make_unique<Options>(sub));
    Options* opt = holders.back().get();
    setup(*opt);
    commands.emplace_back(sub, [opt, run] {
      opt->resolve();
      return run(*opt);
    });
  };

  command("synth", "write the procedural toy dataset as PNGs plus a manifest", [](Options& o) {
    o.add<int>("count", 64, "number of images");
    o.add<int>("size", 32, "image side");
    o.add<std::uint64_t>("seed", 7, "dataset seed");
    o.add<std::string>("out", "toy-data", "output directory", false);
  }, cmd_synth);
  command("prepare-data", "scan a directory of PNGs and write a manifest", [](Options& o) {
    o.add<std::string>("src", "", "image directory");
    o.add<std::string>("manifest_out", "manifest.json", "manifest path");
    o.add<std::string>("shape", "3,32,32", "target C,H,W (anisotropic resize)");
  }, cmd_prepare_data);
  command("train", "train an LCM or GLO model", [](Options& o) {
    add_dataset_options(o);
    add_train_options(o);
    o.add<int>("checkpoint_every", 0, "epochs between periodic checkpoints (0: final only)");
    o.add<std::string>("resume", "", "continue from a checkpoint");
    o.add_flag("deterministic", "serialize all work");
    o.add<std::string>("out", "runs", "output root", false);
  }, cmd_train);
  command("restore", "restore degraded images with a trained model", [](Options& o) {
    o.add<std::string>("checkpoint", "", "trained model");
    o.add<std::string>("input", "", "PNG file or directory");
    o.add_flag("observed", "inputs are already degraded observations");
    o.add<std::string>("task", "inpaint", "inpaint|sr|color");
    o.add<std::string>("mask", "center:12", "center:N|center:HxW|half:SIDE|random:F|full");
    o.add<int>("factor", 4, "superresolution factor (2|4|8)");
    o.add<std::string>("mode", "", "manifold|zspace|glo (default from the checkpoint)");
    o.add<double>("lambda", 0.0, "latent penalty weight");
    o.add<int>("steps", 2000, "optimizer steps");
    o.add<double>("lr", 0.0, "learning rate (0: 1.0, or 10.0 for GLO)");
    o.add<std::uint64_t>("seed", 0, "seed for latent init and random masks");
    o.add_flag("deterministic", "process images one at a time");
    o.add<std::string>("out", "runs", "output root", false);
  }, cmd_restore);
  command("eval", "score restored images against ground truth", [](Options& o) {
    o.add<std::string>("restored", "", "directory of restored PNGs");
    o.add<std::string>("truth", "", "directory of ground-truth PNGs");
    o.add<std::string>("masks", "", "directory of <id>.png masks (inpainting)");
    o.add<std::string>("task", "inpaint", "inpaint|sr|color");
    o.add<std::string>("mask", "center:12", "mask spec when --masks is not given");
    o.add<int>("factor", 4, "superresolution factor");
    o.add<double>("lambda", 0.0, "unused; accepted for config reuse");
    o.add<std::string>("mode", "", "label for the mode column");
    o.add<std::uint64_t>("seed", 0, "seed for random masks");
    o.add<std::string>("out", "-", "CSV path (- for stdout)", false);
  }, cmd_eval);
  command("gradcheck", "finite-difference check of every differentiable op", [](Options& o) {
    o.add<std::string>("preset", "toy16", "also check this preset's full model (empty to skip)");
    o.add<double>("tolerance", 1e-5, "maximum relative error (exclusive)");
    o.add<int>("instances", 20, "random instances per op");
    o.add<int>("entries", 3, "sampled entries per parameter block for presets");
    o.add<std::uint64_t>("seed", 0, "seed");
    o.add_flag("inject_bug", "check only a deliberately wrong op (must fail)");
  }, cmd_gradcheck);
  command("compare", "LCM vs GLO-map vs GLO-vector and manifold vs z-space", [](Options& o) {
    add_dataset_options(o);
    add_train_options(o);
    o.add<std::string>("vector_dims", "64,128,256", "GLO vector lengths");
    o.add<int>("restore_images", 10, "images for the restoration comparison");
    o.add<int>("restore_steps", 500, "restoration steps per image and mode");
    o.add<int>("hole", 0, "center hole side (0: 3/8 of the image)");
    o.add_flag("deterministic", "serialize all work");
    o.add<std::string>("out", "runs", "output root", false);
  }, cmd_compare);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }
  try {
    for (auto& [sub, run] : commands) {
      if (sub->parsed()) return run();
    }
  } catch (const lcm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const lcm::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}
