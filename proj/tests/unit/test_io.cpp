#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "lcm/checkpoint.hpp"
#include "lcm/dataset.hpp"
#include "lcm/degrade.hpp"
#include "lcm/error.hpp"
#include "lcm/imageio.hpp"
#include "lcm/rng.hpp"
#include "lcm/train.hpp"

namespace fs = std::filesystem;
using lcm::Shape;
using lcm::Tensor;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("lcmkit-test-" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "-" +
             ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

lcm::Checkpoint small_checkpoint(lcm::ModelVariant variant) {
  const auto data = lcm::make_toy_dataset(3, 16, 1);
  lcm::TrainConfig cfg;
  cfg.preset = "toy16";
  cfg.variant = variant;
  cfg.vector_dim = variant == lcm::ModelVariant::kGloVector ? 8 : 0;
  cfg.steps = 2;
  cfg.batch_size = 2;
  const auto state = lcm::train(data, cfg);
  return lcm::to_checkpoint(state, data.ids, "abc", "{\"steps\":2}");
}

}  // namespace

TEST(Png, RoundTripDriftsAtMostOneQuantum) {
  TempDir dir;
  lcm::Rng rng(41);
  for (int c : {1, 3}) {
    const auto x = rng.uniform_tensor<lcm::Real>(Shape{1, c, 7, 9}, 0, 1);
    const fs::path p = dir.path() / ("img" + std::to_string(c) + ".png");
    lcm::save_image(x, p);
    const auto back = lcm::load_image(p, lcm::MapShape{c, 7, 9});
    ASSERT_EQ(back.shape(), x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) ASSERT_LE(std::fabs(back[i] - x[i]), 1.0 / 255.0 + 1e-7);
    // a second pass is lossless
    lcm::save_image(back, p);
    EXPECT_EQ(lcm::load_image(p, lcm::MapShape{c, 7, 9}), back);
  }
}

TEST(Png, OutOfRangeValuesAreClamped) {
  TempDir dir;
  const Tensor<lcm::Real> x(Shape{1, 1, 1, 2}, std::vector<lcm::Real>{-0.5f, 1.5f});
  lcm::save_image(x, dir.path() / "c.png");
  const auto img = lcm::read_png(dir.path() / "c.png");
  EXPECT_EQ(img.pixels[0], 0);
  EXPECT_EQ(img.pixels[1], 255);
}

TEST(Png, ResizeAndChannelConversion) {
  TempDir dir;
  const Tensor<lcm::Real> gray(Shape{1, 1, 4, 4}, 0.4f);
  lcm::save_image(gray, dir.path() / "g.png");
  const auto rgb = lcm::load_image(dir.path() / "g.png", lcm::MapShape{3, 8, 6});
  EXPECT_EQ(rgb.shape(), (Shape{1, 3, 8, 6}));
  for (auto v : rgb.data()) EXPECT_NEAR(v, 102.0 / 255.0, 1e-6);
}

TEST(Png, ErrorsAreTyped) {
  TempDir dir;
  EXPECT_THROW(lcm::read_png(dir.path() / "missing.png"), lcm::IoError);
  std::ofstream(dir.path() / "junk.png") << "not a png";
  EXPECT_THROW(lcm::read_png(dir.path() / "junk.png"), lcm::IoError);
}

TEST(Mask, RoundTripIsExact) {
  TempDir dir;
  const auto m = lcm::random_mask(12, 10, 0.3, 7);
  lcm::save_mask(m, dir.path() / "m.png");
  EXPECT_EQ(lcm::load_mask(dir.path() / "m.png"), m);
}

TEST(Dataset, ToyImagesAreDeterministicAndInRange) {
  const auto a = lcm::make_toy_dataset(4, 32, 3);
  const auto b = lcm::make_toy_dataset(4, 32, 3);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a.images[2], b.images[2]);
  EXPECT_NE(a.images[0], a.images[1]);
  for (auto v : a.images[0].data()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
  EXPECT_EQ(a.batch({0, 3}).shape(), (Shape{2, 3, 32, 32}));
  EXPECT_EQ(a.subset(1, 3).size(), 2u);
}

TEST(Dataset, WriteScanLoad) {
  TempDir dir;
  const auto data = lcm::make_toy_dataset(5, 16, 2);
  const auto manifest = lcm::write_dataset(data, dir.path() / "imgs");
  manifest.save(dir.path() / "imgs" / "manifest.json");
  std::ofstream(dir.path() / "imgs" / "notes.txt") << "skip me";
  std::ofstream(dir.path() / "imgs" / "broken.png") << "skip me too";

  const auto loaded = lcm::load_dataset(lcm::DatasetManifest::load(dir.path() / "imgs" / "manifest.json"));
  ASSERT_EQ(loaded.size(), 5u);
  EXPECT_EQ(loaded.ids, data.ids);
  for (std::size_t i = 0; i < data.size(); ++i)
    for (std::size_t k = 0; k < data.images[i].size(); ++k)
      ASSERT_LE(std::fabs(loaded.images[i][k] - data.images[i][k]), 1.0 / 255.0 + 1e-7);

  const auto scan = lcm::scan_directory(dir.path() / "imgs", lcm::MapShape{3, 16, 16});
  EXPECT_EQ(scan.manifest.entries.size(), 5u);
  EXPECT_EQ(scan.skipped, 3);  // manifest, text file, broken PNG
  // scanning is idempotent
  EXPECT_EQ(lcm::scan_directory(dir.path() / "imgs", lcm::MapShape{3, 16, 16}).manifest.hash(), scan.manifest.hash());
}

TEST(Dataset, ManifestHashTracksContent) {
  lcm::DatasetManifest m;
  m.root = ".";
  m.entries.push_back({"a", "a.png", {3, 8, 8}});
  m.entries.push_back({"b", "b.png", {3, 8, 8}});
  const auto h = m.hash();
  EXPECT_EQ(h, lcm::DatasetManifest(m).hash());
  std::swap(m.entries[0], m.entries[1]);
  EXPECT_NE(m.hash(), h);
  m.entries[1].id = "b";
  EXPECT_THROW(m.validate(), lcm::ContractError);
}

TEST(Dataset, ManifestErrors) {
  TempDir dir;
  EXPECT_THROW(lcm::DatasetManifest::load(dir.path() / "none.json"), lcm::IoError);
  std::ofstream(dir.path() / "bad.json") << "{";
  EXPECT_THROW(lcm::DatasetManifest::load(dir.path() / "bad.json"), lcm::FormatError);
  std::ofstream(dir.path() / "v.json") << R"({"version": 99, "root": ".", "entries": []})";
  EXPECT_THROW(lcm::DatasetManifest::load(dir.path() / "v.json"), lcm::VersionMismatchError);
}

TEST(Checkpoint, RoundTripReproducesForwardBitExactly) {
  for (auto variant : {lcm::ModelVariant::kLcm, lcm::ModelVariant::kGloMap, lcm::ModelVariant::kGloVector}) {
    TempDir dir;
    const auto ckpt = small_checkpoint(variant);
    lcm::save_checkpoint(ckpt, dir.path() / "c.lcmk");
    const auto back = lcm::load_checkpoint(dir.path() / "c.lcmk");
    EXPECT_EQ(back.ids, ckpt.ids);
    EXPECT_EQ(back.manifest_hash, "abc");
    EXPECT_EQ(back.epoch, ckpt.epoch);
    EXPECT_EQ(lcm::encode_checkpoint(back), lcm::encode_checkpoint(ckpt));

    auto s1 = lcm::from_checkpoint(ckpt);
    auto s2 = lcm::from_checkpoint(back);
    lcm::TrainConfig cfg;
    cfg.preset = "toy16";
    const auto data = lcm::make_toy_dataset(3, 16, 1);
    const double l1 = lcm::eval_loss_train(s1, data, cfg);
    const double l2 = lcm::eval_loss_train(s2, data, cfg);
    EXPECT_EQ(l1, l2) << lcm::variant_name(variant);
    if (variant == lcm::ModelVariant::kLcm) {
      auto c1 = s1.codecs[1], c2 = s2.codecs[1];
      const auto x1 = lcm::eval_generator(s1.generator, lcm::eval_latent(c1, s1.noise));
      const auto x2 = lcm::eval_generator(s2.generator, lcm::eval_latent(c2, s2.noise));
      EXPECT_EQ(x1, x2);
    }
  }
}

TEST(Checkpoint, CorruptionIsDetected) {
  const auto bytes = lcm::encode_checkpoint(small_checkpoint(lcm::ModelVariant::kLcm));
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(lcm::decode_checkpoint(bad_magic), lcm::BadMagicError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(lcm::decode_checkpoint(bad_version), lcm::VersionMismatchError);
  for (std::size_t cut : {std::size_t{5}, std::size_t{20}, bytes.size() - 1}) {
    std::vector<std::uint8_t> shorter(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    EXPECT_THROW(lcm::decode_checkpoint(shorter), lcm::TruncatedError) << cut;
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(lcm::decode_checkpoint(longer), lcm::FormatError);
  EXPECT_THROW(lcm::load_checkpoint("/nonexistent/dir/c.lcmk"), lcm::IoError);
}

TEST(Checkpoint, VariantNames) {
  for (auto v : {lcm::ModelVariant::kLcm, lcm::ModelVariant::kGloMap, lcm::ModelVariant::kGloVector}) {
    EXPECT_EQ(lcm::parse_variant(lcm::variant_name(v)), v);
  }
  EXPECT_THROW(lcm::parse_variant("vae"), lcm::ContractError);
}
