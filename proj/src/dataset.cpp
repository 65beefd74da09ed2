#include "lcm/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include "json.hpp"
#include <sstream>

#include "lcm/imageio.hpp"
#include "lcm/rng.hpp"

namespace lcm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void DatasetManifest::validate() const {
  std::vector<std::string> ids;
  for (const auto& e : entries) {
    if (e.id.empty()) throw ContractError("manifest entry with empty id");
    ids.push_back(e.id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ContractError("manifest ids are not unique");
}

std::string DatasetManifest::hash() const {
  std::ostringstream os;
  for (const auto& e : entries) os << e.id << '\n' << e.path << '\n' << e.shape.str() << '\n';
  return fnv1a_hex(os.str());
}

std::string DatasetManifest::to_json_text() const {
  json j;
  j["version"] = kVersion;
  j["root"] = root;
  j["value_range"] = {0.0, 1.0};
  j["resize"] = "anisotropic";
  j["entries"] = json::array();
  for (const auto& e : entries) {
    j["entries"].push_back({{"id", e.id}, {"path", e.path}, {"shape", {e.shape.channels, e.shape.height, e.shape.width}}});
  }
  return j.dump(2) + "\n";
}

void DatasetManifest::save(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << to_json_text();
}

DatasetManifest DatasetManifest::load(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read manifest '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path.string() + "' is not valid JSON: " + e.what());
  }
  DatasetManifest m;
  try {
    if (j.at("version").get<int>() != kVersion) throw VersionMismatchError("unsupported manifest version");
    m.root = j.at("root").get<std::string>();
    for (const auto& e : j.at("entries")) {
      auto s = e.at("shape").get<std::vector<int>>();
      if (s.size() != 3) throw FormatError("manifest shape must be [C, H, W]");
      m.entries.push_back({e.at("id").get<std::string>(), e.at("path").get<std::string>(), MapShape{s[0], s[1], s[2]}});
    }
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest '" + path.string() + "': " + e.what());
  }
  fs::path root(m.root);
  if (root.is_relative()) m.root = (path.parent_path() / root).lexically_normal().string();
  m.validate();
  return m;
}

fs::path DatasetManifest::resolve(const ManifestEntry& e, const fs::path& manifest_dir) const {
  fs::path root_path(root);
  if (root_path.is_relative() && !manifest_dir.empty()) root_path = manifest_dir / root_path;
  return root_path / e.path;
}

Tensor<Real> Dataset::batch(const std::vector<int>& indices) const {
  if (indices.empty()) throw ContractError("empty batch");
  Tensor<Real> out(Shape{static_cast<int>(indices.size()), shape.channels, shape.height, shape.width});
  const std::size_t per = shape.numel();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    const auto& img = images.at(indices[k]);
    std::copy(img.data().begin(), img.data().end(), out.data().begin() + k * per);
  }
  return out;
}

Tensor<Real> Dataset::mean_image() const {
  if (images.empty()) throw ContractError("mean of an empty dataset");
  Tensor<Real> m(images.front().shape());
  std::vector<double> acc(m.size(), 0.0);
  for (const auto& img : images)
    for (std::size_t i = 0; i < img.size(); ++i) acc[i] += img[i];
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = static_cast<Real>(acc[i] / images.size());
  return m;
}

Dataset Dataset::subset(int begin, int end) const {
  Dataset d;
  d.shape = shape;
  for (int i = begin; i < end; ++i) {
    d.ids.push_back(ids.at(i));
    d.images.push_back(images.at(i));
  }
  return d;
}

Dataset load_dataset(const DatasetManifest& manifest, const fs::path& manifest_dir) {
  manifest.validate();
  if (manifest.entries.empty()) throw ContractError("manifest has no entries");
  Dataset d;
  d.shape = manifest.entries.front().shape;
  for (const auto& e : manifest.entries) {
    if (!(e.shape == d.shape)) throw ShapeError("manifest mixes shapes " + d.shape.str() + " and " + e.shape.str());
    d.ids.push_back(e.id);
    d.images.push_back(load_image(manifest.resolve(e, manifest_dir), e.shape));
  }
  return d;
}

namespace {

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3 - 2 * t);
}

// Coverage of an ellipse with a one-pixel soft edge.
double ellipse(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  const double r = std::sqrt(dx * dx + dy * dy);
  const double px = 1.0 / std::min(rx, ry);
  return 1.0 - smoothstep(1.0 - px, 1.0 + px, r);
}

}  // namespace

Tensor<Real> make_toy_image(int size, std::uint64_t seed, std::uint64_t index) {
  Rng rng(seed, index);
  const double S = size;
  std::array<double, 3> top{}, bottom{}, skin{}, eye{}, mouth{};
  for (int c = 0; c < 3; ++c) {
    top[c] = rng.uniform(0.05, 0.95);
    bottom[c] = rng.uniform(0.05, 0.95);
  }
  for (int c = 0; c < 3; ++c) skin[c] = rng.uniform(0.35, 1.0);
  for (int c = 0; c < 3; ++c) eye[c] = rng.uniform(0.0, 0.3);
  mouth = {rng.uniform(0.4, 0.9), rng.uniform(0.0, 0.3), rng.uniform(0.0, 0.4)};
  const double cx = S / 2 + rng.uniform(-S / 10, S / 10);
  const double cy = S / 2 + rng.uniform(-S / 12, S / 12);
  const double rx = S * rng.uniform(0.24, 0.34);
  const double ry = S * rng.uniform(0.30, 0.40);
  const double eye_dx = rx * rng.uniform(0.3, 0.45);
  const double eye_dy = ry * rng.uniform(0.15, 0.35);
  const double eye_r = S * rng.uniform(0.05, 0.09);
  const double mouth_y = cy + ry * rng.uniform(0.35, 0.55);
  const double mouth_w = rx * rng.uniform(0.3, 0.6);
  const double mouth_h = S * rng.uniform(0.03, 0.07);

  Tensor<Real> t(Shape{1, 3, size, size});
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      const double v = py / S;
      const double face = ellipse(px, py, cx, cy, rx, ry);
      const double eyes = std::max(ellipse(px, py, cx - eye_dx, cy - eye_dy, eye_r, eye_r),
                                   ellipse(px, py, cx + eye_dx, cy - eye_dy, eye_r, eye_r));
      const double bar = ellipse(px, py, cx, mouth_y, mouth_w, mouth_h);
      for (int c = 0; c < 3; ++c) {
        double col = (1 - v) * top[c] + v * bottom[c];
        col = (1 - face) * col + face * skin[c];
        col = (1 - eyes) * col + eyes * eye[c];
        col = (1 - bar) * col + bar * mouth[c];
        t.at(0, c, y, x) = static_cast<Real>(std::clamp(col, 0.0, 1.0));
      }
    }
  return t;
}

Dataset make_toy_dataset(int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 4) throw ContractError("toy dataset needs count >= 1 and size >= 4");
  Dataset d;
  d.shape = MapShape{3, size, size};
  for (int i = 0; i < count; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "toy_%05d", i);
    d.ids.emplace_back(id);
    d.images.push_back(make_toy_image(size, seed, static_cast<std::uint64_t>(i)));
  }
  return d;
}

DatasetManifest write_dataset(const Dataset& data, const fs::path& dir) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.root = ".";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::string file = data.ids[i] + ".png";
    save_image(data.images[i], dir / file);
    m.entries.push_back({data.ids[i], file, data.shape});
  }
  return m;
}

ScanResult scan_directory(const fs::path& dir, const MapShape& shape) {
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  ScanResult r;
  r.manifest.root = fs::absolute(dir).lexically_normal().string();
  for (const auto& f : files) {
    try {
      read_png(f);
    } catch (const Error&) {
      ++r.skipped;
      continue;
    }
    r.manifest.entries.push_back({f.stem().string(), f.filename().string(), shape});
  }
  if (r.manifest.entries.empty()) throw ContractError("no decodable PNG images in '" + dir.string() + "'");
  return r;
}

}  // namespace lcm
