#include "lcm/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace lcm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::kLcm: return "lcm";
    case ModelVariant::kGloMap: return "glo_map";
    case ModelVariant::kGloVector: return "glo_vector";
  }
  return "unknown";
}

ModelVariant parse_variant(const std::string& name) {
  if (name == "lcm") return ModelVariant::kLcm;
  if (name == "glo_map") return ModelVariant::kGloMap;
  if (name == "glo_vector") return ModelVariant::kGloVector;
  throw ContractError("unknown model variant '" + name + "' (expected lcm|glo_map|glo_vector)");
}

namespace {

json map_to_json(const MapShape& m) { return {m.channels, m.height, m.width}; }

MapShape map_from_json(const json& j) {
  auto v = j.get<std::vector<int>>();
  if (v.size() != 3) throw FormatError("map shape must have 3 entries");
  return MapShape{v[0], v[1], v[2]};
}

json arch_to_json(const ArchSpec& a) {
  json layers = json::array();
  for (const auto& l : a.layers) {
    layers.push_back({{"kind", l.kind == LayerKind::kConv ? "conv" : "upconv"},
                      {"in", l.in_channels},
                      {"out", l.out_channels},
                      {"kernel", l.kernel},
                      {"stride", l.stride},
                      {"padding", l.padding},
                      {"scale", l.scale},
                      {"norm", l.norm},
                      {"activation", l.activation},
                      {"skip", l.skip_source}});
  }
  return {{"input", map_to_json(a.input)},
          {"output", map_to_json(a.output)},
          {"output_activation", a.output_activation == OutputActivation::kSigmoid ? "sigmoid" : "none"},
          {"slope", a.slope},
          {"layers", layers}};
}

ArchSpec arch_from_json(const json& j) {
  ArchSpec a;
  a.input = map_from_json(j.at("input"));
  a.output = map_from_json(j.at("output"));
  a.output_activation = j.at("output_activation").get<std::string>() == "sigmoid" ? OutputActivation::kSigmoid
                                                                                 : OutputActivation::kNone;
  a.slope = j.at("slope").get<double>();
  for (const auto& l : j.at("layers")) {
    LayerSpec s;
    s.kind = l.at("kind").get<std::string>() == "conv" ? LayerKind::kConv : LayerKind::kUpConv;
    s.in_channels = l.at("in").get<int>();
    s.out_channels = l.at("out").get<int>();
    s.kernel = l.at("kernel").get<int>();
    s.stride = l.at("stride").get<int>();
    s.padding = l.at("padding").get<int>();
    s.scale = l.at("scale").get<int>();
    s.norm = l.at("norm").get<bool>();
    s.activation = l.at("activation").get<bool>();
    s.skip_source = l.at("skip").get<int>();
    a.layers.push_back(s);
  }
  return a;
}

// Named views of every persisted tensor in declaration order.
struct BlobRef {
  std::string name;
  Tensor<Real>* tensor;
};

std::vector<BlobRef> blob_refs(Checkpoint& c) {
  std::vector<BlobRef> refs;
  if (c.variant == ModelVariant::kLcm) refs.push_back({"noise", &c.noise});
  for (ParamBlock<Real>* p : c.generator.params()) refs.push_back({p->name, &p->value});
  for (std::size_t i = 0; i < c.generator.layers.size(); ++i) {
    auto& l = c.generator.layers[i];
    if (!l.gain) continue;
    refs.push_back({"g" + std::to_string(i) + ".running_mean", &l.stats.mean});
    refs.push_back({"g" + std::to_string(i) + ".running_var", &l.stats.var});
  }
  for (std::size_t k = 0; k < c.ids.size(); ++k) {
    if (c.variant == ModelVariant::kLcm) {
      for (auto& p : c.codecs[k].phi) refs.push_back({"phi/" + c.ids[k] + "/" + p.name, &p.value});
    } else {
      refs.push_back({"z/" + c.ids[k], &c.glo[k].value.value});
    }
  }
  return refs;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

void check_consistency(const Checkpoint& c) {
  if (c.variant == ModelVariant::kLcm) {
    if (c.codecs.size() != c.ids.size()) throw ContractError("checkpoint: latent count differs from id count");
  } else if (c.glo.size() != c.ids.size()) {
    throw ContractError("checkpoint: GLO latent count differs from id count");
  }
}

}  // namespace

std::size_t checkpoint_scalar_count(const Checkpoint& ckpt) {
  std::size_t n = 0;
  for (const auto& b : blob_refs(const_cast<Checkpoint&>(ckpt))) n += b.tensor->size();
  return n;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  check_consistency(ckpt);
  auto& c = const_cast<Checkpoint&>(ckpt);
  const auto refs = blob_refs(c);
  json blobs = json::array();
  for (const auto& b : refs) blobs.push_back({{"name", b.name}, {"shape", b.tensor->shape().dims()}});
  json header{{"format", "lcmkit-checkpoint"},
              {"variant", variant_name(c.variant)},
              {"preset", c.preset},
              {"vector_dim", c.vector_dim},
              {"box", c.box},
              {"generator_arch", arch_to_json(c.generator.arch)},
              {"manifest_hash", c.manifest_hash},
              {"epoch", c.epoch},
              {"ids", c.ids},
              {"blobs", blobs}};
  if (c.variant == ModelVariant::kLcm) header["latent_arch"] = arch_to_json(c.latent_arch);
  try {
    header["config"] = json::parse(c.config_json);
  } catch (const json::exception&) {
    throw ContractError("checkpoint config echo is not valid JSON");
  }
  const std::string text = header.dump();

  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& b : refs) {
    for (Real v : b.tensor->data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw TruncatedError("checkpoint shorter than its fixed preamble");
  if (!std::equal(std::begin(kCheckpointMagic), std::end(kCheckpointMagic), bytes.begin())) {
    throw BadMagicError("not an lcmkit checkpoint (bad magic)");
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kCheckpointVersion) {
    throw VersionMismatchError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                               std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t header_len = get_u32(bytes, 8);
  if (bytes.size() < 12 + header_len) throw TruncatedError("checkpoint header is truncated");
  json header;
  try {
    header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header does not parse: ") + e.what());
  }

  Checkpoint c;
  std::vector<std::pair<std::string, std::vector<int>>> listed;
  try {
    if (header.at("format").get<std::string>() != "lcmkit-checkpoint") throw FormatError("unexpected header format tag");
    c.variant = parse_variant(header.at("variant").get<std::string>());
    c.preset = header.at("preset").get<std::string>();
    c.vector_dim = header.at("vector_dim").get<int>();
    c.box = header.at("box").get<double>();
    c.manifest_hash = header.at("manifest_hash").get<std::string>();
    c.epoch = header.at("epoch").get<int>();
    c.ids = header.at("ids").get<std::vector<std::string>>();
    c.config_json = header.at("config").dump();
    c.generator = init_generator<Real>(arch_from_json(header.at("generator_arch")), 0,
                                       c.variant == ModelVariant::kGloVector ? c.vector_dim : 0);
    if (c.variant == ModelVariant::kLcm) {
      c.latent_arch = arch_from_json(header.at("latent_arch"));
      c.noise = Tensor<Real>(c.latent_arch.input.batch(1));
      for (std::size_t k = 0; k < c.ids.size(); ++k) c.codecs.push_back(init_latent_codec<Real>(c.latent_arch, 0, static_cast<Real>(c.box)));
    } else {
      const GloKind kind = c.variant == ModelVariant::kGloMap ? GloKind::kMap : GloKind::kVector;
      for (std::size_t k = 0; k < c.ids.size(); ++k) {
        c.glo.push_back(init_glo_latent<Real>(kind, c.generator.arch.input, c.vector_dim, 0));
      }
    }
    for (const auto& b : header.at("blobs")) {
      listed.emplace_back(b.at("name").get<std::string>(), b.at("shape").get<std::vector<int>>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header is malformed: ") + e.what());
  } catch (const ContractError& e) {
    throw FormatError(std::string("checkpoint header is inconsistent: ") + e.what());
  } catch (const ShapeError& e) {
    throw FormatError(std::string("checkpoint header is inconsistent: ") + e.what());
  }

  const auto refs = blob_refs(c);
  if (refs.size() != listed.size()) throw FormatError("checkpoint blob table does not match its architecture");
  std::size_t at = 12 + header_len;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (refs[i].name != listed[i].first || refs[i].tensor->shape().dims() != listed[i].second) {
      throw FormatError("checkpoint blob '" + listed[i].first + "' does not match expected '" + refs[i].name + "'");
    }
    Tensor<Real>& t = *refs[i].tensor;
    if (bytes.size() < at + 4 * t.size()) throw TruncatedError("checkpoint blob '" + refs[i].name + "' is truncated");
    for (std::size_t k = 0; k < t.size(); ++k, at += 4) t[k] = static_cast<Real>(std::bit_cast<float>(get_u32(bytes, at)));
  }
  if (at != bytes.size()) throw FormatError("checkpoint has " + std::to_string(bytes.size() - at) + " trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  const auto bytes = encode_checkpoint(ckpt);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace lcm
