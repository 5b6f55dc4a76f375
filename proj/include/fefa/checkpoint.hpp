#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fefa/config.hpp"
#include "fefa/model.hpp"

namespace fefa {

// Checkpoint file: magic, little-endian u64 manifest length, JSON manifest,
// then a contiguous little-endian float64 payload. Round-trips bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'F', 'E', 'F', 'A',
                                             'C', 'K', 'P', 'T'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int format_version = kCheckpointVersion;
  std::uint64_t config_hash = 0;
  int epochs_trained = 0;
  ModelSpec spec;
};

namespace detail {

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::uint64_t hash_from_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, Model& model,
                            std::uint64_t config_hash, int epochs_trained) {
  nlohmann::ordered_json manifest;
  manifest["format_version"] = kCheckpointVersion;
  manifest["config_hash"] = detail::hash_hex(config_hash);
  manifest["epochs_trained"] = epochs_trained;
  const ModelSpec& spec = model.spec;
  manifest["model"] = {
      {"backbone", to_string(spec.backbone)},
      {"fefa", to_string(spec.fefa)},
      {"scale_mode", to_string(spec.scale_mode)},
      {"fefa_local_window", spec.fefa_local_window},
      {"n_classes", spec.n_classes},
      {"embedding_dim", spec.embedding_dim},
      {"input_bins", spec.input_bins},
      {"seed", spec.seed},
  };

  auto refs = model.params();
  nlohmann::ordered_json tensors = nlohmann::ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& r : refs) {
    nlohmann::ordered_json t;
    t["name"] = r.name;
    t["shape"] = r.shape;
    t["dtype"] = "float64";
    t["offset"] = offset;
    tensors.push_back(t);
    offset += r.size * sizeof(double);
  }
  manifest["tensors"] = tensors;

  const std::string manifest_text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t len = manifest_text.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i)
    lenbuf[i] = static_cast<char>((len >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (const auto& r : refs)
    out.write(reinterpret_cast<const char*>(r.data),
              static_cast<std::streamsize>(r.size * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed: " + path);
}

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw InputError("load_checkpoint: not a checkpoint file: " + path);
  char lenbuf[8];
  in.read(lenbuf, 8);
  if (!in) throw InputError("load_checkpoint: truncated header: " + path);
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i)
    len |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
  std::string manifest_text(len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(len));
  if (!in) throw InputError("load_checkpoint: truncated manifest: " + path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const std::exception& e) {
    throw InputError(std::string("load_checkpoint: bad manifest: ") + e.what());
  }

  LoadedCheckpoint result;
  result.meta.format_version = manifest.at("format_version").get<int>();
  if (result.meta.format_version != kCheckpointVersion)
    throw InputError("load_checkpoint: unsupported format version");
  result.meta.config_hash =
      detail::hash_from_hex(manifest.at("config_hash").get<std::string>());
  result.meta.epochs_trained = manifest.at("epochs_trained").get<int>();

  const auto& m = manifest.at("model");
  ModelSpec spec;
  spec.backbone = parse_backbone(m.at("backbone").get<std::string>());
  spec.fefa = parse_fefa_mode(m.at("fefa").get<std::string>());
  spec.scale_mode = parse_scale_mode(m.at("scale_mode").get<std::string>());
  spec.fefa_local_window = m.at("fefa_local_window").get<int>();
  spec.n_classes = m.at("n_classes").get<int>();
  spec.embedding_dim = m.at("embedding_dim").get<int>();
  spec.input_bins = m.at("input_bins").get<int>();
  spec.seed = m.at("seed").get<std::uint64_t>();
  result.meta.spec = spec;

  std::vector<char> payload((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());

  result.model = build_model(spec);
  auto refs = result.model.params();

  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != refs.size())
    throw InputError("load_checkpoint: tensor count mismatch");
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const auto& t = tensors.at(i);
    if (t.at("name").get<std::string>() != refs[i].name)
      throw InputError("load_checkpoint: tensor name mismatch at index " +
                       std::to_string(i) + " (" + t.at("name").get<std::string>() +
                       " vs " + refs[i].name + ")");
    if (t.at("dtype").get<std::string>() != "float64")
      throw InputError("load_checkpoint: unsupported dtype");
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (shape != refs[i].shape)
      throw InputError("load_checkpoint: shape mismatch for " + refs[i].name);
    const std::uint64_t offset = t.at("offset").get<std::uint64_t>();
    if (offset != expected_offset)
      throw InputError("load_checkpoint: overlapping or out-of-order offsets");
    const std::uint64_t bytes = refs[i].size * sizeof(double);
    if (offset + bytes > payload.size())
      throw InputError("load_checkpoint: payload out of bounds");
    std::memcpy(refs[i].data, payload.data() + offset, bytes);
    expected_offset = offset + bytes;
  }
  if (expected_offset != payload.size())
    throw InputError("load_checkpoint: trailing bytes in payload");
  return result;
}

// Loads and insists the checkpoint was produced under the given config.
inline LoadedCheckpoint load_checkpoint_checked(const std::string& path,
                                                std::uint64_t expected_hash) {
  LoadedCheckpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.config_hash != expected_hash)
    throw ConfigError("checkpoint " + path +
                      " was trained under a different config (hash mismatch)");
  return ckpt;
}

}  // namespace fefa
