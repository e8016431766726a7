#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargenet/data/vocabulary.hpp"
#include "chargenet/model/network.hpp"

namespace chargenet {

// Layout:
//   8 bytes   magic "CHGNETCK"
//   4 bytes   format version (uint32, little endian)
//   8 bytes   header length N (uint64, little endian)
//   N bytes   UTF-8 JSON header: config, vocabulary, charges, training
//             support, and a tensor directory {name, shape, offset, count}
//   payload   row-major float64 values, little endian, in directory order
inline constexpr char kCheckpointMagic[8] = {'C', 'H', 'G', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

/// Everything needed to run a trained model on new facts.
struct Checkpoint {
  ModelConfig config;
  Vocabulary vocab;
  ChargeSet charges;
  std::vector<std::size_t> train_support;
  ModelParams params;
};

namespace detail {

inline nlohmann::json charges_to_json(const ChargeSet& charges) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& d : charges.definitions) arr.push_back({{"name", d.name}, {"tokens", d.tokens}});
  return arr;
}

inline ChargeSet charges_from_json(const nlohmann::json& arr) {
  ChargeSet out;
  for (const auto& item : arr) {
    ChargeDefinition d;
    d.charge_id = out.definitions.size();
    d.name = item.at("name").get<std::string>();
    d.tokens = item.at("tokens").get<TokenIds>();
    if (!out.label_map.emplace(d.name, d.charge_id).second) throw FormatError("checkpoint: duplicate charge name");
    out.definitions.push_back(std::move(d));
  }
  return out;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, Checkpoint& ck) {
  nlohmann::json header;
  header["format_version"] = kCheckpointVersion;
  header["config"] = to_json(ck.config);
  header["vocabulary"] = ck.vocab.tokens();
  header["charges"] = detail::charges_to_json(ck.charges);
  header["train_support"] = ck.train_support;
  nlohmann::json dir = nlohmann::json::array();
  std::uint64_t offset = 0;
  const NamedTensors named = ck.params.named();
  for (const auto& [name, t] : named) {
    dir.push_back({{"name", name}, {"shape", t->shape}, {"offset", offset}, {"count", t->size()}});
    offset += t->size();
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  const std::uint32_t version = kCheckpointVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : named)
    out.write(reinterpret_cast<const char*>(t->data.data()), static_cast<std::streamsize>(t->size() * sizeof(double)));
  if (!out) throw IngestionError("failed writing checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint: " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
    throw FormatError("checkpoint " + path + ": bad magic, not a checkpoint or corrupted header");
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version) || !in.read(reinterpret_cast<char*>(&len), sizeof len))
    throw FormatError("checkpoint " + path + ": truncated header");
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint " + path + ": unsupported format version " + std::to_string(version));
  if (len > (std::uint64_t{1} << 32)) throw FormatError("checkpoint " + path + ": implausible header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw FormatError("checkpoint " + path + ": truncated header");

  Checkpoint ck;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ck.config = model_config_from_json(header.at("config"));
    ck.vocab = Vocabulary::from_tokens(header.at("vocabulary").get<std::vector<std::string>>());
    ck.charges = detail::charges_from_json(header.at("charges"));
    ck.train_support = header.at("train_support").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path + ": corrupted header: " + e.what());
  } catch (const ConfigError& e) {
    throw FormatError("checkpoint " + path + ": bad config: " + e.what());
  }
  if (ck.charges.size() != ck.config.num_charges)
    throw FormatError("checkpoint " + path + ": charge list does not match num_charges");

  // Allocate the expected layout, then fill it from the payload.
  Rng unused(0);
  ck.params = ModelParams::initialize(ck.config, ck.vocab.size(), unused);
  NamedTensors named = ck.params.named();
  const auto& dir = header.at("tensors");
  if (!dir.is_array() || dir.size() != named.size())
    throw FormatError("checkpoint " + path + ": tensor directory has " + std::to_string(dir.size()) +
                      " entries, expected " + std::to_string(named.size()));
  for (std::size_t i = 0; i < named.size(); ++i) {
    auto& [name, t] = named[i];
    Shape shape;
    try {
      if (dir[i].at("name").get<std::string>() != name)
        throw FormatError("checkpoint " + path + ": tensor " + std::to_string(i) + " is '" +
                          dir[i].at("name").get<std::string>() + "', expected '" + name + "'");
      shape = dir[i].at("shape").get<Shape>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("checkpoint " + path + ": corrupted tensor directory: " + e.what());
    }
    if (shape != t->shape)
      throw FormatError("checkpoint " + path + ": tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                        shape_str(t->shape));
    if (!in.read(reinterpret_cast<char*>(t->data.data()), static_cast<std::streamsize>(t->size() * sizeof(double))))
      throw FormatError("checkpoint " + path + ": truncated payload");
  }
  if (in.peek() != std::ifstream::traits_type::eof()) throw FormatError("checkpoint " + path + ": trailing bytes");
  return ck;
}

/// Loads only the parameters into `target`, which fixes the expected
/// shapes (for example a model built for a given C).
inline void load_params(const std::string& path, ModelParams& target) {
  Checkpoint ck = load_checkpoint(path);
  NamedTensors src = ck.params.named();
  NamedTensors dst = target.named();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (src[i].second->shape != dst[i].second->shape)
      throw FormatError("checkpoint " + path + ": tensor '" + dst[i].first + "' has shape " +
                        shape_str(src[i].second->shape) + ", expected " + shape_str(dst[i].second->shape));
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i].second->data = src[i].second->data;
}

}  // namespace chargenet
