#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "chargenet/data/dataset.hpp"
#include "chargenet/errors.hpp"

namespace chargenet {

enum class LossVariant { kBce, kPositiveOnly };

inline std::string to_string(LossVariant v) { return v == LossVariant::kPositiveOnly ? "positive_only" : "bce"; }

inline LossVariant parse_loss_variant(const std::string& s) {
  if (s == "bce") return LossVariant::kBce;
  if (s == "positive_only") return LossVariant::kPositiveOnly;
  throw ConfigError("unknown loss variant '" + s + "' (expected bce or positive_only)");
}

/// Which representations feed the final layer, and whether word-level
/// alignment is weighted by the sentence-level charge attention.
struct AblationFlags {
  bool use_fc = true;
  bool use_fs = true;
  bool use_fw = true;
  bool use_gi = true;

  bool operator==(const AblationFlags&) const = default;

  /// Number of d_h-wide blocks concatenated before the final layer.
  std::size_t final_blocks() const { return std::size_t(use_fc) + std::size_t(use_fs) + std::size_t(use_fw); }
  /// The sentence-level memory is needed for Fs, or for weighting Fw.
  bool needs_memory() const { return use_fs || (use_fw && use_gi); }
  bool needs_definitions() const { return use_fs || use_fw; }
};

inline const std::vector<std::string>& ablation_variant_names() {
  static const std::vector<std::string> names{"full", "no_fc", "no_fs_fw", "no_fw", "no_fs", "no_fs_gi"};
  return names;
}

inline AblationFlags ablation_variant(const std::string& name) {
  AblationFlags f;
  if (name == "full") return f;
  if (name == "no_fc") {
    f.use_fc = false;
  } else if (name == "no_fs_fw") {
    f.use_fs = f.use_fw = false;
  } else if (name == "no_fw") {
    f.use_fw = false;
  } else if (name == "no_fs") {
    f.use_fs = false;
  } else if (name == "no_fs_gi") {
    f.use_fs = false;
    f.use_gi = false;
  } else {
    throw ConfigError("unknown ablation variant '" + name + "'");
  }
  return f;
}

struct ModelConfig {
  std::size_t d_emb = 64;
  std::size_t d_h = 128;
  std::size_t d_attn = 0;      // fact attention MLP width; 0 -> d_h / 2
  std::size_t d_episodic = 0;  // charge attention MLP width; 0 -> d_h / 2
  std::size_t conv_window = 3;
  std::size_t iterations = 3;  // T
  std::size_t num_charges = 0; // C
  std::size_t max_fact_len = kDefaultMaxFactLen;
  std::size_t max_def_len = kDefaultMaxDefLen;
  std::size_t align_top_k = 0; // 0 = all charges
  AblationFlags flags;
  LossVariant loss_variant = LossVariant::kBce;

  std::uint64_t seed = 1;
  double learning_rate = 0.005;
  std::size_t lr_halve_every = 2;
  std::size_t lr_halve_offset = 0;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  double clip_norm = 5.0;
  double threshold = 0.5;
  std::size_t min_count = 2;
  bool prior_output_bias = true;  // classifier biases start at -log(C - 1) instead of 0

  std::size_t attn_width() const { return d_attn ? d_attn : std::max<std::size_t>(1, d_h / 2); }
  std::size_t episodic_width() const { return d_episodic ? d_episodic : std::max<std::size_t>(1, d_h / 2); }

  void validate() const {
    if (!flags.use_fc && !flags.use_fs && !flags.use_fw)
      throw ConfigError("at least one of use_fc/use_fs/use_fw must be enabled");
    if (iterations < 1) throw ConfigError("iterations (T) must be >= 1");
    if (conv_window == 0 || conv_window % 2 == 0) throw ConfigError("conv_window must be odd");
    if (d_emb == 0 || d_h == 0) throw ConfigError("dimensions must be positive");
    if (num_charges == 0) throw ConfigError("num_charges must be positive");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("threshold must lie in (0, 1)");
    if (max_fact_len == 0 || max_def_len == 0) throw ConfigError("maximum lengths must be positive");
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["d_emb"] = c.d_emb;
  j["d_h"] = c.d_h;
  j["d_attn"] = c.d_attn;
  j["d_episodic"] = c.d_episodic;
  j["conv_window"] = c.conv_window;
  j["iterations"] = c.iterations;
  j["num_charges"] = c.num_charges;
  j["max_fact_len"] = c.max_fact_len;
  j["max_def_len"] = c.max_def_len;
  j["align_top_k"] = c.align_top_k;
  j["use_fc"] = c.flags.use_fc;
  j["use_fs"] = c.flags.use_fs;
  j["use_fw"] = c.flags.use_fw;
  j["use_gi"] = c.flags.use_gi;
  j["loss_variant"] = to_string(c.loss_variant);
  j["seed"] = c.seed;
  j["learning_rate"] = c.learning_rate;
  j["lr_halve_every"] = c.lr_halve_every;
  j["lr_halve_offset"] = c.lr_halve_offset;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["clip_norm"] = c.clip_norm;
  j["threshold"] = c.threshold;
  j["min_count"] = c.min_count;
  j["prior_output_bias"] = c.prior_output_bias;
  return j;
}

/// Overlays keys present in `j` onto `c`. Unknown keys are rejected.
inline void apply_json(ModelConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "d_emb") c.d_emb = v.get<std::size_t>();
      else if (key == "d_h") c.d_h = v.get<std::size_t>();
      else if (key == "d_attn") c.d_attn = v.get<std::size_t>();
      else if (key == "d_episodic") c.d_episodic = v.get<std::size_t>();
      else if (key == "conv_window") c.conv_window = v.get<std::size_t>();
      else if (key == "iterations") c.iterations = v.get<std::size_t>();
      else if (key == "num_charges") c.num_charges = v.get<std::size_t>();
      else if (key == "max_fact_len") c.max_fact_len = v.get<std::size_t>();
      else if (key == "max_def_len") c.max_def_len = v.get<std::size_t>();
      else if (key == "align_top_k") c.align_top_k = v.get<std::size_t>();
      else if (key == "use_fc") c.flags.use_fc = v.get<bool>();
      else if (key == "use_fs") c.flags.use_fs = v.get<bool>();
      else if (key == "use_fw") c.flags.use_fw = v.get<bool>();
      else if (key == "use_gi") c.flags.use_gi = v.get<bool>();
      else if (key == "ablation") c.flags = ablation_variant(v.get<std::string>());
      else if (key == "loss_variant") c.loss_variant = parse_loss_variant(v.get<std::string>());
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "learning_rate") c.learning_rate = v.get<double>();
      else if (key == "lr_halve_every") c.lr_halve_every = v.get<std::size_t>();
      else if (key == "lr_halve_offset") c.lr_halve_offset = v.get<std::size_t>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "clip_norm") c.clip_norm = v.get<double>();
      else if (key == "threshold") c.threshold = v.get<double>();
      else if (key == "min_count") c.min_count = v.get<std::size_t>();
      else if (key == "prior_output_bias") c.prior_output_bias = v.get<bool>();
      else throw ConfigError("unknown model config key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    }
  }
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  apply_json(c, j);
  return c;
}

}  // namespace chargenet
