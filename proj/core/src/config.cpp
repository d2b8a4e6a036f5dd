#include "iaeilm/config.hpp"

#include "json_io.hpp"

namespace iaeilm {

using nlohmann::json;

void DatasetConfig::validate() const {
  synth.validate();
  if (n_train < 1 || n_val < 0 || n_test < 0) throw ConfigError("dataset: split sizes must be non-negative (train >= 1)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
  if (warmup_steps < 0 || warmup_steps > max_steps) throw ConfigError("train: need 0 <= warmup_steps <= max_steps");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train: weight_decay must be non-negative");
  if (batch_size < 1 || grad_accum < 1 || max_steps < 1) throw ConfigError("train: batch, accumulation and steps must be positive");
  if (!(t_min > 0.0 && t_min < 1.0)) throw ConfigError("train: t_min must be in (0, 1)");
  if (checkpoint_every < 1 || keep_checkpoints < 1) throw ConfigError("train: checkpoint cadence must be positive");
  if (!(cond_dropout >= 0.0 && cond_dropout < 1.0)) throw ConfigError("train: cond_dropout must be in [0, 1)");
  if (sample_steps < 1) throw ConfigError("train: sample_steps must be positive");
  backbone.validate();
  data.validate();
  if (backbone.latent_dim != data.synth.latent_dim()) {
    throw ConfigError("backbone latent_dim " + std::to_string(backbone.latent_dim) +
                      " does not match synthetic latent width " + std::to_string(data.synth.latent_dim()));
  }
  if (backbone.num_styles != data.synth.num_styles) throw ConfigError("backbone and synth disagree on num_styles");
}

TrainConfig default_train_config() {
  TrainConfig c;
  c.backbone.latent_dim = c.data.synth.latent_dim();
  c.backbone.num_styles = c.data.synth.num_styles;
  return c;
}

namespace detail {

json to_json_value(const melody::EncoderConfig& e) {
  return {{"hidden_channels", e.hidden_channels},
          {"kernel", e.kernel},
          {"activation", e.activation == melody::Activation::sine ? "sine" : "tanh"},
          {"first_layer_scale", e.first_layer_scale}};
}

json to_json_value(const backbone::BackboneConfig& b) {
  return {{"num_blocks", b.num_blocks},
          {"model_width", b.model_width},
          {"heads", b.heads},
          {"ffn_mult", b.ffn_mult},
          {"injector", std::string(backbone::to_string(b.injector))},
          {"placement", std::string(backbone::to_string(b.placement))},
          {"melody_width", b.melody_width},
          {"latent_dim", b.latent_dim},
          {"num_styles", b.num_styles},
          {"positional", b.positional},
          {"encoder", to_json_value(b.encoder)}};
}

json to_json_value(const DatasetConfig& d) {
  const auto& s = d.synth;
  return {{"frames", s.frames},
          {"pitch_bins", s.pitch_bins},
          {"style_channels", s.style_channels},
          {"num_styles", s.num_styles},
          {"noise_std", s.noise_std},
          {"voicing_rate", s.voicing_rate},
          {"mean_segment_frames", s.mean_segment_frames},
          {"seed", s.seed},
          {"n_train", d.n_train},
          {"n_val", d.n_val},
          {"n_test", d.n_test}};
}

json to_json_value(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"warmup_steps", c.warmup_steps},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"weight_decay", c.weight_decay},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"grad_accum", c.grad_accum},
          {"max_steps", c.max_steps},
          {"grad_clip", c.grad_clip},
          {"seed", c.seed},
          {"t_min", c.t_min},
          {"checkpoint_every", c.checkpoint_every},
          {"keep_checkpoints", c.keep_checkpoints},
          {"freeze_backbone", c.freeze_backbone},
          {"deterministic", c.deterministic},
          {"cond_dropout", c.cond_dropout},
          {"sample_steps", c.sample_steps},
          {"guidance_scale", c.guidance_scale},
          {"backbone", to_json_value(c.backbone)},
          {"data", to_json_value(c.data)}};
}

namespace {

template <class T>
void take(const json& j, const char* key, T& out, std::vector<std::string>& seen) {
  if (!j.contains(key)) return;
  seen.emplace_back(key);
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::vector<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(seen.begin(), seen.end(), it.key()) == seen.end()) {
      throw ConfigError("unknown config key '" + where + it.key() + "'");
    }
  }
}

}  // namespace

void from_json_value(const json& j, melody::EncoderConfig& e) {
  std::vector<std::string> seen;
  take(j, "hidden_channels", e.hidden_channels, seen);
  take(j, "kernel", e.kernel, seen);
  take(j, "first_layer_scale", e.first_layer_scale, seen);
  std::string act = e.activation == melody::Activation::sine ? "sine" : "tanh";
  take(j, "activation", act, seen);
  if (act == "tanh") e.activation = melody::Activation::tanh;
  else if (act == "sine") e.activation = melody::Activation::sine;
  else throw ConfigError("encoder activation must be 'tanh' or 'sine'");
  reject_unknown(j, seen, "backbone.encoder.");
}

void from_json_value(const json& j, backbone::BackboneConfig& b) {
  std::vector<std::string> seen;
  take(j, "num_blocks", b.num_blocks, seen);
  take(j, "model_width", b.model_width, seen);
  take(j, "heads", b.heads, seen);
  take(j, "ffn_mult", b.ffn_mult, seen);
  take(j, "melody_width", b.melody_width, seen);
  take(j, "latent_dim", b.latent_dim, seen);
  take(j, "num_styles", b.num_styles, seen);
  take(j, "positional", b.positional, seen);
  std::string inj{backbone::to_string(b.injector)};
  take(j, "injector", inj, seen);
  b.injector = backbone::parse_injector(inj);
  std::string pl{backbone::to_string(b.placement)};
  take(j, "placement", pl, seen);
  b.placement = backbone::parse_placement(pl);
  if (j.contains("encoder")) {
    seen.emplace_back("encoder");
    from_json_value(j.at("encoder"), b.encoder);
  }
  reject_unknown(j, seen, "backbone.");
}

void from_json_value(const json& j, DatasetConfig& d) {
  std::vector<std::string> seen;
  auto& s = d.synth;
  take(j, "frames", s.frames, seen);
  take(j, "pitch_bins", s.pitch_bins, seen);
  take(j, "style_channels", s.style_channels, seen);
  take(j, "num_styles", s.num_styles, seen);
  take(j, "noise_std", s.noise_std, seen);
  take(j, "voicing_rate", s.voicing_rate, seen);
  take(j, "mean_segment_frames", s.mean_segment_frames, seen);
  take(j, "seed", s.seed, seen);
  take(j, "n_train", d.n_train, seen);
  take(j, "n_val", d.n_val, seen);
  take(j, "n_test", d.n_test, seen);
  reject_unknown(j, seen, "data.");
}

void from_json_value(const json& j, TrainConfig& c) {
  std::vector<std::string> seen;
  take(j, "lr", c.lr, seen);
  take(j, "warmup_steps", c.warmup_steps, seen);
  take(j, "beta1", c.beta1, seen);
  take(j, "beta2", c.beta2, seen);
  take(j, "weight_decay", c.weight_decay, seen);
  take(j, "adam_eps", c.adam_eps, seen);
  take(j, "batch_size", c.batch_size, seen);
  take(j, "grad_accum", c.grad_accum, seen);
  take(j, "max_steps", c.max_steps, seen);
  take(j, "grad_clip", c.grad_clip, seen);
  take(j, "seed", c.seed, seen);
  take(j, "t_min", c.t_min, seen);
  take(j, "checkpoint_every", c.checkpoint_every, seen);
  take(j, "keep_checkpoints", c.keep_checkpoints, seen);
  take(j, "freeze_backbone", c.freeze_backbone, seen);
  take(j, "deterministic", c.deterministic, seen);
  take(j, "cond_dropout", c.cond_dropout, seen);
  take(j, "sample_steps", c.sample_steps, seen);
  take(j, "guidance_scale", c.guidance_scale, seen);
  if (j.contains("data")) {
    seen.emplace_back("data");
    from_json_value(j.at("data"), c.data);
    // Keep the backbone sized to the world unless the file says otherwise.
    c.backbone.latent_dim = c.data.synth.latent_dim();
    c.backbone.num_styles = c.data.synth.num_styles;
  }
  if (j.contains("backbone")) {
    seen.emplace_back("backbone");
    from_json_value(j.at("backbone"), c.backbone);
  }
  reject_unknown(j, seen, "");
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace detail

std::string to_json(const TrainConfig& cfg, int indent) { return detail::to_json_value(cfg).dump(indent); }
std::string to_json(const DatasetConfig& cfg, int indent) { return detail::to_json_value(cfg).dump(indent); }

TrainConfig train_config_from_json(const std::string& text, const TrainConfig& base) {
  TrainConfig c = base;
  const json j = detail::parse_json(text);
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  detail::from_json_value(j, c);
  return c;
}

DatasetConfig dataset_config_from_json(const std::string& text, const DatasetConfig& base) {
  DatasetConfig d = base;
  const json j = detail::parse_json(text);
  if (!j.is_object()) throw ConfigError("dataset config must be a JSON object");
  detail::from_json_value(j, d);
  return d;
}

std::string config_hash(const TrainConfig& cfg) { return fnv1a_hex(detail::to_json_value(cfg).dump()); }
std::string config_hash(const DatasetConfig& cfg) { return fnv1a_hex(detail::to_json_value(cfg).dump()); }

}  // namespace iaeilm
