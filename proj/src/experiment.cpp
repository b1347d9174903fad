#include "polytx/experiment.hpp"

#include <fstream>
#include <json.hpp>

#include "polytx/error.hpp"
#include "polytx/eval.hpp"

#ifndef POLYTX_VERSION
#define POLYTX_VERSION "0.0.0"
#endif
#ifndef POLYTX_GIT_REV
#define POLYTX_GIT_REV "unknown"
#endif

namespace polytx {

void ExperimentConfig::validate() const {
  for (const auto& [name, path] : inputs) {
    if (!std::filesystem::exists(path)) fail(ErrorCode::IoError, name + " not found: " + path.string());
  }
  if (preset != "desk" && preset != "paper") {
    fail(ErrorCode::BadConfig, "unknown encoder preset '" + preset + "' (expected desk|paper)");
  }
  if (folds < 2) fail(ErrorCode::BadConfig, "folds must be >= 2");
  if (encoder) encoder->validate();
  if (train) train->validate();
}

std::string version_string() { return std::string(POLYTX_VERSION) + "+" + POLYTX_GIT_REV; }

namespace {

nlohmann::ordered_json encoder_json(const EncoderConfig& c) {
  return {{"num_layers", c.num_layers}, {"num_heads", c.num_heads},   {"hidden", c.hidden},
          {"ffn", c.ffn},               {"max_len", c.max_len},       {"vocab_size", c.vocab_size},
          {"dropout_p", c.dropout_p},   {"head_dropout_p", c.head_dropout_p}, {"num_properties", c.num_properties}};
}

nlohmann::ordered_json train_json(const TrainConfig& c) {
  return {{"mode", mode_name(c)},
          {"optimizer", std::string(optimizer_name(c.optimizer))},
          {"peak_lr", c.peak_lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"grad_accum_steps", c.grad_accum_steps},
          {"warmup_ratio", c.warmup_ratio},
          {"mask_rate", c.mask_rate},
          {"mask_views", c.mask_views},
          {"seed", c.seed},
          {"schedule", std::string(schedule_name(c.schedule))}};
}

}  // namespace

std::string manifest_json(const ExperimentConfig& config, std::span<const std::filesystem::path> outputs,
                          double wall_seconds) {
  nlohmann::ordered_json j;
  j["command"] = config.command;
  j["version"] = version_string();
  j["seed"] = config.seed;
  auto& in = j["inputs"] = nlohmann::ordered_json::object();
  for (const auto& [name, path] : config.inputs) in[name] = path.generic_string();
  j["out_dir"] = config.out_dir.generic_string();
  j["preset"] = config.preset;
  j["encoder"] = config.encoder ? encoder_json(*config.encoder) : nlohmann::ordered_json();
  j["train"] = config.train ? train_json(*config.train) : nlohmann::ordered_json();
  j["folds"] = config.folds;
  auto& fr = j["fractions"] = nlohmann::ordered_json::array();
  for (double f : config.fractions) fr.push_back(f);
  j["reference_rows"] = config.reference_rows;
  auto& opts = j["options"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config.options) opts[k] = v;
  auto& outs = j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& p : outputs) outs.push_back(p.filename().generic_string());
  j["wall_seconds"] = wall_seconds;
  return j.dump(2) + "\n";
}

std::filesystem::path write_manifest(const ExperimentConfig& config, std::span<const std::filesystem::path> outputs,
                                     double wall_seconds) {
  const auto path = config.out_dir / ("manifest_" + config.command + ".json");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  out << manifest_json(config, outputs, wall_seconds);
  return path;
}

}  // namespace polytx
