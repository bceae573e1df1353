#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fgsgt/losses.hpp"
#include "fgsgt/model.hpp"
#include "fgsgt/synth.hpp"
#include "fgsgt/trainer.hpp"

namespace fgsgt {

/// Everything a run depends on. Text form is one "key = value" per line,
/// '#' starts a comment, lists are comma separated, unknown keys are errors.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string mode = "desk";  // desk: 32/64 crops, full: 128/256 crops
  ModelConfig model;
  losses::LossWeights loss;
  train::TrainConfig train;
  synth::SceneSpec scene;  // appearance of the training scenes
  siamese::SelectConfig select;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void set(const std::string& key, const std::string& value);

  /// Applies mode to the crop sizes and checks cross-field consistency.
  void finalize();
  /// Every key with its current value, in a form parse() accepts.
  std::string manifest() const;
  static std::vector<std::string> keys();
};

}  // namespace fgsgt
