#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fgsgt/config.hpp"
#include "fgsgt/io.hpp"
#include "fgsgt/metrics.hpp"
#include "fgsgt/trainer.hpp"

namespace fgsgt::run {

namespace fs = std::filesystem;

struct TrainOutputs {
  fs::path checkpoint, log, manifest;
  std::vector<train::StepRecord> records;  // steps run by this invocation
};

/// Trains per config into out_dir (manifest.txt, loss.csv, model.ckpt).
/// With `resume`, optimiser state and step counter are restored and the log
/// is appended to. `stop_after` ends the run early at that step (0: run to
/// train.steps), which is how interrupted runs are reproduced.
TrainOutputs train(const RunConfig& cfg, const fs::path& out_dir, const std::optional<fs::path>& resume = {},
                   std::size_t stop_after = 0, std::ostream* progress = nullptr);

/// Builds the model described by cfg and loads the checkpoint's tensors.
Model load_model(const RunConfig& cfg, const fs::path& checkpoint);

/// Tracks every frame of a sequence directory. The first output row is the
/// initial box with score 1. When saliency_dir is set, the final refined
/// saliency map of each tracked frame is written there as PGM.
std::vector<io::BoxRow> track_sequence(Model& model, const siamese::SelectConfig& select, const fs::path& seq_dir,
                                       const BBox& init, const std::optional<fs::path>& saliency_dir = {});

struct EvalOutputs {
  metrics::Trajectory traj;
  double precision20 = 0, success_auc = 0, norm_precision = 0, mean_iou = 0;
  std::string json;
};

/// Reads prediction and ground-truth CSVs; rejects row-count or frame-index
/// mismatches with a diagnostic.
EvalOutputs evaluate(const fs::path& pred_csv, const fs::path& gt_csv);
EvalOutputs evaluate(const metrics::Trajectory& traj);

}  // namespace fgsgt::run
