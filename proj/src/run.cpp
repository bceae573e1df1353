#include "fgsgt/run.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include <json.hpp>

#include "fgsgt/checkpoint.hpp"
#include "fgsgt/tracker.hpp"

namespace fgsgt::run {

TrainOutputs train(const RunConfig& cfg, const fs::path& out_dir, const std::optional<fs::path>& resume,
                   std::size_t stop_after, std::ostream* progress) {
  fs::create_directories(out_dir);
  TrainOutputs out;
  out.manifest = out_dir / "manifest.txt";
  out.log = out_dir / "loss.csv";
  out.checkpoint = out_dir / "model.ckpt";
  {
    std::ofstream m(out.manifest);
    m << cfg.manifest();
  }

  Model model = Model::create(cfg.model, cfg.seed);
  train::Trainer trainer(model, cfg.train, cfg.loss, cfg.seed);
  if (resume) trainer.load(*resume);
  const auto pairs = train::build_pairs(cfg.train, cfg.scene, cfg.model, cfg.seed);

  const bool append = resume.has_value() && fs::exists(out.log);
  std::ofstream log(out.log, append ? std::ios::app : std::ios::trunc);
  if (!log) throw std::runtime_error("cannot write " + out.log.string());
  if (!append) train::write_log_header(log, cfg.model.saliency.steps);

  const std::size_t last = stop_after ? std::min(stop_after, cfg.train.steps) : cfg.train.steps;
  while (trainer.steps_done() < last) {
    const auto rec = trainer.step(pairs);
    out.records.push_back(rec);
    if (rec.step % cfg.train.log_every == 0) train::write_log_row(log, rec);
    if (cfg.train.checkpoint_every && rec.step % cfg.train.checkpoint_every == 0) trainer.save(out.checkpoint);
    if (progress && (rec.step % 100 == 0 || rec.step == last)) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "step %zu total %.6f\n", rec.step, rec.loss.total);
      *progress << buf << std::flush;
    }
  }
  trainer.save(out.checkpoint);
  return out;
}

Model load_model(const RunConfig& cfg, const fs::path& checkpoint) {
  Model model = Model::create(cfg.model, cfg.seed);
  // Optimiser entries are ignored; only the network tensors matter here.
  checkpoint::restore(model.store, checkpoint::load(checkpoint));
  return model;
}

std::vector<io::BoxRow> track_sequence(Model& model, const siamese::SelectConfig& select, const fs::path& seq_dir,
                                       const BBox& init, const std::optional<fs::path>& saliency_dir) {
  const auto frames = io::list_frames(seq_dir);
  if (saliency_dir) fs::create_directories(*saliency_dir);
  track::Tracker tracker(model, select);
  std::vector<io::BoxRow> rows;
  tracker.init(io::read_image(frames[0]), init);
  rows.push_back({0, init, 1.0});
  for (std::size_t f = 1; f < frames.size(); ++f) {
    const auto r = tracker.update(io::read_image(frames[f]));
    rows.push_back({f, r.box, r.score});
    if (saliency_dir) {
      char name[32];
      std::snprintf(name, sizeof name, "%05zu.pgm", f);
      io::write_pgm(*saliency_dir / name, r.saliency.dim(3), r.saliency.dim(2), saliency::to_gray(r.saliency));
    }
  }
  return rows;
}

EvalOutputs evaluate(const metrics::Trajectory& traj) {
  EvalOutputs out;
  out.traj = traj;
  out.precision20 = metrics::precision_at(traj);
  out.success_auc = metrics::success_auc(traj);
  out.norm_precision = metrics::norm_precision(traj);
  out.mean_iou = metrics::mean_iou(traj);
  nlohmann::json j;
  j["frames"] = traj.size();
  j["precision20"] = out.precision20;
  j["successAUC"] = out.success_auc;
  j["normPrecision"] = out.norm_precision;
  j["meanIoU"] = out.mean_iou;
  const auto pt = metrics::default_precision_thresholds();
  j["curves"]["precision"] = {{"thresholds", pt}, {"values", metrics::precision_curve(traj, pt)}};
  j["curves"]["success"] = {{"thresholds", metrics::success_thresholds()}, {"values", metrics::success_curve(traj)}};
  out.json = j.dump(2);
  return out;
}

EvalOutputs evaluate(const fs::path& pred_csv, const fs::path& gt_csv) {
  const auto pred = io::read_box_csv(pred_csv);
  const auto gt = io::read_box_csv(gt_csv);
  if (pred.size() != gt.size()) {
    throw std::runtime_error("eval: " + pred_csv.string() + " has " + std::to_string(pred.size()) + " rows but " +
                             gt_csv.string() + " has " + std::to_string(gt.size()));
  }
  metrics::Trajectory traj;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].frame != gt[i].frame) {
      throw std::runtime_error("eval: row " + std::to_string(i + 1) + " is frame " + std::to_string(pred[i].frame) +
                               " in the predictions but frame " + std::to_string(gt[i].frame) + " in the ground truth");
    }
    traj.predicted.push_back(pred[i].box);
    traj.ground_truth.push_back(gt[i].box);
  }
  return evaluate(traj);
}

}  // namespace fgsgt::run
