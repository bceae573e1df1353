#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fgsgt/config.hpp"
#include "fgsgt/run.hpp"
#include "fgsgt/synth.hpp"
#include "fgsgt/verify/suites.hpp"

namespace fs = std::filesystem;
using namespace fgsgt;

namespace {

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg;
  if (!path.empty()) cfg = RunConfig::load(path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.finalize();
  return cfg;
}

BBox parse_box(const std::string& s) {
  double v[4];
  if (std::sscanf(s.c_str(), "%lf,%lf,%lf,%lf", &v[0], &v[1], &v[2], &v[3]) != 4) {
    throw std::invalid_argument("--init expects cx,cy,w,h, got '" + s + "'");
  }
  return {v[0], v[1], v[2], v[3]};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained saliency-guided Siamese tracker: data, training, tracking and evaluation"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Render a synthetic sequence (frames/*.pgm + groundtruth.csv)");
  synth::SceneSpec scene;
  std::string gen_out;
  bool gen_random = false;
  double gen_max_speed = 1.5;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--width", scene.width, "Frame width")->capture_default_str();
  gen->add_option("--height", scene.height, "Frame height")->capture_default_str();
  gen->add_option("--frames", scene.frames, "Frame count")->capture_default_str();
  gen->add_option("--background", scene.background, "Background level")->capture_default_str();
  gen->add_option("--radius", scene.target_radius, "Target blob radius; box side is 2r")->capture_default_str();
  gen->add_option("--intensity", scene.target_intensity, "Target peak level")->capture_default_str();
  gen->add_option("--cx", scene.start_cx, "Start centre x")->capture_default_str();
  gen->add_option("--cy", scene.start_cy, "Start centre y")->capture_default_str();
  gen->add_option("--vx", scene.vx, "Velocity x (px/frame)")->capture_default_str();
  gen->add_option("--vy", scene.vy, "Velocity y (px/frame)")->capture_default_str();
  gen->add_option("--distractors", scene.distractors, "Distractor count")->capture_default_str();
  gen->add_option("--distractor-radius", scene.distractor_radius)->capture_default_str();
  gen->add_option("--distractor-intensity", scene.distractor_intensity)->capture_default_str();
  gen->add_option("--distractor-speed", scene.distractor_speed)->capture_default_str();
  gen->add_option("--noise", scene.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  gen->add_option("--seed", scene.seed, "Random seed")->capture_default_str();
  gen->add_flag("--random-motion", gen_random, "Draw start and velocity from the seed");
  gen->add_option("--max-speed", gen_max_speed, "Speed bound for --random-motion")->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "Train on synthetic pairs; writes manifest, loss log and checkpoint");
  std::string tr_config, tr_out, tr_resume;
  std::vector<std::string> tr_set;
  std::size_t tr_stop = 0;
  tr->add_option("--config", tr_config, "key = value config file");
  tr->add_option("--set", tr_set, "Override a config key (key=value), repeatable");
  tr->add_option("--out", tr_out, "Output directory")->required();
  tr->add_option("--resume", tr_resume, "Checkpoint to resume from");
  tr->add_option("--stop-after", tr_stop, "Stop at this step (0: run to train.steps)");

  // track
  auto* tk = app.add_subcommand("track", "Track a sequence directory; writes frame,cx,cy,w,h,score CSV");
  std::string tk_config, tk_ckpt, tk_seq, tk_init, tk_out, tk_sal;
  std::vector<std::string> tk_set;
  tk->add_option("--checkpoint", tk_ckpt, "Trained checkpoint")->required();
  tk->add_option("--config", tk_config, "Config (defaults to manifest.txt beside the checkpoint)");
  tk->add_option("--set", tk_set, "Override a config key (key=value), repeatable");
  tk->add_option("--sequence", tk_seq, "Sequence directory")->required();
  tk->add_option("--init", tk_init, "First-frame box cx,cy,w,h (default: first groundtruth.csv row)");
  tk->add_option("--out", tk_out, "Prediction CSV")->required();
  tk->add_option("--saliency-dir", tk_sal, "Write refined saliency maps here");

  // eval
  auto* ev = app.add_subcommand("eval", "Precision@20, success AUC and normalised precision as JSON");
  std::string ev_pred, ev_gt, ev_out;
  ev->add_option("--pred", ev_pred, "Prediction CSV")->required();
  ev->add_option("--gt", ev_gt, "Ground-truth CSV")->required();
  ev->add_option("--out", ev_out, "Metrics JSON (default: stdout)");

  // gradcheck / selftest
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::size_t gc_seeds = 20;
  gc->add_option("--seeds", gc_seeds, "Random draws per case")->capture_default_str();
  auto* st = app.add_subcommand("selftest", "Kernel-versus-oracle equivalence suite");
  std::size_t st_instances = 100;
  st->add_option("--instances", st_instances, "Random instances per kernel")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() ? e.get_exit_code() : 2;
  }

  try {
    if (*gen) {
      if (gen_random) scene = synth::random_scene(scene, scene.seed, gen_max_speed);
      synth::gen_sequence(scene, gen_out);
      std::cout << "wrote " << scene.frames << " frames to " << gen_out << "\n";
    } else if (*tr) {
      const RunConfig cfg = load_config(tr_config, tr_set);
      std::optional<fs::path> resume;
      if (!tr_resume.empty()) resume = tr_resume;
      const auto out = run::train(cfg, tr_out, resume, tr_stop, &std::cout);
      std::cout << "checkpoint " << out.checkpoint.string() << "\nlog " << out.log.string() << "\n";
    } else if (*tk) {
      std::string cfg_path = tk_config;
      if (cfg_path.empty()) {
        const fs::path beside = fs::path(tk_ckpt).parent_path() / "manifest.txt";
        if (fs::exists(beside)) cfg_path = beside.string();
      }
      const RunConfig cfg = load_config(cfg_path, tk_set);
      Model model = run::load_model(cfg, tk_ckpt);
      BBox init;
      if (!tk_init.empty()) {
        init = parse_box(tk_init);
      } else {
        const auto gt = io::read_box_csv(fs::path(tk_seq) / "groundtruth.csv");
        if (gt.empty()) throw std::runtime_error("groundtruth.csv has no rows; pass --init");
        init = gt.front().box;
      }
      std::optional<fs::path> sal;
      if (!tk_sal.empty()) sal = tk_sal;
      const auto rows = run::track_sequence(model, cfg.select, tk_seq, init, sal);
      io::write_box_csv(tk_out, rows, true);
      std::cout << "tracked " << rows.size() << " frames -> " << tk_out << "\n";
    } else if (*ev) {
      const auto res = run::evaluate(ev_pred, ev_gt);
      if (ev_out.empty()) {
        std::cout << res.json << "\n";
      } else {
        std::ofstream(ev_out) << res.json << "\n";
        std::printf("precision20 %.4f successAUC %.4f normPrecision %.4f\n", res.precision20, res.success_auc,
                    res.norm_precision);
      }
    } else if (*gc) {
      const auto rep = verify::gradcheck_suite(gc_seeds);
      verify::print_report(std::cout, "gradcheck", rep);
      return rep.pass() ? 0 : 1;
    } else if (*st) {
      const auto rep = verify::oracle_suite(st_instances);
      verify::print_report(std::cout, "selftest", rep);
      return rep.pass() ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
