// Command-line front end: dataset synthesis, training, inference, evaluation,
// and the diagnostic reports (window sweep, CDN ablation, gradient checks,
// attention cost).

#include "tvis/pipeline/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace tvis;
using nlohmann::json;

namespace {

void emit(const json& report, bool as_json, const std::string& human) {
  if (as_json)
    std::cout << report.dump(2) << std::endl;
  else
    std::cout << human << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video instance segmentation with temporal refinement"};
  app.require_subcommand(1);
  app.fallthrough();  // global --config/--json may follow the subcommand

  std::string config_path, data_dir = "data", checkpoint = "model.ckpt";
  bool as_json = false;
  app.add_option("--config", config_path, "sectioned key=value config file")
      ->envname("TVIS_CONFIG");
  app.add_flag("--json", as_json, "machine-readable JSON report on stdout");

  auto load_rc = [&]() {
    return config_path.empty()
               ? pipeline::default_run_config()
               : pipeline::resolve_config(pipeline::Config::parse_file(config_path));
  };

  // --- synth-gen ---------------------------------------------------------
  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic occluded-video dataset");
  int train_videos = 40, eval_videos = 10;
  std::uint64_t synth_seed = 7;
  synth->add_option("--out", data_dir, "output dataset directory")->required();
  synth->add_option("--train-videos", train_videos);
  synth->add_option("--eval-videos", eval_videos);
  synth->add_option("--seed", synth_seed);
  synth->callback([&]() {
    pipeline::SynthGenOptions opts;
    opts.out_dir = data_dir;
    opts.train_videos = train_videos;
    opts.eval_videos = eval_videos;
    opts.seed = synth_seed;
    opts.synth = load_rc().synth;
    json r = pipeline::cmd_synth_gen(opts);
    emit(r, as_json,
         "wrote " + std::to_string(train_videos) + "+" + std::to_string(eval_videos) +
             " videos to " + data_dir + " (" + std::to_string(r["dropped"].get<int>()) +
             " occlusion drops)");
  });

  // --- train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train on a generated dataset");
  std::uint64_t train_seed = 0;
  int train_steps = 0;
  train->add_option("--data", data_dir, "dataset directory")->required();
  train->add_option("--out", checkpoint, "checkpoint output path");
  train->add_option("--seed", train_seed, "overrides the config seed");
  train->add_option("--steps", train_steps, "overrides the config step count");
  train->callback([&]() {
    pipeline::RunConfig rc = load_rc();
    if (train_seed != 0) rc.train.seed = train_seed;
    if (train_steps != 0) rc.train.steps = train_steps;
    json r = pipeline::cmd_train(data_dir, rc, checkpoint);
    emit(r, as_json,
         "trained " + std::to_string(rc.train.steps) + " steps; total loss " +
             std::to_string(r["first_total"].get<double>()) + " -> " +
             std::to_string(r["last50_total"].get<double>()) + "; saved " + checkpoint);
  });

  // --- infer ---------------------------------------------------------------
  auto* infer = app.add_subcommand("infer", "run association + refinement on detections");
  std::string mode = "offline", split = "eval", out_path = "predictions.jsonl";
  std::string feedback = "on";
  int window = -1;
  infer->add_option("--data", data_dir, "dataset directory")->required();
  infer->add_option("--checkpoint", checkpoint)->required();
  infer->add_option("--split", split, "train|eval");
  infer->add_option("--mode", mode, "online|offline");
  infer->add_option("--window", window, "temporal window (0 disables refinement)");
  infer->add_option("--feedback", feedback, "on|off (online mode)");
  infer->add_option("--out", out_path, "predictions JSONL path");
  infer->callback([&]() {
    pipeline::RunConfig rc = load_rc();
    rc.mode = mode;
    if (window >= 0) rc.window = window;
    rc.feedback = feedback != "off";
    json r = pipeline::cmd_infer(data_dir, split, checkpoint, rc, out_path);
    emit(r, as_json,
         "wrote " + std::to_string(r["emitted_objects"].get<int>()) + " predictions to " +
             out_path);
  });

  // --- eval ----------------------------------------------------------------
  auto* evalc = app.add_subcommand("eval", "score predictions against ground truth");
  std::string pred_path, gt_path;
  evalc->add_option("--pred", pred_path)->required();
  evalc->add_option("--gt", gt_path)->required();
  evalc->callback([&]() {
    json r = pipeline::cmd_eval(pred_path, gt_path);
    eval::ApReport rep;
    rep.ap = r["ap"].get<double>();
    rep.ap50 = r["ap50"].get<double>();
    rep.ap75 = r["ap75"].get<double>();
    rep.ar1 = r["ar1"].get<double>();
    rep.ar10 = r["ar10"].get<double>();
    emit(r, as_json, pipeline::report_table(rep));
  });

  // --- sweep-window ----------------------------------------------------------
  auto* sweep = app.add_subcommand("sweep-window", "AP as a function of the temporal window");
  std::vector<int> windows = {0, 2, 4, 8, 10, 16, 20};
  sweep->add_option("--data", data_dir)->required();
  sweep->add_option("--checkpoint", checkpoint)->required();
  sweep->add_option("--windows", windows, "window lengths to evaluate");
  sweep->callback([&]() {
    json r = pipeline::cmd_sweep_window(data_dir, checkpoint, load_rc(), windows);
    std::string table = "  W    AP\n";
    for (const auto& row : r["windows"]) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "  %-4d %.1f\n", row["window"].get<int>(),
                    100.0 * row["ap"].get<double>());
      table += buf;
    }
    emit(r, as_json, table);
  });

  // --- grad-check -------------------------------------------------------------
  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient verification");
  std::uint64_t gc_seed = 1234;
  int gc_instances = 20;
  grad->add_option("--seed", gc_seed);
  grad->add_option("--instances", gc_instances);
  grad->callback([&]() {
    json r = pipeline::cmd_grad_check(gc_seed, gc_instances);
    std::string human = r["pass"].get<bool>() ? "PASS" : "FAIL";
    human += " (max rel err " + std::to_string(r["max_rel_err"].get<double>()) + " over " +
             std::to_string(gc_instances) + " instances)";
    emit(r, as_json, human);
    if (!r["pass"].get<bool>()) throw CLI::RuntimeError(1);
  });

  // --- flops -------------------------------------------------------------------
  auto* flops = app.add_subcommand("flops", "analytic refinement cost per window");
  int fw_window = 10, fw_embed = 256, fw_heads = 8, fw_ff = 1024, fw_classes = 0, fw_kernel = 0;
  flops->add_option("--window", fw_window);
  flops->add_option("--embed", fw_embed);
  flops->add_option("--heads", fw_heads);
  flops->add_option("--ff", fw_ff);
  flops->add_option("--classes", fw_classes);
  flops->add_option("--kernel-dim", fw_kernel);
  flops->callback([&]() {
    json r = pipeline::cmd_flops(fw_window, fw_embed, fw_heads, fw_ff, fw_classes, fw_kernel);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "window %d, embed %d: %.3f MFLOPs per window (%lld MACs; attention term %lld"
                  " MACs).\nreference figure for a 10-frame window: %.1f MFLOPs",
                  fw_window, fw_embed, r["mflops_per_window"].get<double>(),
                  static_cast<long long>(r["macs_per_window"].get<std::int64_t>()),
                  static_cast<long long>(r["attention_term_macs"].get<std::int64_t>()),
                  r["reference_mflops_10frame"].get<double>());
    emit(r, as_json, buf);
  });

  // --- ablate-cdn -----------------------------------------------------------------
  auto* ablate = app.add_subcommand("ablate-cdn", "denoising-query ablation over seeds");
  std::vector<std::uint64_t> ab_seeds = {1, 2, 3};
  int ab_jobs = 2;
  ablate->add_option("--data", data_dir)->required();
  ablate->add_option("--seeds", ab_seeds);
  ablate->add_option("--jobs", ab_jobs);
  ablate->callback([&]() {
    json r = pipeline::cmd_ablate_cdn(data_dir, load_rc(), ab_seeds, ab_jobs);
    std::string table = "  config               frame AP  refined AP\n";
    for (const auto& row : r["rows"]) {
      char buf[128];
      std::snprintf(buf, sizeof(buf), "  %-20s %-9.1f %.1f\n",
                    row["config"].get<std::string>().c_str(),
                    100.0 * row["mean_frame_ap"].get<double>(),
                    100.0 * row["mean_refined_ap"].get<double>());
      table += buf;
    }
    emit(r, as_json, table);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
