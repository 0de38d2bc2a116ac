#pragma once

#include "tvis/eval/metrics.hpp"
#include "tvis/pipeline/config.hpp"
#include "tvis/pipeline/infer.hpp"
#include "tvis/pipeline/train.hpp"
#include "tvis/synth/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace tvis::pipeline {

/// Everything a run needs, resolved from the sectioned config file with
/// built-in defaults.
struct RunConfig {
  ModelDims dims;
  TrainSettings train;
  assoc::AssocParams assoc;
  std::string mode = "offline";
  int window = 10;
  bool feedback = true;
  Real conf_floor = 0.05;
  synth::SynthConfig synth;
};

RunConfig resolve_config(const Config& file);
RunConfig default_run_config();

InferOptions make_infer_options(const RunConfig& rc);

std::vector<eval::TrackPrediction> tracks_from_predictions(
    const std::vector<FrameRecord>& records);
std::vector<eval::GtTrack> tracks_from_gt(const std::vector<FrameRecord>& records);

nlohmann::json report_to_json(const eval::ApReport& r);
std::string report_table(const eval::ApReport& r);

// --- CLI command bodies; each returns the machine-readable report ----------

struct SynthGenOptions {
  std::string out_dir;
  int train_videos = 40;
  int eval_videos = 10;
  std::uint64_t seed = 7;
  synth::SynthConfig synth;
};
nlohmann::json cmd_synth_gen(const SynthGenOptions& opts);

nlohmann::json cmd_train(const std::string& data_dir, const RunConfig& rc,
                         const std::string& checkpoint_out);

nlohmann::json cmd_infer(const std::string& data_dir, const std::string& split,
                         const std::string& checkpoint, const RunConfig& rc,
                         const std::string& out_path);

nlohmann::json cmd_eval(const std::string& pred_path, const std::string& gt_path);

nlohmann::json cmd_sweep_window(const std::string& data_dir, const std::string& checkpoint,
                                const RunConfig& rc, const std::vector<int>& windows);

nlohmann::json cmd_grad_check(std::uint64_t seed, int instances);

nlohmann::json cmd_flops(int window, int embed_dim, int num_heads, int ff_dim, int num_classes,
                         int kernel_dim);

nlohmann::json cmd_ablate_cdn(const std::string& data_dir, const RunConfig& rc,
                              const std::vector<std::uint64_t>& seeds, int jobs);

}  // namespace tvis::pipeline
