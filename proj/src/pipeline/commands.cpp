#include "tvis/pipeline/commands.hpp"

#include "tvis/nn/gradcheck.hpp"

#include <filesystem>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace tvis::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

RunConfig default_run_config() { return RunConfig{}; }

RunConfig resolve_config(const Config& f) {
  RunConfig rc;
  rc.dims.embed_dim = f.get_int("model", "embed_dim", rc.dims.embed_dim);
  rc.dims.num_heads = f.get_int("model", "num_heads", rc.dims.num_heads);
  rc.dims.ff_dim = f.get_int("model", "ff_dim", rc.dims.ff_dim);
  rc.dims.contrastive_dim = f.get_int("model", "contrastive_dim", rc.dims.contrastive_dim);
  rc.dims.num_classes = f.get_int("model", "num_classes", rc.dims.num_classes);
  rc.dims.det_embed_dim = f.get_int("model", "det_embed_dim", rc.dims.det_embed_dim);
  rc.dims.feature_dim = f.get_int("model", "feature_dim", rc.dims.feature_dim);
  rc.dims.mask_stride = f.get_int("model", "mask_stride", rc.dims.mask_stride);

  rc.assoc.tau_match = f.get_real("association", "tau_match", rc.assoc.tau_match);
  rc.assoc.tau_det = f.get_real("association", "tau_det", rc.assoc.tau_det);
  rc.assoc.momentum = f.get_real("association", "momentum", rc.assoc.momentum);
  rc.assoc.max_age = f.get_int("association", "max_age", rc.assoc.max_age);
  rc.assoc.temperature = f.get_real("association", "temperature", rc.assoc.temperature);
  rc.assoc.use_hungarian = f.get_bool("association", "use_hungarian", rc.assoc.use_hungarian);

  rc.mode = f.get_string("refine", "mode", rc.mode);
  rc.window = f.get_int("refine", "window", rc.window);
  rc.feedback = f.get_bool("refine", "feedback", rc.feedback);

  rc.train.cdn.groups = f.get_int("cdn", "groups", rc.train.cdn.groups);
  rc.train.cdn.lambda_pos = f.get_real("cdn", "lambda_pos", rc.train.cdn.lambda_pos);
  rc.train.cdn.lambda_neg = f.get_real("cdn", "lambda_neg", rc.train.cdn.lambda_neg);
  rc.train.cdn.flip_prob = f.get_real("cdn", "flip_prob", rc.train.cdn.flip_prob);
  rc.train.cdn.enable_association_cdn =
      f.get_bool("cdn", "enable_association_cdn", rc.train.cdn.enable_association_cdn);
  rc.train.cdn.enable_temporal_cdn =
      f.get_bool("cdn", "enable_temporal_cdn", rc.train.cdn.enable_temporal_cdn);
  rc.train.cdn.mirror_association =
      f.get_bool("cdn", "mirror_association", rc.train.cdn.mirror_association);
  rc.train.enable_frame_cdn = f.get_bool("cdn", "enable_frame_cdn", rc.train.enable_frame_cdn);

  rc.train.adam.lr = f.get_real("train", "learning_rate", rc.train.adam.lr);
  rc.train.steps = f.get_int("train", "steps", rc.train.steps);
  rc.train.seed = static_cast<std::uint64_t>(f.get_int("train", "seed", 7));
  rc.train.max_frame_gap = f.get_int("train", "max_frame_gap", rc.train.max_frame_gap);
  rc.train.weights.w_frame = f.get_real("train", "w_frame", rc.train.weights.w_frame);
  rc.train.weights.w_assoc = f.get_real("train", "w_assoc", rc.train.weights.w_assoc);
  rc.train.weights.w_refine = f.get_real("train", "w_refine", rc.train.weights.w_refine);
  rc.train.weights.w_focal = f.get_real("train", "w_focal", rc.train.weights.w_focal);
  rc.train.weights.w_bce = f.get_real("train", "w_bce", rc.train.weights.w_bce);
  rc.train.weights.w_dice = f.get_real("train", "w_dice", rc.train.weights.w_dice);
  rc.train.weights.w_l1 = f.get_real("train", "w_l1", rc.train.weights.w_l1);
  rc.train.weights.w_giou = f.get_real("train", "w_giou", rc.train.weights.w_giou);
  rc.train.weights.focal_gamma = f.get_real("train", "focal_gamma", rc.train.weights.focal_gamma);
  rc.train.weights.focal_alpha = f.get_real("train", "focal_alpha", rc.train.weights.focal_alpha);

  rc.conf_floor = f.get_real("eval", "conf_floor", rc.conf_floor);

  rc.synth.frames = f.get_int("synth", "frames", rc.synth.frames);
  rc.synth.num_objects = f.get_int("synth", "objects", rc.synth.num_objects);
  rc.synth.num_classes = rc.dims.num_classes;
  rc.synth.det_embed_dim = rc.dims.det_embed_dim;
  rc.synth.feature_dim = rc.dims.feature_dim;
  rc.synth.stride = rc.dims.mask_stride;
  rc.synth.theta_occ = f.get_real("synth", "theta_occ", rc.synth.theta_occ);
  rc.synth.p_drop = f.get_real("synth", "p_drop", rc.synth.p_drop);
  return rc;
}

InferOptions make_infer_options(const RunConfig& rc) {
  InferOptions o;
  o.mode = rc.mode;
  o.window = rc.window;
  o.feedback = rc.feedback;
  o.assoc = rc.assoc;
  o.conf_floor = rc.conf_floor;
  return o;
}

std::vector<eval::TrackPrediction> tracks_from_predictions(
    const std::vector<FrameRecord>& records) {
  std::map<std::pair<std::string, int>, eval::TrackPrediction> grouped;
  for (const FrameRecord& r : records) {
    for (const ObjectRecord& o : r.objects) {
      if (!o.track_id) continue;
      auto& tp = grouped[{r.video_id, *o.track_id}];
      tp.video_id = r.video_id;
      tp.class_id = o.class_id;
      tp.confidence = o.confidence;
      if (!o.mask.empty_mask()) tp.masks[r.frame_index] = o.mask;
    }
  }
  std::vector<eval::TrackPrediction> out;
  for (auto& [key, tp] : grouped) out.push_back(std::move(tp));
  return out;
}

std::vector<eval::GtTrack> tracks_from_gt(const std::vector<FrameRecord>& records) {
  std::map<std::pair<std::string, int>, eval::GtTrack> grouped;
  for (const FrameRecord& r : records) {
    for (const ObjectRecord& o : r.objects) {
      if (!o.track_id) continue;
      auto& gt = grouped[{r.video_id, *o.track_id}];
      gt.video_id = r.video_id;
      gt.track_id = *o.track_id;
      gt.class_id = o.class_id;
      if (!o.mask.empty_mask()) gt.masks[r.frame_index] = o.mask;
    }
  }
  std::vector<eval::GtTrack> out;
  for (auto& [key, gt] : grouped) out.push_back(std::move(gt));
  return out;
}

json report_to_json(const eval::ApReport& r) {
  json j;
  j["ap"] = r.ap;
  j["ap50"] = r.ap50;
  j["ap75"] = r.ap75;
  j["ar1"] = r.ar1;
  j["ar10"] = r.ar10;
  j["num_gt_tracks"] = r.num_gt_tracks;
  j["num_predictions"] = r.num_predictions;
  json per_class = json::object();
  for (const auto& [cls, ap] : r.per_class_ap) per_class[std::to_string(cls)] = ap;
  j["per_class_ap"] = per_class;
  return j;
}

std::string report_table(const eval::ApReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1);
  os << "  AP    AP50  AP75  AR1   AR10\n";
  os << "  " << std::setw(5) << 100 * r.ap << " " << std::setw(5) << 100 * r.ap50 << " "
     << std::setw(5) << 100 * r.ap75 << " " << std::setw(5) << 100 * r.ar1 << " "
     << std::setw(5) << 100 * r.ar10 << "\n";
  return os.str();
}

namespace {

std::vector<FrameRecord> gt_to_records(const synth::SynthVideo& video) {
  std::vector<FrameRecord> records;
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    FrameRecord r;
    r.video_id = video.video_id;
    r.frame_index = static_cast<int>(t);
    for (const synth::GtObject& o : video.frames[t].objects) {
      ObjectRecord rec;
      rec.track_id = o.track_id;
      rec.bbox = o.bbox;
      rec.class_id = o.class_id;
      rec.confidence = 1.0;
      rec.embedding = video.track_base.at(o.track_id - 1);
      rec.mask = o.visible_mask;
      r.objects.push_back(std::move(rec));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<FrameRecord> det_to_records(const synth::SynthVideo& video,
                                        const std::vector<std::vector<synth::SimDetection>>& dets) {
  std::vector<FrameRecord> records;
  for (std::size_t t = 0; t < dets.size(); ++t) {
    FrameRecord r;
    r.video_id = video.video_id;
    r.frame_index = static_cast<int>(t);
    for (const synth::SimDetection& d : dets[t]) {
      ObjectRecord rec;
      rec.track_id = d.source_track;
      rec.bbox = d.bbox;
      rec.class_id = d.class_id;
      rec.confidence = d.confidence;
      rec.embedding = d.embedding;
      rec.mask = d.mask;
      r.objects.push_back(std::move(rec));
    }
    records.push_back(std::move(r));
  }
  return records;
}

eval::ApReport evaluate_predictions(const std::vector<FrameRecord>& preds,
                                    const std::vector<FrameRecord>& gts) {
  return eval::video_ap_report(tracks_from_predictions(preds), tracks_from_gt(gts));
}

}  // namespace

json cmd_synth_gen(const SynthGenOptions& opts) {
  fs::create_directories(opts.out_dir);
  fs::create_directories(opts.out_dir + "/features");

  DatasetManifest manifest;
  manifest.det_embed_dim = opts.synth.det_embed_dim;
  manifest.feature_dim = opts.synth.feature_dim;
  manifest.stride = opts.synth.stride;
  manifest.canvas_h = opts.synth.canvas_h;
  manifest.canvas_w = opts.synth.canvas_w;
  manifest.num_classes = opts.synth.num_classes;

  int gt_objects = 0, detections = 0;
  auto write_split = [&](const std::string& split, int count, std::uint64_t seed_base,
                         std::vector<std::string>& ids) {
    std::vector<FrameRecord> gt_records, det_records;
    for (int v = 0; v < count; ++v) {
      std::ostringstream name;
      name << split << "_" << std::setw(3) << std::setfill('0') << v;
      const std::string id = name.str();
      ids.push_back(id);
      synth::SynthVideo video = synth::generate_video(opts.synth, seed_base + 2 * v, id);
      auto dets = synth::simulate_detector(video, opts.synth, seed_base + 2 * v + 1);
      for (const auto& f : video.frames) gt_objects += static_cast<int>(f.objects.size());
      for (const auto& f : dets) detections += static_cast<int>(f.size());
      auto g = gt_to_records(video);
      auto d = det_to_records(video, dets);
      gt_records.insert(gt_records.end(), g.begin(), g.end());
      det_records.insert(det_records.end(), d.begin(), d.end());
      write_features(opts.out_dir + "/features/" + id + ".feat", video.features);
    }
    write_jsonl(opts.out_dir + "/" + split + "_gt.jsonl", gt_records);
    write_jsonl(opts.out_dir + "/" + split + "_det.jsonl", det_records);
  };
  write_split("train", opts.train_videos, opts.seed * 1000003ULL + 1, manifest.train_videos);
  write_split("eval", opts.eval_videos, opts.seed * 1000003ULL + 500000ULL, manifest.eval_videos);
  write_manifest(opts.out_dir + "/manifest.json", manifest);

  json j;
  j["out_dir"] = opts.out_dir;
  j["train_videos"] = opts.train_videos;
  j["eval_videos"] = opts.eval_videos;
  j["frames_per_video"] = opts.synth.frames;
  j["gt_objects"] = gt_objects;
  j["detections"] = detections;
  j["dropped"] = gt_objects - detections;
  return j;
}

json cmd_train(const std::string& data_dir, const RunConfig& rc,
               const std::string& checkpoint_out) {
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.json");
  ModelDims dims = rc.dims;
  dims.det_embed_dim = manifest.det_embed_dim;
  dims.feature_dim = manifest.feature_dim;
  dims.num_classes = manifest.num_classes;
  dims.mask_stride = manifest.stride;

  const auto videos = load_videos(data_dir, manifest, false);
  TrainResult result = train_model(videos, dims, rc.train);
  if (!checkpoint_out.empty()) save_checkpoint(checkpoint_out, result.model);

  auto window_mean = [&](std::size_t from, std::size_t to, auto proj) {
    Real sum = 0;
    for (std::size_t i = from; i < to; ++i) sum += proj(result.history[i]);
    return to > from ? sum / static_cast<Real>(to - from) : 0.0;
  };
  const std::size_t n = result.history.size();
  const std::size_t tail = n > 50 ? n - 50 : 0;
  json j;
  j["steps"] = rc.train.steps;
  j["seed"] = rc.train.seed;
  j["checkpoint"] = checkpoint_out;
  j["first_total"] = n > 0 ? result.history.front().total : 0.0;
  j["last50_total"] = window_mean(tail, n, [](const StepReport& r) { return r.total; });
  j["last50_frame"] = window_mean(tail, n, [](const StepReport& r) { return r.frame.sum(); });
  j["last50_assoc"] = window_mean(tail, n, [](const StepReport& r) { return r.assoc; });
  j["last50_refine"] = window_mean(tail, n, [](const StepReport& r) { return r.refine; });
  return j;
}

json cmd_infer(const std::string& data_dir, const std::string& split,
               const std::string& checkpoint, const RunConfig& rc,
               const std::string& out_path) {
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.json");
  const Model model = load_checkpoint(checkpoint);
  const auto videos = load_videos(data_dir, manifest, split == "eval");
  const InferOptions opts = make_infer_options(rc);

  std::vector<FrameRecord> all;
  int emitted = 0;
  for (const VideoData& video : videos) {
    InferOutputs out = run_inference(model, video, opts);
    for (auto& r : out.records) {
      emitted += static_cast<int>(r.objects.size());
      all.push_back(std::move(r));
    }
  }
  if (!out_path.empty()) write_jsonl(out_path, all);

  json j;
  j["mode"] = opts.mode;
  j["window"] = opts.window;
  j["feedback"] = opts.feedback;
  j["videos"] = videos.size();
  j["emitted_objects"] = emitted;
  j["output"] = out_path;
  return j;
}

json cmd_eval(const std::string& pred_path, const std::string& gt_path) {
  const auto preds = read_jsonl(pred_path);
  const auto gts = read_jsonl(gt_path);
  const eval::ApReport report = evaluate_predictions(preds, gts);
  return report_to_json(report);
}

json cmd_sweep_window(const std::string& data_dir, const std::string& checkpoint,
                      const RunConfig& rc, const std::vector<int>& windows) {
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.json");
  const Model model = load_checkpoint(checkpoint);
  const auto videos = load_videos(data_dir, manifest, true);
  const auto gt_tracks = tracks_from_gt(read_jsonl(data_dir + "/eval_gt.jsonl"));

  json rows = json::array();
  for (int w : windows) {
    InferOptions opts = make_infer_options(rc);
    opts.mode = "offline";
    opts.window = w;
    std::vector<FrameRecord> all;
    for (const VideoData& video : videos) {
      InferOutputs out = run_inference(model, video, opts);
      for (auto& r : out.records) all.push_back(std::move(r));
    }
    const eval::ApReport report = eval::video_ap_report(tracks_from_predictions(all), gt_tracks);
    json row;
    row["window"] = w;
    row["ap"] = report.ap;
    row["ap50"] = report.ap50;
    row["ap75"] = report.ap75;
    rows.push_back(row);
  }
  json j;
  j["windows"] = rows;
  return j;
}

json cmd_grad_check(std::uint64_t seed, int instances) {
  const auto results = nn::run_gradient_checks(seed, instances);
  json checks = json::array();
  Real worst = 0;
  for (const auto& r : results) {
    json c;
    c["name"] = r.name;
    c["max_rel_err"] = r.max_rel_err;
    c["entries"] = r.entries_checked;
    checks.push_back(c);
    worst = std::max(worst, r.max_rel_err);
  }
  json j;
  j["instances"] = instances;
  j["checks"] = checks;
  j["max_rel_err"] = worst;
  j["tolerance"] = 1e-4;
  j["pass"] = worst < 1e-4;
  return j;
}

json cmd_flops(int window, int embed_dim, int num_heads, int ff_dim, int num_classes,
               int kernel_dim) {
  const std::int64_t macs =
      nn::attention_flop_count(window, embed_dim, num_heads, ff_dim, num_classes, kernel_dim);
  const std::int64_t attn_term = window > 0 ? 2LL * window * window * embed_dim : 0;
  json j;
  j["window"] = window;
  j["embed_dim"] = embed_dim;
  j["num_heads"] = num_heads;
  j["ff_dim"] = ff_dim;
  j["macs_per_window"] = macs;
  j["mflops_per_window"] = 2.0 * static_cast<Real>(macs) / 1e6;  // 2 flops per MAC
  j["attention_term_macs"] = attn_term;
  j["projection_term_macs"] = window > 0 ? 4LL * window * embed_dim * embed_dim : 0;
  j["ffn_term_macs"] = window > 0 ? 2LL * window * embed_dim * ff_dim : 0;
  // Published reference cost for a 10-frame window, for side-by-side reading.
  j["reference_mflops_10frame"] = 2.8;
  return j;
}

json cmd_ablate_cdn(const std::string& data_dir, const RunConfig& rc,
                    const std::vector<std::uint64_t>& seeds, int jobs) {
  const DatasetManifest manifest = read_manifest(data_dir + "/manifest.json");
  ModelDims dims = rc.dims;
  dims.det_embed_dim = manifest.det_embed_dim;
  dims.feature_dim = manifest.feature_dim;
  dims.num_classes = manifest.num_classes;
  dims.mask_stride = manifest.stride;

  const auto train_videos = load_videos(data_dir, manifest, false);
  const auto eval_videos = load_videos(data_dir, manifest, true);
  const auto gt_tracks = tracks_from_gt(read_jsonl(data_dir + "/eval_gt.jsonl"));

  struct ConfigRow {
    std::string name;
    bool assoc_cdn;
    bool temporal_cdn;
  };
  const std::vector<ConfigRow> configs = {{"frame_cdn", false, false},
                                          {"assoc_cdn", true, false},
                                          {"assoc_temporal_cdn", true, true}};

  struct Task {
    int config_idx;
    std::uint64_t seed;
    Real frame_ap = 0, refined_ap = 0;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < configs.size(); ++c)
    for (std::uint64_t s : seeds) tasks.push_back({static_cast<int>(c), s});

  auto run_task = [&](Task& task) {
    TrainSettings settings = rc.train;
    settings.seed = task.seed;
    settings.cdn.enable_association_cdn = configs[task.config_idx].assoc_cdn;
    settings.cdn.enable_temporal_cdn = configs[task.config_idx].temporal_cdn;
    TrainResult result = train_model(train_videos, dims, settings);

    auto score = [&](int window) {
      InferOptions opts = make_infer_options(rc);
      opts.mode = "offline";
      opts.window = window;
      std::vector<FrameRecord> all;
      for (const VideoData& video : eval_videos) {
        InferOutputs out = run_inference(result.model, video, opts);
        for (auto& r : out.records) all.push_back(std::move(r));
      }
      return eval::video_ap_report(tracks_from_predictions(all), gt_tracks).ap;
    };
    task.frame_ap = score(0);
    task.refined_ap = score(rc.window);
  };

  if (jobs <= 1) {
    for (Task& t : tasks) run_task(t);
  } else {
    std::mutex mu;
    std::size_t next = 0;
    auto worker = [&]() {
      for (;;) {
        std::size_t idx;
        {
          std::lock_guard lock(mu);
          if (next >= tasks.size()) return;
          idx = next++;
        }
        run_task(tasks[idx]);
      }
    };
    std::vector<std::thread> pool;
    for (int k = 0; k < jobs; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  json rows = json::array();
  for (std::size_t c = 0; c < configs.size(); ++c) {
    json row;
    row["config"] = configs[c].name;
    json frame_aps = json::array(), refined_aps = json::array();
    Real fsum = 0, rsum = 0;
    int count = 0;
    for (const Task& t : tasks) {
      if (t.config_idx != static_cast<int>(c)) continue;
      frame_aps.push_back(t.frame_ap);
      refined_aps.push_back(t.refined_ap);
      fsum += t.frame_ap;
      rsum += t.refined_ap;
      ++count;
    }
    row["seeds"] = seeds;
    row["frame_ap"] = frame_aps;
    row["refined_ap"] = refined_aps;
    row["mean_frame_ap"] = fsum / count;
    row["mean_refined_ap"] = rsum / count;
    rows.push_back(row);
  }
  json j;
  j["rows"] = rows;
  return j;
}

}  // namespace tvis::pipeline
