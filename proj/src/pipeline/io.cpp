#include "tvis/pipeline/io.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace tvis::pipeline {

using nlohmann::json;

namespace {

json mask_to_json(const BinaryMask& m) {
  json j;
  j["size"] = {m.height, m.width};
  j["counts"] = m.counts;
  return j;
}

BinaryMask mask_from_json(const json& j) {
  BinaryMask m;
  m.height = j.at("size")[0].get<int>();
  m.width = j.at("size")[1].get<int>();
  m.counts = j.at("counts").get<std::vector<std::uint32_t>>();
  return m;
}

json object_to_json(const ObjectRecord& o) {
  json j;
  if (o.track_id) j["track_id"] = *o.track_id;
  j["bbox"] = {o.bbox.x1, o.bbox.y1, o.bbox.x2, o.bbox.y2};
  j["class_id"] = o.class_id;
  j["confidence"] = o.confidence;
  if (o.embedding.size() > 0)
    j["embedding"] = std::vector<Real>(o.embedding.data(), o.embedding.data() + o.embedding.size());
  j["mask"] = mask_to_json(o.mask);
  if (o.refined) j["refined"] = *o.refined;
  return j;
}

ObjectRecord object_from_json(const json& j) {
  ObjectRecord o;
  if (j.contains("track_id")) o.track_id = j["track_id"].get<int>();
  const auto& b = j.at("bbox");
  o.bbox = {b[0].get<Real>(), b[1].get<Real>(), b[2].get<Real>(), b[3].get<Real>()};
  o.class_id = j.at("class_id").get<int>();
  o.confidence = j.at("confidence").get<Real>();
  if (j.contains("embedding")) {
    auto v = j["embedding"].get<std::vector<Real>>();
    o.embedding = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  o.mask = mask_from_json(j.at("mask"));
  if (j.contains("refined")) o.refined = j["refined"].get<bool>();
  return o;
}

}  // namespace

std::vector<FrameRecord> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_jsonl: cannot open " + path);
  std::vector<FrameRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    FrameRecord r;
    r.video_id = j.at("video_id").get<std::string>();
    r.frame_index = j.at("frame_index").get<int>();
    for (const auto& jo : j.at("objects")) r.objects.push_back(object_from_json(jo));
    out.push_back(std::move(r));
  }
  return out;
}

void write_jsonl(const std::string& path, const std::vector<FrameRecord>& records) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_jsonl: cannot open " + path);
  for (const FrameRecord& r : records) {
    json j;
    j["video_id"] = r.video_id;
    j["frame_index"] = r.frame_index;
    j["objects"] = json::array();
    for (const ObjectRecord& o : r.objects) j["objects"].push_back(object_to_json(o));
    out << j.dump() << "\n";
  }
}

namespace {

constexpr char kFeatureMagic[8] = {'T', 'V', 'F', 'M', '0', '0', '0', '1'};
constexpr char kCheckpointMagic[8] = {'T', 'V', 'C', 'K', '0', '0', '0', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("unexpected end of binary file");
  return v;
}

}  // namespace

void write_features(const std::string& path, const std::vector<refine::FeatureMap>& frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_features: cannot open " + path);
  out.write(kFeatureMagic, sizeof(kFeatureMagic));
  write_u32(out, static_cast<std::uint32_t>(frames.size()));
  for (const auto& fm : frames) {
    write_u32(out, static_cast<std::uint32_t>(fm.channels()));
    write_u32(out, static_cast<std::uint32_t>(fm.height));
    write_u32(out, static_cast<std::uint32_t>(fm.width));
    out.write(reinterpret_cast<const char*>(fm.data.data()),
              static_cast<std::streamsize>(fm.data.size() * sizeof(Real)));
  }
}

std::vector<refine::FeatureMap> read_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_features: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kFeatureMagic, sizeof(magic)) != 0)
    throw std::runtime_error("read_features: bad magic in " + path);
  const std::uint32_t count = read_u32(in);
  std::vector<refine::FeatureMap> out(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t ch = read_u32(in);
    const std::uint32_t h = read_u32(in);
    const std::uint32_t w = read_u32(in);
    out[i].height = static_cast<int>(h);
    out[i].width = static_cast<int>(w);
    out[i].data.resize(ch, static_cast<Eigen::Index>(h) * w);
    in.read(reinterpret_cast<char*>(out[i].data.data()),
            static_cast<std::streamsize>(out[i].data.size() * sizeof(Real)));
    if (!in) throw std::runtime_error("read_features: truncated file " + path);
  }
  return out;
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const ModelDims& d = model.dims;
  for (int v : {d.embed_dim, d.num_heads, d.ff_dim, d.contrastive_dim, d.num_classes,
                d.det_embed_dim, d.feature_dim, d.mask_stride})
    write_u32(out, static_cast<std::uint32_t>(v));

  auto refs = tensor_refs(const_cast<Model&>(model));
  write_u32(out, static_cast<std::uint32_t>(refs.size()));
  for (const TensorRef& r : refs) {
    write_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    write_u32(out, static_cast<std::uint32_t>(r.rows));
    write_u32(out, static_cast<std::uint32_t>(r.cols));
    out.write(reinterpret_cast<const char*>(r.data),
              static_cast<std::streamsize>(r.size * sizeof(Real)));
  }
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path);

  ModelDims d;
  d.embed_dim = static_cast<int>(read_u32(in));
  d.num_heads = static_cast<int>(read_u32(in));
  d.ff_dim = static_cast<int>(read_u32(in));
  d.contrastive_dim = static_cast<int>(read_u32(in));
  d.num_classes = static_cast<int>(read_u32(in));
  d.det_embed_dim = static_cast<int>(read_u32(in));
  d.feature_dim = static_cast<int>(read_u32(in));
  d.mask_stride = static_cast<int>(read_u32(in));

  Model model = Model::init(d, 0);
  auto refs = tensor_refs(model);
  const std::uint32_t count = read_u32(in);
  if (count != refs.size()) throw std::runtime_error("load_checkpoint: tensor count mismatch");
  for (TensorRef& r : refs) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rows = read_u32(in);
    const std::uint32_t cols = read_u32(in);
    if (name != r.name || static_cast<Eigen::Index>(rows) != r.rows ||
        static_cast<Eigen::Index>(cols) != r.cols)
      throw std::runtime_error("load_checkpoint: tensor layout mismatch at " + name);
    in.read(reinterpret_cast<char*>(r.data), static_cast<std::streamsize>(r.size * sizeof(Real)));
    if (!in) throw std::runtime_error("load_checkpoint: truncated file");
  }
  return model;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  json j;
  j["train_videos"] = m.train_videos;
  j["eval_videos"] = m.eval_videos;
  j["det_embed_dim"] = m.det_embed_dim;
  j["feature_dim"] = m.feature_dim;
  j["stride"] = m.stride;
  j["canvas"] = {m.canvas_h, m.canvas_w};
  j["num_classes"] = m.num_classes;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_manifest: cannot open " + path);
  out << j.dump(2) << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_manifest: cannot open " + path);
  json j = json::parse(in);
  DatasetManifest m;
  m.train_videos = j.at("train_videos").get<std::vector<std::string>>();
  m.eval_videos = j.at("eval_videos").get<std::vector<std::string>>();
  m.det_embed_dim = j.at("det_embed_dim").get<int>();
  m.feature_dim = j.at("feature_dim").get<int>();
  m.stride = j.at("stride").get<int>();
  m.canvas_h = j.at("canvas")[0].get<int>();
  m.canvas_w = j.at("canvas")[1].get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  return m;
}

}  // namespace tvis::pipeline
