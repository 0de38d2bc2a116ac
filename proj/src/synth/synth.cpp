#include "tvis/synth/synth.hpp"

#include "tvis/core/box.hpp"
#include "tvis/core/mask.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tvis::synth {

namespace {

struct MovingShape {
  int track_id;
  int class_id;   // 0 rectangle, 1 ellipse (cycled for more classes)
  Real half_w, half_h;
  Real cx, cy;
  Real vx, vy;
};

// Full (unoccluded) raster of one shape; pixel centers at (r+0.5, c+0.5).
MaskGrid raster_shape(const MovingShape& s, int h, int w) {
  MaskGrid grid = MaskGrid::Zero(h, w);
  const int r0 = std::max(0, static_cast<int>(std::floor(s.cy - s.half_h)));
  const int r1 = std::min(h - 1, static_cast<int>(std::ceil(s.cy + s.half_h)));
  const int c0 = std::max(0, static_cast<int>(std::floor(s.cx - s.half_w)));
  const int c1 = std::min(w - 1, static_cast<int>(std::ceil(s.cx + s.half_w)));
  const bool ellipse = s.class_id % 2 == 1;
  for (int c = c0; c <= c1; ++c) {
    for (int r = r0; r <= r1; ++r) {
      const Real py = r + 0.5, px = c + 0.5;
      bool inside;
      if (ellipse) {
        const Real dy = (py - s.cy) / s.half_h;
        const Real dx = (px - s.cx) / s.half_w;
        inside = dx * dx + dy * dy <= 1.0;
      } else {
        inside = std::abs(px - s.cx) <= s.half_w && std::abs(py - s.cy) <= s.half_h;
      }
      if (inside) grid(r, c) = 1;
    }
  }
  return grid;
}

BBox tight_box(const MaskGrid& grid) {
  int rmin = -1, rmax = -1, cmin = -1, cmax = -1;
  for (int c = 0; c < grid.cols(); ++c)
    for (int r = 0; r < grid.rows(); ++r)
      if (grid(r, c)) {
        if (rmin < 0 || r < rmin) rmin = r;
        if (r > rmax) rmax = r;
        if (cmin < 0 || c < cmin) cmin = c;
        if (c > cmax) cmax = c;
      }
  BBox b;
  if (rmin < 0) return b;
  b.x1 = static_cast<Real>(cmin) / grid.cols();
  b.x2 = static_cast<Real>(cmax + 1) / grid.cols();
  b.y1 = static_cast<Real>(rmin) / grid.rows();
  b.y2 = static_cast<Real>(rmax + 1) / grid.rows();
  return b;
}

}  // namespace

namespace {

// Gram-Schmidt a fresh gaussian row against the rows of `against` (and the
// already-filled rows of `out`).
void fill_orthonormal_rows(Mat& out, const Mat* against, std::mt19937_64& rng) {
  std::normal_distribution<Real> gauss(0.0, 1.0);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Vec v(out.cols());
    for (Eigen::Index k = 0; k < v.size(); ++k) v(k) = gauss(rng);
    if (against)
      for (Eigen::Index p = 0; p < against->rows(); ++p)
        v -= v.dot(against->row(p)) * against->row(p).transpose();
    for (Eigen::Index p = 0; p < r; ++p) v -= v.dot(out.row(p)) * out.row(p).transpose();
    out.row(r) = v.normalized().transpose();
  }
}

}  // namespace

Mat appearance_projection(int feature_dim, int det_embed_dim) {
  if (feature_dim < 2) throw std::invalid_argument("appearance_projection: feature_dim < 2");
  if (feature_dim - 1 > det_embed_dim)
    throw std::invalid_argument("appearance_projection: more channels than embedding dims");
  // Fixed seed and orthonormal rows: the same projection must hold across
  // every generated video so one linear mask head can serve all of them.
  std::mt19937_64 rng(0x7779A0FEULL);
  Mat p(feature_dim - 1, det_embed_dim);
  fill_orthonormal_rows(p, nullptr, rng);
  return p;
}

Mat class_directions(int num_classes, int det_embed_dim, int feature_dim) {
  if (num_classes + feature_dim - 1 > det_embed_dim)
    throw std::invalid_argument("class_directions: embedding dimension too small");
  // Prototypes live in the null space of the appearance projection so class
  // identity never leaks into the segmentation features.
  const Mat p = appearance_projection(feature_dim, det_embed_dim);
  std::mt19937_64 rng(0x51A55E5DULL);
  Mat d(num_classes, det_embed_dim);
  fill_orthonormal_rows(d, &p, rng);
  return d;
}

SynthVideo generate_video(const SynthConfig& cfg, std::uint64_t seed,
                          const std::string& video_id) {
  if (cfg.frames < 1 || cfg.num_objects < 1)
    throw std::invalid_argument("generate_video: frames and objects must be >= 1");
  if (cfg.max_size >= std::min(cfg.canvas_h, cfg.canvas_w))
    throw std::invalid_argument("generate_video: objects larger than canvas");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::normal_distribution<Real> gauss(0.0, 1.0);

  SynthVideo video;
  video.video_id = video_id;
  video.canvas_h = cfg.canvas_h;
  video.canvas_w = cfg.canvas_w;
  video.num_classes = cfg.num_classes;

  const Mat proj = appearance_projection(cfg.feature_dim, cfg.det_embed_dim);
  const Mat classes = class_directions(cfg.num_classes, cfg.det_embed_dim, cfg.feature_dim);
  if (cfg.num_objects > cfg.feature_dim - 1)
    throw std::invalid_argument("generate_video: more objects than identity channels");
  // Per-video track identities, orthonormal in feature space.
  Mat idents(cfg.num_objects, cfg.feature_dim - 1);
  fill_orthonormal_rows(idents, nullptr, rng);

  std::vector<MovingShape> shapes;
  for (int i = 0; i < cfg.num_objects; ++i) {
    MovingShape s;
    s.track_id = i + 1;
    s.class_id = i % cfg.num_classes;
    s.half_w = 0.5 * (cfg.min_size + unit(rng) * (cfg.max_size - cfg.min_size));
    s.half_h = 0.5 * (cfg.min_size + unit(rng) * (cfg.max_size - cfg.min_size));
    s.cx = s.half_w + unit(rng) * (cfg.canvas_w - 2 * s.half_w);
    s.cy = s.half_h + unit(rng) * (cfg.canvas_h - 2 * s.half_h);
    const Real speed = cfg.min_speed + unit(rng) * (cfg.max_speed - cfg.min_speed);
    const Real angle = unit(rng) * 2.0 * M_PI;
    s.vx = speed * std::cos(angle);
    s.vy = speed * std::sin(angle);
    shapes.push_back(s);

    // Appearance = class prototype + identity; the identity lifts the
    // orthonormal feature-space direction back into embedding space, so the
    // appearance projection maps it onto exactly that direction again.
    Vec ident = proj.transpose() * idents.row(i).transpose();
    Vec base = classes.row(s.class_id).transpose() + ident;
    video.track_base.push_back(base.normalized());
    video.track_class.push_back(s.class_id);
  }

  const int fh = cfg.canvas_h / cfg.stride, fw = cfg.canvas_w / cfg.stride;
  constexpr Real kFeatureGain = 2.0;

  for (int t = 0; t < cfg.frames; ++t) {
    // Painter's order: higher track id drawn later, occluding lower ids.
    Eigen::MatrixXi owner = Eigen::MatrixXi::Constant(cfg.canvas_h, cfg.canvas_w, -1);
    std::vector<std::int64_t> full_area(shapes.size(), 0);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      MaskGrid full = raster_shape(shapes[i], cfg.canvas_h, cfg.canvas_w);
      full_area[i] = full.cast<std::int64_t>().sum();
      for (int c = 0; c < cfg.canvas_w; ++c)
        for (int r = 0; r < cfg.canvas_h; ++r)
          if (full(r, c)) owner(r, c) = static_cast<int>(i);
    }

    GtFrame frame;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      MaskGrid visible = (owner.array() == static_cast<int>(i)).cast<std::uint8_t>();
      const std::int64_t vis_area = visible.cast<std::int64_t>().sum();
      if (vis_area == 0) continue;
      GtObject obj;
      obj.track_id = shapes[i].track_id;
      obj.class_id = shapes[i].class_id;
      obj.bbox = tight_box(visible);
      obj.visible_mask = rle_encode(visible);
      obj.visible_fraction =
          full_area[i] > 0 ? static_cast<Real>(vis_area) / full_area[i] : 0.0;
      frame.objects.push_back(std::move(obj));
    }
    video.frames.push_back(std::move(frame));

    // Feature map: majority owner per stride cell sets the identity channels.
    refine::FeatureMap fm;
    fm.height = fh;
    fm.width = fw;
    fm.data = Mat::Zero(cfg.feature_dim, static_cast<Eigen::Index>(fh) * fw);
    for (int cx = 0; cx < fw; ++cx) {
      for (int cy = 0; cy < fh; ++cy) {
        std::vector<int> votes(shapes.size() + 1, 0);  // last slot = background
        for (int dx = 0; dx < cfg.stride; ++dx)
          for (int dy = 0; dy < cfg.stride; ++dy) {
            const int o = owner(cy * cfg.stride + dy, cx * cfg.stride + dx);
            ++votes[o < 0 ? shapes.size() : o];
          }
        int best = static_cast<int>(shapes.size());
        for (std::size_t i = 0; i < shapes.size(); ++i)
          if (votes[i] > votes[best]) best = static_cast<int>(i);

        Vec f = Vec::Zero(cfg.feature_dim);
        f(0) = 1.0;
        if (best < static_cast<int>(shapes.size()))
          f.tail(cfg.feature_dim - 1) = kFeatureGain * (proj * video.track_base[best]);
        for (int ch = 0; ch < cfg.feature_dim; ++ch) f(ch) += cfg.feature_noise * gauss(rng);
        fm.data.col(fm.pixel(cy, cx)) = f;
      }
    }
    video.features.push_back(std::move(fm));

    // Advance with wall bounce.
    for (MovingShape& s : shapes) {
      s.cx += s.vx;
      s.cy += s.vy;
      if (s.cx - s.half_w < 0) {
        s.cx = 2 * s.half_w - s.cx;
        s.vx = -s.vx;
      } else if (s.cx + s.half_w > cfg.canvas_w) {
        s.cx = 2 * (cfg.canvas_w - s.half_w) - s.cx;
        s.vx = -s.vx;
      }
      if (s.cy - s.half_h < 0) {
        s.cy = 2 * s.half_h - s.cy;
        s.vy = -s.vy;
      } else if (s.cy + s.half_h > cfg.canvas_h) {
        s.cy = 2 * (cfg.canvas_h - s.half_h) - s.cy;
        s.vy = -s.vy;
      }
    }
  }
  return video;
}

std::vector<std::vector<SimDetection>> simulate_detector(const SynthVideo& video,
                                                         const SynthConfig& cfg,
                                                         std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> unit(0.0, 1.0);
  std::normal_distribution<Real> gauss(0.0, 1.0);

  // Per-track appearance drift directions.
  std::vector<Vec> drift_dir;
  for (std::size_t i = 0; i < video.track_base.size(); ++i) {
    Vec d(video.track_base[i].size());
    for (Eigen::Index k = 0; k < d.size(); ++k) d(k) = gauss(rng);
    drift_dir.push_back(d.normalized());
  }

  std::vector<std::vector<SimDetection>> out(video.frames.size());
  for (std::size_t t = 0; t < video.frames.size(); ++t) {
    for (const GtObject& obj : video.frames[t].objects) {
      if (obj.visible_fraction < cfg.theta_occ && unit(rng) < cfg.p_drop) continue;

      SimDetection det;
      det.frame_index = static_cast<int>(t);
      det.source_track = obj.track_id;
      det.class_id = obj.class_id;

      BBox b = obj.bbox;
      if (cfg.box_jitter > 0) {
        b.x1 += (2 * unit(rng) - 1) * cfg.box_jitter;
        b.y1 += (2 * unit(rng) - 1) * cfg.box_jitter;
        b.x2 += (2 * unit(rng) - 1) * cfg.box_jitter;
        b.y2 += (2 * unit(rng) - 1) * cfg.box_jitter;
      }
      det.bbox = clamp_box(b);

      if (cfg.mask_noise > 0) {
        MaskGrid grid = rle_decode(obj.visible_mask);
        for (Eigen::Index j = 0; j < grid.cols(); ++j)
          for (Eigen::Index i = 0; i < grid.rows(); ++i)
            if (grid(i, j) && unit(rng) < cfg.mask_noise) grid(i, j) = 0;
        det.mask = rle_encode(grid);
      } else {
        det.mask = obj.visible_mask;
      }

      const Real conf = 0.55 + 0.45 * obj.visible_fraction + cfg.conf_noise * gauss(rng);
      det.confidence = std::clamp<Real>(conf, 0.05, 1.0);

      const int track_idx = obj.track_id - 1;
      Vec e = video.track_base.at(track_idx) +
              cfg.drift_rate * static_cast<Real>(t) * drift_dir[track_idx];
      for (Eigen::Index k = 0; k < e.size(); ++k) e(k) += cfg.embed_noise * gauss(rng);
      det.embedding = e;

      out[t].push_back(std::move(det));
    }

    if (cfg.clutter_rate > 0) {
      std::poisson_distribution<int> howmany(cfg.clutter_rate);
      const int extras = howmany(rng);
      for (int k = 0; k < extras; ++k) {
        SimDetection det;
        det.frame_index = static_cast<int>(t);
        det.source_track = -1;
        det.class_id = static_cast<int>(unit(rng) * video.num_classes) % video.num_classes;
        const Real cx = unit(rng), cy = unit(rng), half = 0.05 + 0.1 * unit(rng);
        det.bbox = clamp_box({cx - half, cy - half, cx + half, cy + half});
        det.confidence = 0.3 + 0.5 * unit(rng);
        det.mask = empty_mask(video.canvas_h, video.canvas_w);
        Vec e(video.track_base.empty() ? 16 : video.track_base[0].size());
        for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = gauss(rng);
        det.embedding = e.normalized();
        out[t].push_back(std::move(det));
      }
    }
  }
  return out;
}

}  // namespace tvis::synth
