#include "tvis/assoc/tracker.hpp"

#include "tvis/nn/ops.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace tvis::assoc {

const MemoryEntry* AssocMemory::find(int track_id) const {
  for (const auto& e : entries)
    if (e.track_id == track_id) return &e;
  return nullptr;
}

Mat bi_softmax_similarity(const Mat& cosine, Real temperature, Real background) {
  if (cosine.size() == 0) return cosine;
  // Each softmax competes against a virtual "novel object" alternative at
  // cosine = background; without it a 1x1 score matrix always saturates to 1.
  const Eigen::Index n = cosine.rows(), m = cosine.cols();
  Mat rows(n, m + 1), cols(m, n + 1);
  rows.leftCols(m) = temperature * cosine;
  rows.col(m).setConstant(temperature * background);
  cols.leftCols(n) = temperature * cosine.transpose();
  cols.col(n).setConstant(temperature * background);
  Mat by_row = nn::softmax_rows(rows).leftCols(m);
  Mat by_col = nn::softmax_rows(cols).leftCols(n).transpose();
  return (by_row.array() * by_col.array()).sqrt();
}

std::vector<std::pair<int, int>> greedy_match(const Mat& scores, Real threshold) {
  struct Cell {
    Real score;
    int i, j;
  };
  std::vector<Cell> cells;
  cells.reserve(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.rows(); ++i)
    for (Eigen::Index j = 0; j < scores.cols(); ++j)
      if (scores(i, j) >= threshold)
        cells.push_back({scores(i, j), static_cast<int>(i), static_cast<int>(j)});
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  });

  std::vector<char> row_used(scores.rows(), 0), col_used(scores.cols(), 0);
  std::vector<std::pair<int, int>> out;
  for (const Cell& c : cells) {
    if (row_used[c.i] || col_used[c.j]) continue;
    row_used[c.i] = col_used[c.j] = 1;
    out.emplace_back(c.i, c.j);
  }
  return out;
}

namespace {

// Kuhn-Munkres with potentials; cost minimization, requires rows <= cols.
std::vector<int> hungarian_min(const Mat& cost) {
  const int n = static_cast<int>(cost.rows());
  const int m = static_cast<int>(cost.cols());
  const Real inf = std::numeric_limits<Real>::infinity();
  std::vector<Real> u(n + 1, 0), v(m + 1, 0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<Real> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      int j1 = -1;
      Real delta = inf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const Real cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
  return row_to_col;
}

}  // namespace

std::vector<std::pair<int, int>> hungarian_match(const Mat& scores, Real threshold) {
  std::vector<std::pair<int, int>> out;
  if (scores.rows() == 0 || scores.cols() == 0) return out;
  const bool transposed = scores.rows() > scores.cols();
  Mat cost = transposed ? Mat(-scores.transpose()) : Mat(-scores);
  std::vector<int> row_to_col = hungarian_min(cost);
  for (int r = 0; r < static_cast<int>(row_to_col.size()); ++r) {
    const int c = row_to_col[r];
    if (c < 0) continue;
    const int i = transposed ? c : r;
    const int j = transposed ? r : c;
    if (scores(i, j) >= threshold) out.emplace_back(i, j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<Assignment> associate_frame(const std::vector<FrameDetection>& dets,
                                        AssocMemory& memory, const ContrastiveHead& head,
                                        const AssocParams& params, int frame_index) {
  std::vector<Vec> projected;
  std::vector<Real> confidences;
  projected.reserve(dets.size());
  confidences.reserve(dets.size());
  for (const auto& d : dets) {
    projected.push_back(project_contrastive(d.embedding, head));
    confidences.push_back(d.confidence);
  }
  return associate_frame(projected, confidences, memory, params, frame_index);
}

std::vector<Assignment> associate_frame(const std::vector<Vec>& projected,
                                        const std::vector<Real>& confidences,
                                        AssocMemory& memory, const AssocParams& params,
                                        int frame_index) {
  const int n = static_cast<int>(projected.size());
  std::vector<Assignment> out(n);
  for (int i = 0; i < n; ++i) out[i] = {i, -1, false};
  if (n == 0) return out;

  if (!memory.entries.empty()) {
    const int m = static_cast<int>(memory.entries.size());
    Mat cosine(n, m);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) cosine(i, j) = projected[i].dot(memory.entries[j].embedding);
    const Mat sim = bi_softmax_similarity(cosine, params.temperature);
    const auto matches = params.use_hungarian ? hungarian_match(sim, params.tau_match)
                                              : greedy_match(sim, params.tau_match);
    for (const auto& [i, j] : matches) out[i] = {i, memory.entries[j].track_id, false};
  }

  for (int i = 0; i < n; ++i) {
    if (out[i].track_id >= 0) continue;
    if (confidences[i] < params.tau_det) continue;
    const int id = memory.next_track_id++;
    memory.entries.push_back({id, projected[i], frame_index, confidences[i]});
    out[i] = {i, id, true};
  }
  return out;
}

void update_memory(AssocMemory& memory, const std::vector<Assignment>& assignments,
                   const std::vector<Vec>& projected, const AssocParams& params,
                   int frame_index) {
  for (const auto& a : assignments) {
    if (a.track_id < 0 || a.is_new) continue;
    for (auto& e : memory.entries) {
      if (e.track_id != a.track_id) continue;
      const Vec& fresh = projected.at(a.det_index);
      if (params.momentum >= 1.0) {
        e.embedding = fresh;
      } else if (params.momentum > 0.0) {
        Vec blended = (1.0 - params.momentum) * e.embedding + params.momentum * fresh;
        const Real norm = blended.norm();
        e.embedding = norm < 1e-12 ? fresh : Vec(blended / norm);
      }
      e.last_seen = frame_index;
      break;
    }
  }
  std::erase_if(memory.entries, [&](const MemoryEntry& e) {
    return frame_index - e.last_seen > params.max_age;
  });
}

}  // namespace tvis::assoc
