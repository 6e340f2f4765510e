#include "mvalign/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mvalign/errors.hpp"
#include "mvalign/hull.hpp"

namespace mvalign {

VoteTally tally_votes(std::span<const Observation* const> observations) {
  VoteTally tally;
  for (const Observation* o : observations) {
    if (o->model_vote) tally[o->model_vote->cad_model_id] += o->score;
  }
  return tally;
}

std::string vote_model(std::span<const Observation* const> observations) {
  const VoteTally tally = tally_votes(observations);
  if (tally.empty()) throw NoVotes("no observation carries a model vote");
  // std::map iterates by ascending id, so strict > keeps the smallest id on ties.
  auto best = tally.begin();
  for (auto it = tally.begin(); it != tally.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

std::string vote_model(std::span<const Observation> observations) {
  std::vector<const Observation*> ptrs;
  ptrs.reserve(observations.size());
  for (const auto& o : observations) ptrs.push_back(&o);
  return vote_model(ptrs);
}

std::string nearest_model(std::span<const double> embedding, const std::vector<CadModel>& cad_db) {
  if (cad_db.empty()) throw DimensionMismatch("empty model database");
  const auto norm = [](std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  };
  const double qn = norm(embedding);
  const CadModel* best = nullptr;
  double best_distance = std::numeric_limits<double>::infinity();
  for (const auto& m : cad_db) {
    if (m.embedding.size() != embedding.size()) {
      throw DimensionMismatch("model '" + m.id + "' has embedding dimension " + std::to_string(m.embedding.size()) +
                              ", query has " + std::to_string(embedding.size()));
    }
    const double mn = norm(m.embedding);
    double dot = 0.0;
    for (std::size_t i = 0; i < embedding.size(); ++i) dot += embedding[i] * m.embedding[i];
    const double distance = qn > 0.0 && mn > 0.0 ? 1.0 - dot / (qn * mn) : 1.0;
    if (distance < best_distance || (distance == best_distance && m.id < best->id)) {
      best_distance = distance;
      best = &m;
    }
  }
  return best->id;
}

std::vector<bool> voxelize(const CadModel& model, int resolution) {
  if (resolution < 1) throw ValidationError("resolution", "must be >= 1");
  std::vector<Triangle> faces = model.faces;
  if (faces.empty()) faces = convex_hull(model.vertices).faces;

  const int n = resolution;
  const double cell = 1.0 / n;
  // Rays along z through cell centers, nudged off mesh edges and vertices.
  const double nudge_x = 1e-7 * std::sqrt(2.0);
  const double nudge_y = 1e-7 * std::sqrt(3.0);
  std::vector<bool> occupied(static_cast<std::size_t>(n) * n * n, false);
  std::vector<double> hits;
  for (int i = 0; i < n; ++i) {
    const double x = -0.5 + (i + 0.5) * cell + nudge_x;
    for (int j = 0; j < n; ++j) {
      const double y = -0.5 + (j + 0.5) * cell + nudge_y;
      hits.clear();
      for (const auto& f : faces) {
        const Vec3& a = model.vertices[f[0]];
        const Vec3& b = model.vertices[f[1]];
        const Vec3& c = model.vertices[f[2]];
        const double d = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
        if (d == 0.0) continue;
        const double u = ((b.x() - x) * (c.y() - y) - (c.x() - x) * (b.y() - y)) / d;
        const double v = ((c.x() - x) * (a.y() - y) - (a.x() - x) * (c.y() - y)) / d;
        const double w = 1.0 - u - v;
        if (u < 0.0 || v < 0.0 || w < 0.0) continue;
        hits.push_back(u * a.z() + v * b.z() + w * c.z());
      }
      std::sort(hits.begin(), hits.end());
      for (int k = 0; k < n; ++k) {
        const double z = -0.5 + (k + 0.5) * cell;
        const auto below = std::lower_bound(hits.begin(), hits.end(), z) - hits.begin();
        occupied[(static_cast<std::size_t>(i) * n + j) * n + k] = below % 2 == 1;
      }
    }
  }
  return occupied;
}

double retrieval_iou(const CadModel& a, const CadModel& b, int resolution) {
  const std::vector<bool> va = voxelize(a, resolution);
  const std::vector<bool> vb = voxelize(b, resolution);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    inter += va[i] && vb[i];
    uni += va[i] || vb[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace mvalign
