#include "mvalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "mvalign/errors.hpp"
#include "mvalign/random.hpp"

namespace mvalign {

void AccuracyThresholds::validate() const {
  if (!(translation > 0.0 && rotation > 0.0 && scale > 0.0)) {
    throw ValidationError("thresholds", "all thresholds must be positive");
  }
}

int symmetry_order(const SymmetryTable& table, const std::string& class_id) {
  auto it = table.find(class_id);
  return it == table.end() ? 1 : it->second;
}

PoseErrors pose_errors(const Pose9DoF& result, const Pose9DoF& gt, int order) {
  PoseErrors e;
  e.translation = (result.t - gt.t).norm();
  e.rotation = symmetric_geodesic_angle(result.rotation, gt.rotation, order);
  for (int i = 0; i < 3; ++i) e.scale = std::max(e.scale, std::abs(result.s[i] - gt.s[i]) / gt.s[i]);
  return e;
}

bool within(const PoseErrors& e, const AccuracyThresholds& t) {
  return e.translation <= t.translation && e.rotation <= t.rotation && e.scale <= t.scale;
}

std::vector<MatchRecord> match_results(std::span<const AlignmentResult> results,
                                       std::span<const GroundTruthObject> gt, const SymmetryTable& symmetry) {
  struct Pair {
    double distance;
    int g, r;
  };
  std::vector<Pair> pairs;
  for (int g = 0; g < static_cast<int>(gt.size()); ++g) {
    for (int r = 0; r < static_cast<int>(results.size()); ++r) {
      if (results[r].class_id != gt[g].class_id) continue;
      pairs.push_back({(results[r].pose.t - gt[g].pose.t).norm(), g, r});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(a.distance, a.g, a.r) < std::tie(b.distance, b.g, b.r);
  });

  std::vector<MatchRecord> matches(gt.size());
  for (int g = 0; g < static_cast<int>(gt.size()); ++g) {
    matches[g].gt_index = g;
    matches[g].class_id = gt[g].class_id;
  }
  std::vector<bool> used(results.size(), false);
  for (const Pair& p : pairs) {
    if (matches[p.g].result_index || used[p.r]) continue;
    used[p.r] = true;
    matches[p.g].result_index = p.r;
    matches[p.g].errors =
        pose_errors(results[p.r].pose, gt[p.g].pose, symmetry_order(symmetry, gt[p.g].class_id));
  }
  return matches;
}

EvalReport score_matches(std::vector<MatchRecord> matches, const AccuracyThresholds& thresholds) {
  thresholds.validate();
  EvalReport report;
  int accurate = 0;
  for (auto& m : matches) {
    m.accurate = m.result_index.has_value() && within(m.errors, thresholds);
    ClassAccuracy& c = report.per_class[m.class_id];
    ++c.n_gt;
    c.n_accurate += m.accurate;
    accurate += m.accurate;
  }
  double sum = 0.0;
  for (auto& [_, c] : report.per_class) {
    c.accuracy = static_cast<double>(c.n_accurate) / c.n_gt;
    sum += c.accuracy;
  }
  if (!report.per_class.empty()) report.class_avg = sum / static_cast<double>(report.per_class.size());
  if (!matches.empty()) report.global_avg = static_cast<double>(accurate) / static_cast<double>(matches.size());
  report.matches = std::move(matches);
  return report;
}

EvalReport match_and_score(std::span<const AlignmentResult> results, std::span<const GroundTruthObject> gt,
                           const AccuracyThresholds& thresholds, const SymmetryTable& symmetry) {
  return score_matches(match_results(results, gt, symmetry), thresholds);
}

const char* to_string(Transformation t) {
  switch (t) {
    case Transformation::translation:
      return "translation";
    case Transformation::rotation:
      return "rotation";
    case Transformation::scale:
      return "scale";
  }
  return "";
}

SweepGrids SweepGrids::defaults() {
  SweepGrids g;
  for (int k = 1; k <= 25; ++k) {
    g.translation.push_back(k / 50.0);
    g.rotation.push_back(2.0 * k);
    g.scale.push_back(k / 50.0);
  }
  return g;
}

void SweepGrids::validate() const {
  for (const auto* grid : {&translation, &rotation, &scale}) {
    for (std::size_t i = 0; i < grid->size(); ++i) {
      if (!((*grid)[i] > 0.0) || (i > 0 && !((*grid)[i] > (*grid)[i - 1]))) {
        throw ValidationError("sweep", "threshold grids must be positive and strictly increasing");
      }
    }
  }
}

std::vector<SweepCurve> sweep_curves(std::span<const AlignmentResult> results, std::span<const GroundTruthObject> gt,
                                     const SweepGrids& grids, const SymmetryTable& symmetry,
                                     const AccuracyThresholds& base) {
  grids.validate();
  base.validate();
  const std::vector<MatchRecord> matches = match_results(results, gt, symmetry);
  std::vector<SweepCurve> curves;
  for (Transformation kind : {Transformation::translation, Transformation::rotation, Transformation::scale}) {
    SweepCurve curve;
    curve.kind = kind;
    const auto& grid = kind == Transformation::translation ? grids.translation
                       : kind == Transformation::rotation  ? grids.rotation
                                                           : grids.scale;
    for (double threshold : grid) {
      AccuracyThresholds t = base;
      (kind == Transformation::translation ? t.translation
       : kind == Transformation::rotation  ? t.rotation
                                           : t.scale) = threshold;
      const EvalReport r = score_matches(matches, t);
      curve.thresholds.push_back(threshold);
      curve.class_avg.push_back(r.class_avg);
      curve.global_avg.push_back(r.global_avg);
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

bool OrientedBox::contains(const Vec3& p) const {
  // Slack for the rounding of points sampled on the boundary of this box.
  const Vec3 local = axes.transpose() * (p - center);
  return (local.cwiseAbs().array() <= half_extent.array() * (1.0 + 1e-12) + 1e-12).all();
}

OrientedBox posed_box(const CadModel& model, const Pose9DoF& pose) {
  const auto [lo, hi] = model.bounds();
  OrientedBox b;
  b.axes = pose.rotation.matrix();
  b.center = pose.t + b.axes * pose.s.cwiseProduct(0.5 * (lo + hi));
  b.half_extent = 0.5 * pose.s.cwiseProduct(hi - lo);
  return b;
}

namespace {

// Fraction of `samples` uniform points of `from` that fall inside `into`.
double inside_fraction(const OrientedBox& from, const OrientedBox& into, int samples, Rng& rng) {
  int inside = 0;
  for (int i = 0; i < samples; ++i) {
    const Vec3 u(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    inside += into.contains(from.center + from.axes * from.half_extent.cwiseProduct(u));
  }
  return static_cast<double>(inside) / samples;
}

}  // namespace

double oriented_box_iou(const OrientedBox& a, const OrientedBox& b, int samples, std::uint64_t seed) {
  const double va = a.volume(), vb = b.volume();
  if (!(va > 0.0 && vb > 0.0)) return 0.0;
  // Disjoint bounding spheres.
  if ((a.center - b.center).norm() > a.half_extent.norm() + b.half_extent.norm()) return 0.0;
  Rng rng(seed);
  const int half = std::max(samples / 2, 1);
  const double from_a = va * inside_fraction(a, b, half, rng);
  const double from_b = vb * inside_fraction(b, a, half, rng);
  const double inter = 0.5 * (from_a + from_b);
  return inter / (va + vb - inter);
}

std::vector<PrfRow> box_iou_prf(std::span<const AlignmentResult> results, std::span<const GroundTruthObject> gt,
                                const std::vector<CadModel>& cad_db, const std::vector<double>& iou_thresholds,
                                int samples) {
  const auto model = [&](const std::string& id) -> const CadModel& {
    for (const auto& m : cad_db) {
      if (m.id == id) return m;
    }
    throw DanglingReference("unknown CAD model '" + id + "'");
  };
  std::vector<OrientedBox> rb, gb;
  for (const auto& r : results) rb.push_back(posed_box(model(r.cad_model_id), r.pose));
  for (const auto& g : gt) gb.push_back(posed_box(model(g.cad_model_id), g.pose));

  std::vector<std::vector<double>> iou(results.size(), std::vector<double>(gt.size(), 0.0));
  for (std::size_t r = 0; r < results.size(); ++r) {
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (results[r].class_id == gt[g].class_id) iou[r][g] = oriented_box_iou(rb[r], gb[g], samples);
    }
  }

  std::vector<int> order(results.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return results[a].score > results[b].score; });

  std::vector<PrfRow> rows;
  for (double threshold : iou_thresholds) {
    PrfRow row;
    row.iou_threshold = threshold;
    std::vector<bool> used(gt.size(), false);
    for (int r : order) {
      int best = -1;
      for (int g = 0; g < static_cast<int>(gt.size()); ++g) {
        if (used[g] || !(iou[r][g] > threshold)) continue;
        if (best < 0 || iou[r][g] > iou[r][best]) best = g;
      }
      if (best >= 0) {
        used[best] = true;
        ++row.true_positives;
      } else {
        ++row.false_positives;
      }
    }
    row.false_negatives = static_cast<int>(gt.size()) - row.true_positives;
    if (!results.empty()) row.precision = static_cast<double>(row.true_positives) / results.size();
    if (!gt.empty()) row.recall = static_cast<double>(row.true_positives) / gt.size();
    if (row.precision + row.recall > 0.0) {
      row.f1 = 2.0 * row.precision * row.recall / (row.precision + row.recall);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace mvalign
