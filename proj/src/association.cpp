#include "mvalign/association.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "mvalign/errors.hpp"
#include "mvalign/retrieval.hpp"
#include "parallel.hpp"

namespace mvalign {

void TrackerParams::validate() const {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw ValidationError("tracker.iou_threshold", "must lie in (0, 1]");
  }
  if (max_gap < 0) throw ValidationError("tracker.max_gap", "must be >= 0");
}

void ClusterParams::validate() const {
  if (!(translation_radius > 0.0)) throw ValidationError("cluster.translation_radius", "must be positive");
  if (!(rotation_radius > 0.0)) throw ValidationError("cluster.rotation_radius", "must be positive");
  if (!(scale_radius > 0.0)) throw ValidationError("cluster.scale_radius", "must be positive");
}

namespace {

std::vector<Track> tracks_from_ids(const SceneInput& scene) {
  std::map<int, Track> by_id;
  for (const auto& o : scene.observations) {
    if (!o.track_id) throw ValidationError("observation.track_id", "missing while grouping by track id");
    Track& t = by_id[*o.track_id];
    if (t.observations.empty()) {
      t.track_id = *o.track_id;
      t.class_id = o.class_id;
    } else if (t.class_id != o.class_id) {
      throw ValidationError("observation.track_id", "track " + std::to_string(t.track_id) + " mixes classes");
    }
    t.observations.push_back(&o);
  }
  std::vector<Track> out;
  for (auto& [id, t] : by_id) {
    std::stable_sort(t.observations.begin(), t.observations.end(),
                     [](const Observation* a, const Observation* b) { return a->frame_index < b->frame_index; });
    for (std::size_t i = 1; i < t.observations.size(); ++i) {
      if (t.observations[i]->frame_index == t.observations[i - 1]->frame_index) {
        throw ValidationError("observation.track_id",
                              "track " + std::to_string(id) + " has two observations in one frame");
      }
    }
    for (const Observation* o : t.observations) t.max_score = std::max(t.max_score, o->score);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<Track> build_tracks(const SceneInput& scene, const TrackerParams& params) {
  params.validate();
  if (params.use_observation_track_ids) return tracks_from_ids(scene);

  std::vector<int> order(scene.observations.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const Observation& oa = scene.observations[a];
    const Observation& ob = scene.observations[b];
    if (oa.frame_index != ob.frame_index) return oa.frame_index < ob.frame_index;
    return oa.score > ob.score;
  });

  std::vector<Track> tracks;
  std::vector<int> matched_in_frame;  // frame index of the last match, per track
  for (int idx : order) {
    const Observation& o = scene.observations[idx];
    // Recently matched tracks take precedence, then the larger IoU.
    int best = -1;
    int best_gap = 0;
    double best_iou = 0.0;
    for (int t = 0; t < static_cast<int>(tracks.size()); ++t) {
      const Observation& last = *tracks[t].observations.back();
      if (tracks[t].class_id != o.class_id || matched_in_frame[t] == o.frame_index) continue;
      const int gap = o.frame_index - last.frame_index - 1;
      if (gap > params.max_gap) continue;
      const double iou = box_iou(last.box, o.box);
      if (iou < params.iou_threshold) continue;
      if (best < 0 || gap < best_gap || (gap == best_gap && iou > best_iou)) {
        best = t;
        best_gap = gap;
        best_iou = iou;
      }
    }
    if (best < 0) {
      best = static_cast<int>(tracks.size());
      tracks.push_back({best, {}, o.class_id, 0.0});
      matched_in_frame.push_back(-1);
    }
    tracks[best].observations.push_back(&o);
    tracks[best].max_score = std::max(tracks[best].max_score, o.score);
    matched_in_frame[best] = o.frame_index;
  }
  return tracks;
}

double relative_scale_distance(const Vec3& a, const Vec3& b) {
  double d = 0.0;
  for (int i = 0; i < 3; ++i) d = std::max(d, std::abs(a[i] - b[i]) / std::max(a[i], b[i]));
  return d;
}

std::vector<std::vector<int>> cluster_alignments(std::span<const AlignmentResult> alignments,
                                                 const ClusterParams& params,
                                                 const std::vector<CadModel>& cad_db) {
  params.validate();
  std::vector<int> order(alignments.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (alignments[a].score != alignments[b].score) return alignments[a].score > alignments[b].score;
    return alignments[a].object_id < alignments[b].object_id;
  });

  const auto symmetry = [&](const AlignmentResult& r) {
    for (const auto& m : cad_db) {
      if (m.id == r.cad_model_id) return m.symmetry_order;
    }
    return 1;
  };

  std::vector<bool> taken(alignments.size(), false);
  std::vector<std::vector<int>> clusters;
  for (int s : order) {
    if (taken[s]) continue;
    const AlignmentResult& seed = alignments[s];
    const int sym = symmetry(seed);
    taken[s] = true;
    std::vector<int> members;
    for (int i = 0; i < static_cast<int>(alignments.size()); ++i) {
      if (taken[i]) continue;
      const AlignmentResult& r = alignments[i];
      if (r.class_id != seed.class_id) continue;
      if ((r.pose.t - seed.pose.t).norm() > params.translation_radius) continue;
      if (symmetric_geodesic_angle(r.pose.rotation, seed.pose.rotation, sym) > params.rotation_radius) continue;
      if (relative_scale_distance(r.pose.s, seed.pose.s) > params.scale_radius) continue;
      taken[i] = true;
      members.push_back(r.object_id);
    }
    std::sort(members.begin(), members.end());
    members.insert(members.begin(), seed.object_id);
    clusters.push_back(std::move(members));
  }
  return clusters;
}

namespace {

int distinct_frames(const std::vector<const Observation*>& obs) {
  std::set<int> frames;
  for (const Observation* o : obs) frames.insert(o->frame_index);
  return static_cast<int>(frames.size());
}

struct ObjectSolve {
  bool ok = false;
  std::string error;
  AlignmentResult alignment;
  SolveResult result;
};

ObjectSolve solve_group(const SceneInput& scene, const std::vector<const Observation*>& obs,
                        const std::map<std::string, std::vector<Vec3>>& vertices, const ObjectiveWeights& weights,
                        const SolverConfig& config, const ObjectVariables* warm, const std::string& name,
                        const SolveObserver& observer) {
  ObjectSolve out;
  try {
    const std::string model_id = vote_model(obs);
    const CadModel& model = scene.model(model_id);
    std::vector<FrameObservation> fos;
    fos.reserve(obs.size());
    for (const Observation* o : obs) fos.push_back({&scene.frame(o->frame_index), o});
    IterationObserver iteration_observer;
    if (observer) iteration_observer = [&](const IterationInfo& info) { observer(name, info); };
    out.result = solve_object(fos, weights, config, vertices.at(model_id), model.symmetry_order, warm,
                              iteration_observer);
    AlignmentResult& a = out.alignment;
    a.cad_model_id = model_id;
    a.class_id = obs.front()->class_id;
    a.pose = out.result.pose;
    a.n_supporting_frames = distinct_frames(obs);
    a.final_objective = out.result.report.final_objective;
    out.ok = true;
  } catch (const Error& e) {
    out.error = name + ": " + e.what();
  }
  return out;
}

}  // namespace

IntegrationResult integrate_scene(const SceneInput& scene, const ObjectiveWeights& weights,
                                  const SolverConfig& config, const IntegrationOptions& options,
                                  const WarmStarts* warm) {
  config.validate();
  weights.validate();
  options.cluster.validate();
  if (!(options.track_budget_fraction > 0.0 && options.track_budget_fraction <= 1.0)) {
    throw ValidationError("track_budget_fraction", "must lie in (0, 1]");
  }

  IntegrationResult out;
  out.tracks = build_tracks(scene, options.tracker);

  std::map<std::string, std::vector<Vec3>> vertices;
  for (const auto& m : scene.cad_db) vertices.emplace(m.id, box_term_vertices(m));

  SolverConfig track_config = config;
  track_config.max_iterations =
      static_cast<int>(std::lround(config.max_iterations * options.track_budget_fraction));

  const auto find_warm = [&](const std::map<int, ObjectVariables>* table, int id) -> const ObjectVariables* {
    if (!table) return nullptr;
    auto it = table->find(id);
    return it == table->end() ? nullptr : &it->second;
  };

  // Per-track solves.
  std::vector<ObjectSolve> track_solves(out.tracks.size());
  detail::parallel_for(static_cast<int>(out.tracks.size()), options.jobs, [&](int i) {
    const Track& t = out.tracks[i];
    const ObjectVariables* w = find_warm(warm ? &warm->tracks : nullptr, t.track_id);
    track_solves[i] = solve_group(scene, t.observations, vertices, weights, track_config, w,
                                  "track " + std::to_string(t.track_id), options.observer);
  });

  std::map<int, const Track*> track_by_id;
  std::map<int, const ObjectSolve*> solve_by_id;
  std::vector<AlignmentResult> track_alignments;
  for (std::size_t i = 0; i < out.tracks.size(); ++i) {
    const Track& t = out.tracks[i];
    ObjectSolve& s = track_solves[i];
    track_by_id[t.track_id] = &t;
    if (!s.ok) {
      out.diagnostics.push_back(s.error);
      ++out.failed_objects;
      continue;
    }
    s.alignment.object_id = t.track_id;
    s.alignment.score = t.max_score;
    solve_by_id[t.track_id] = &s;
    track_alignments.push_back(s.alignment);
    out.track_solutions.push_back({t.track_id, s.alignment, s.result.variables});
  }

  const std::vector<std::vector<int>> clusters = cluster_alignments(track_alignments, options.cluster, scene.cad_db);

  // Per-cluster solves over the union of member observations.
  std::vector<ObjectSolve> cluster_solves(clusters.size());
  detail::parallel_for(static_cast<int>(clusters.size()), options.jobs, [&](int c) {
    std::vector<const Observation*> obs;
    for (int id : clusters[c]) {
      const auto& member = track_by_id.at(id)->observations;
      obs.insert(obs.end(), member.begin(), member.end());
    }
    std::stable_sort(obs.begin(), obs.end(),
                     [](const Observation* a, const Observation* b) { return a->frame_index < b->frame_index; });
    const int seed = clusters[c].front();
    // Fragments can be short and badly conditioned, so a cluster starts cold
    // unless a previous solution of the same cluster is supplied.
    const ObjectVariables* w = find_warm(warm ? &warm->clusters : nullptr, seed);
    cluster_solves[c] = solve_group(scene, obs, vertices, weights, config, w,
                                    "cluster seeded by track " + std::to_string(seed), options.observer);
  });

  for (std::size_t c = 0; c < clusters.size(); ++c) {
    ObjectSolve& s = cluster_solves[c];
    if (!s.ok) {
      out.diagnostics.push_back(s.error);
      ++out.failed_objects;
      continue;
    }
    double score = 0.0;
    for (int id : clusters[c]) score = std::max(score, track_by_id.at(id)->max_score);
    s.alignment.object_id = static_cast<int>(out.alignments.size());
    s.alignment.score = score;
    out.alignments.push_back(s.alignment);
    out.reports.push_back(s.result.report);
    out.variables.push_back(std::move(s.result.variables));
    out.clusters.push_back(clusters[c]);
  }
  return out;
}

}  // namespace mvalign
