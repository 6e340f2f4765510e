#include "criteria.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "eval_cases.hpp"
#include "gradient_check.hpp"
#include "mvalign/association.hpp"
#include "mvalign/commands.hpp"
#include "mvalign/config.hpp"
#include "mvalign/eval.hpp"
#include "mvalign/pipeline.hpp"
#include "mvalign/synth.hpp"

#include <unistd.h>

namespace acceptance {

namespace {

using namespace mvalign;
namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr int kSeeds = 10;
constexpr int kOnlineChunk = 40;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

fs::path source(const std::string& rel) { return fs::path(MVALIGN_SOURCE_DIR) / rel; }

fs::path seed_file(int seed) { return source(fmt("bench/standard/seed_%02d.json", seed)); }

SynthSpec bench_spec(int seed) { return load_synth_spec(seed_file(seed)); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

class Workdir {
 public:
  explicit Workdir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("mvalign_acceptance_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~Workdir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SymmetryTable scene_symmetry(const SceneInput& scene) {
  const RunConfig defaults = load_run_config(source("config/default.json"));
  return symmetry_for(defaults.symmetry, scene.cad_db);
}

// Counts constraint violations seen by the solver observer.
struct ConstraintMonitor {
  std::atomic<long> iterations{0};
  std::atomic<long> depth_violations{0};
  std::atomic<long> norm_violations{0};
  std::atomic<long> depth_checks{0};

  SolveObserver observer() {
    return [this](const std::string&, const IterationInfo& info) {
      ++iterations;
      for (double d : info.depths) {
        ++depth_checks;
        if (!(d >= 0.1)) ++depth_violations;
      }
      if (!(std::abs(info.quaternion.norm() - 1.0) < 1e-9)) ++norm_violations;
    };
  }
};

ConstraintMonitor& monitor() {
  static ConstraintMonitor m;
  return m;
}

// ---------------------------------------------------------------------------

Verdict noiseless_recovery() {
  Verdict v;
  Workdir dir("noiseless");
  const fs::path config = source("config/default.json");
  bool ok = true;
  double worst_t = 0, worst_r = 0, worst_s = 0, worst_time = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    std::ostringstream log;
    const fs::path scene = dir / fmt("scene_%02d", seed), out = dir / fmt("solve_%02d", seed),
                   eval = dir / fmt("eval_%02d", seed);
    cli::SynthArgs sa{seed_file(seed), scene, std::nullopt, true};
    if (cli::run_synth(sa, log) != cli::kSuccess) {
      v.details.push_back(fmt("seed %d: synth failed: %s", seed, log.str().c_str()));
      ok = false;
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = cli::run_solve({scene, out, config, 1, std::nullopt}, log);
    const double elapsed = seconds_since(t0);
    cli::EvalArgs ea{out / cli::out_files::kAlignments, scene / scene_files::kGroundTruth, eval, config, std::nullopt};
    const int erc = cli::run_eval(ea, log);
    if (rc != cli::kSuccess || erc != cli::kSuccess) {
      v.details.push_back(fmt("seed %d: solve exit %d, eval exit %d", seed, rc, erc));
      ok = false;
      continue;
    }
    const json rep = json::parse(read_file(eval / cli::out_files::kReport));
    double mt = 0, mr = 0, ms = 0;
    bool all_matched = true;
    for (const auto& m : rep["matches"]) {
      if (m["result_index"].is_null()) {
        all_matched = false;
        continue;
      }
      mt = std::max(mt, m["translation_error"].get<double>());
      mr = std::max(mr, m["rotation_error"].get<double>());
      ms = std::max(ms, m["scale_error"].get<double>());
    }
    const double class_avg = rep["class_avg"].get<double>(), global_avg = rep["global_avg"].get<double>();
    const bool seed_ok = all_matched && class_avg == 1.0 && global_avg == 1.0 && mt <= 1e-3 && mr <= 0.1 &&
                         ms <= 1e-3 && elapsed <= 30.0;
    v.details.push_back(fmt("seed %2d: %zu objects, class_avg %.3f, max err %.2e m / %.2e deg / %.2e, solve %.2f s%s",
                            seed, rep["matches"].size(), class_avg, mt, mr, ms, elapsed, seed_ok ? "" : "  <-- FAIL"));
    ok = ok && seed_ok;
    worst_t = std::max(worst_t, mt);
    worst_r = std::max(worst_r, mr);
    worst_s = std::max(worst_s, ms);
    worst_time = std::max(worst_time, elapsed);
  }
  v.passed = ok;
  v.summary = fmt("10 noiseless seeds, worst errors %.1e m / %.1e deg / %.1e scale, slowest solve %.2f s", worst_t,
                  worst_r, worst_s, worst_time);
  return v;
}

Verdict ambiguity() {
  Verdict v;
  const AmbiguitySpec spec;
  AmbiguityPair pair = ambiguity_pair(spec);
  const bool identical = observation_record(pair.a.scene.observations.front()) ==
                         observation_record(pair.b.scene.observations.front());
  v.details.push_back(fmt("single frame: observation records identical: %s", identical ? "yes" : "no"));

  // Single-frame baseline fed the true statistics of A: identical outputs,
  // so it cannot be right for both.
  ClassStatsTable stats;
  const GroundTruthObject& ga = pair.a.ground_truth.front();
  const GroundTruthObject& gb = pair.b.ground_truth.front();
  stats[ga.class_id] = {ga.pose.s, ga.pose.t.z(), 1, 1};
  const BaselineResult ba = run_baseline(pair.a.scene, BaselineVariant::class_avg, ClusterParams{}, &stats);
  const BaselineResult bb = run_baseline(pair.b.scene, BaselineVariant::class_avg, ClusterParams{}, &stats);
  const bool same_baseline = ba.alignments == bb.alignments && ba.alignments.size() == 1;
  double err_a = 1, err_b = 1;
  if (same_baseline) {
    err_a = pose_errors(ba.alignments[0].pose, ga.pose, 1).scale;
    err_b = pose_errors(bb.alignments[0].pose, gb.pose, 1).scale;
  }
  v.details.push_back(fmt("single-frame baseline outputs identical: %s, scale error A %.3f, B %.3f",
                          same_baseline ? "yes" : "no", err_a, err_b));

  add_offset_view(pair, spec, 30.0);
  const ObjectiveWeights w = ObjectiveWeights::multi_view_only();
  bool recovered = true;
  for (const SynthScene* s : {&pair.a, &pair.b}) {
    const auto vertices = box_term_vertices(s->scene.cad_db.front());
    const SolveResult r = solve_object(s->scene, s->scene.observations, w, SolverConfig{}, vertices);
    const Pose9DoF& gt = s->ground_truth.front().pose;
    const double scale_err = pose_errors(r.pose, gt, 1).scale;
    const CameraFrame& f0 = s->scene.frames.front();
    const double depth_err = std::abs(world_to_camera(f0, r.pose.t).z() - world_to_camera(f0, gt.t).z());
    const bool ok = scale_err <= 0.05 && depth_err <= 0.05;
    recovered = recovered && ok;
    v.details.push_back(fmt("%s with 30 deg view: scale error %.2e, depth error %.2e m", s == &pair.a ? "A" : "B",
                            scale_err, depth_err));
  }
  v.passed = identical && same_baseline && std::max(err_a, err_b) > 0.05 && recovered;
  v.summary = v.passed ? "single frame ambiguous, second view resolves scale and depth"
                       : "ambiguity construction or multi-view recovery failed";
  return v;
}

Verdict gradients() {
  Verdict v;
  bool ok = true;
  double worst = 0;
  for (const auto& st : testing::check_gradients(100, 20240607)) {
    const bool pass = st.points == 100 && st.max_relative_error < 1e-4;
    ok = ok && pass;
    worst = std::max(worst, st.max_relative_error);
    v.details.push_back(fmt("%-20s %d points, %d resampled, max relative error %.2e", st.term.c_str(), st.points,
                            st.resampled, st.max_relative_error));
  }
  v.passed = ok;
  v.summary = fmt("every term below 1e-4, worst %.2e", worst);
  return v;
}

struct SeedComparison {
  double multi = 0, baseline = 0;
};

Verdict multi_view_beats_single_frame() {
  Verdict v;
  int wins = 0;
  double sum_margin = 0, min_margin = 1e9;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const SynthScene sc = generate(bench_spec(seed));
    IntegrationOptions opt;
    opt.observer = monitor().observer();
    const IntegrationResult r = integrate_scene(sc.scene, ObjectiveWeights{}, SolverConfig{}, opt);
    const BaselineResult b = run_baseline(sc.scene, BaselineVariant::scale_pred, ClusterParams{});
    const SymmetryTable sym = scene_symmetry(sc.scene);
    const double multi = match_and_score(r.alignments, sc.ground_truth, AccuracyThresholds{}, sym).class_avg;
    const double base = match_and_score(b.alignments, sc.ground_truth, AccuracyThresholds{}, sym).class_avg;
    wins += multi > base;
    sum_margin += multi - base;
    min_margin = std::min(min_margin, multi - base);
    v.details.push_back(fmt("seed %2d: multi-view %.3f, scale_pred single-frame %.3f, margin %+.1f points", seed, multi,
                            base, 100.0 * (multi - base)));
  }
  v.passed = wins == kSeeds;
  v.summary = fmt("%d/10 strict wins, mean margin %.1f points, smallest %.1f (15-point target %s)", wins,
                  10.0 * sum_margin, 100.0 * min_margin, 10.0 * sum_margin >= 15.0 ? "met" : "missed");
  return v;
}

Verdict hard_constraints() {
  Verdict v;
  // Every benchmark run of this binary so far reported through the monitor;
  // make sure the noiseless runs are covered as well.
  for (int seed = 1; seed <= kSeeds; ++seed) {
    SynthSpec spec = bench_spec(seed);
    spec.noise = spec.noise.noiseless();
    const SynthScene sc = generate(spec);
    IntegrationOptions opt;
    opt.observer = monitor().observer();
    integrate_scene(sc.scene, ObjectiveWeights{}, SolverConfig{}, opt);
  }
  const ConstraintMonitor& m = monitor();
  v.passed = m.iterations > 0 && m.depth_violations == 0 && m.norm_violations == 0;
  v.summary = fmt("%ld iterations, %ld depth checks: %ld depths below 0.1 m, %ld quaternion norm deviations >= 1e-9",
                  m.iterations.load(), m.depth_checks.load(), m.depth_violations.load(), m.norm_violations.load());
  return v;
}

Verdict clustering() {
  Verdict v;
  constexpr int kGap = 36;
  SynthSpec spec = bench_spec(1);
  spec.seed = 4242;
  spec.n_objects = {4, 4};
  spec.trajectory.n_frames = {240, 240};
  spec.noise = spec.noise.noiseless();
  spec.noise.dropout_rate = 0.0;

  // Hide every object seen long enough for a gap in the middle of its
  // visible window, leaving at least 12 frames on each side.
  std::map<int, std::pair<int, int>> window;
  {
    SynthSpec oracle = spec;
    oracle.emit_track_ids = true;
    for (const auto& o : generate(oracle).scene.observations) {
      const int i = *o.track_id;
      auto [it, fresh] = window.try_emplace(i, o.frame_index, o.frame_index);
      it->second.first = std::min(it->second.first, o.frame_index);
      it->second.second = std::max(it->second.second, o.frame_index);
    }
  }
  for (const auto& [i, w] : window) {
    if (w.second - w.first + 1 < kGap + 24) continue;
    const int first = (w.first + w.second + 1) / 2 - kGap / 2;
    spec.visibility.gaps.push_back({i, first, first + kGap - 1});
    v.details.push_back(fmt("object %d visible in frames %d-%d, hidden in %d-%d", i, w.first, w.second, first,
                            first + kGap - 1));
  }
  const SynthScene sc = generate(spec);
  const IntegrationResult r = integrate_scene(sc.scene, ObjectiveWeights{}, SolverConfig{});
  const SymmetryTable sym = scene_symmetry(sc.scene);
  const EvalReport rep = match_and_score(r.alignments, sc.ground_truth, AccuracyThresholds{}, sym);
  v.details.push_back(fmt("%zu objects, %zu tracks, %zu clusters, %zu alignments", sc.ground_truth.size(),
                          r.tracks.size(), r.clusters.size(), r.alignments.size()));
  bool ok = r.alignments.size() == sc.ground_truth.size() && r.tracks.size() > sc.ground_truth.size() &&
            rep.global_avg == 1.0;

  std::map<int, const TrackSolution*> by_track;
  for (const auto& ts : r.track_solutions) by_track[ts.track_id] = &ts;
  int fragmented = 0;
  for (const auto& m : rep.matches) {
    if (!m.result_index) {
      ok = false;
      continue;
    }
    const auto& cluster = r.clusters[*m.result_index];
    if (cluster.size() < 2) continue;
    ++fragmented;
    const Vec3& gt_t = sc.ground_truth[m.gt_index].pose.t;
    double best_fragment = 1e9;
    for (int id : cluster) {
      if (by_track.count(id)) best_fragment = std::min(best_fragment, (by_track[id]->alignment.pose.t - gt_t).norm());
    }
    const double merged = m.errors.translation;
    ok = ok && merged <= best_fragment + 1e-6;
    v.details.push_back(fmt("object %d: %zu fragments, best fragment %.2e m, merged %.2e m", m.gt_index,
                            cluster.size(), best_fragment, merged));
  }
  ok = ok && fragmented == static_cast<int>(spec.visibility.gaps.size()) && fragmented >= 2;
  v.passed = ok;
  v.summary = fmt("%d fragmented objects merged, one alignment per object", fragmented);
  return v;
}

Verdict evaluation_protocol() {
  Verdict v;
  int passed = 0, total = 0;
  for (const auto& c : testing::run_eval_cases()) {
    ++total;
    passed += c.passed;
    v.details.push_back(fmt("%-34s %s%s", c.name.c_str(), c.passed ? "ok" : "FAILED: ", c.detail.c_str()));
  }
  v.passed = passed == total;
  v.summary = fmt("%d/%d evaluation cases exact", passed, total);
  return v;
}

Verdict online_mode() {
  Verdict v;
  bool ok = true;
  double worst_rel = 0, worst_update = 0;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    const SynthScene sc = generate(bench_spec(seed));
    IntegrationOptions opt;
    opt.observer = monitor().observer();
    const IntegrationResult batch = integrate_scene(sc.scene, ObjectiveWeights{}, SolverConfig{}, opt);

    SolveSession session(sc.scene.cad_db, ObjectiveWeights{}, SolverConfig{}, opt);
    const auto& frames = sc.scene.frames;
    double slowest = 0;
    for (std::size_t b = 0; b < frames.size(); b += kOnlineChunk) {
      const std::size_t e = std::min(frames.size(), b + kOnlineChunk);
      std::vector<Observation> obs;
      for (const auto& o : sc.scene.observations) {
        if (o.frame_index >= frames[b].frame_index && o.frame_index <= frames[e - 1].frame_index) obs.push_back(o);
      }
      const auto t0 = std::chrono::steady_clock::now();
      solve_incremental(session, std::span(frames).subspan(b, e - b), obs);
      slowest = std::max(slowest, seconds_since(t0));
    }
    const IntegrationResult& online = session.result();
    double fb = 0, fo = 0;
    std::vector<std::string> mb, mo;
    for (const auto& a : batch.alignments) fb += a.final_objective, mb.push_back(a.cad_model_id);
    for (const auto& a : online.alignments) fo += a.final_objective, mo.push_back(a.cad_model_id);
    std::sort(mb.begin(), mb.end());
    std::sort(mo.begin(), mo.end());
    const double rel = (fo - fb) / fb;
    const bool seed_ok = std::abs(rel) <= 0.01 && mb == mo && slowest <= 3.0;
    ok = ok && seed_ok;
    worst_rel = std::max(worst_rel, std::abs(rel));
    worst_update = std::max(worst_update, slowest);
    v.details.push_back(fmt("seed %2d: %zu frames in %d-frame chunks, objective %+.2f%%, models %s, slowest update "
                            "%.2f s%s",
                            seed, frames.size(), kOnlineChunk, 100.0 * rel, mb == mo ? "identical" : "DIFFER",
                            slowest, seed_ok ? "" : "  <-- FAIL"));
  }
  v.passed = ok;
  v.summary = fmt("worst objective gap %.2f%%, slowest update %.2f s", 100.0 * worst_rel, worst_update);
  return v;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
  }
  return files;
}

Verdict determinism() {
  Verdict v;
  const fs::path config = source("config/default.json");
  std::vector<std::map<std::string, std::string>> runs;
  for (int k = 0; k < 2; ++k) {
    Workdir dir(fmt("determinism_%d", k));
    std::ostringstream log;
    const fs::path root = dir / "run";
    int rc = 0;
    rc |= cli::run_synth({source("bench/standard/train.json"), root / "train", std::nullopt, false}, log);
    rc |= cli::run_synth({seed_file(1), root / "scene", std::nullopt, false}, log);
    rc |= cli::run_solve({root / "scene", root / "solve", config, std::nullopt, std::nullopt}, log);
    rc |= cli::run_solve({root / "scene", root / "online", config, std::nullopt, kOnlineChunk}, log);
    rc |= cli::run_baseline({root / "scene", root / "scale_pred", "scale_pred", std::nullopt, config}, log);
    rc |= cli::run_baseline(
        {root / "scene", root / "class_avg", "class_avg", root / "train" / cli::out_files::kClassStats, config}, log);
    for (const char* out : {"solve", "scale_pred", "class_avg"}) {
      rc |= cli::run_eval({root / out / cli::out_files::kAlignments, root / "scene" / scene_files::kGroundTruth,
                           root / (std::string("eval_") + out), config, std::nullopt},
                          log);
    }
    rc |= cli::run_export(
        {root / "solve" / cli::out_files::kAlignments, root / "scene" / scene_files::kModels, root / "scene.obj"}, log);
    if (rc != 0) v.details.push_back(fmt("run %d: a command exited non-zero", k + 1));
    runs.push_back(snapshot(root));
  }
  int differing = 0;
  for (const auto& [name, text] : runs[0]) {
    auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != text) {
      ++differing;
      v.details.push_back("differs: " + name);
    }
  }
  differing += static_cast<int>(runs[1].size() != runs[0].size());
  v.passed = differing == 0 && !runs[0].empty();
  v.summary = fmt("synth, solve, online solve, both baselines, eval and export repeated: %zu files, %d differ",
                  runs[0].size(), differing);
  return v;
}

}  // namespace

std::vector<Criterion> all_criteria() {
  return {
      {1, "noiseless oracle recovery", noiseless_recovery},
      {2, "scale-depth ambiguity", ambiguity},
      {3, "gradient correctness", gradients},
      {4, "multi-view beats single-frame", multi_view_beats_single_frame},
      {5, "hard constraints", hard_constraints},
      {6, "clustering correctness", clustering},
      {7, "evaluation protocol", evaluation_protocol},
      {8, "online mode", online_mode},
      {9, "determinism", determinism},
  };
}

}  // namespace acceptance
