#include <doctest.h>

#include <json.hpp>

#include <filesystem>

#include "mvalign/commands.hpp"
#include "mvalign/config.hpp"
#include "mvalign/pipeline.hpp"
#include "mvalign/synth.hpp"
#include "support.hpp"

using namespace mvalign;
using testing::run_cli;
using testing::TempDir;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

SynthSpec small_spec() {
  SynthSpec s = testing::single_object_spec(12, 40);
  s.templates.push_back({"bin", "bin", Primitive::cylinder, {0.4, 0.4, 0.6}, 16, kContinuousSymmetryOrder});
  s.templates.push_back({"chair", "chair", Primitive::lshape, {0.5, 0.5, 0.9}, 16, 1});
  s.n_objects = {3, 3};
  s.pose.t_min = Vec3(-2, -2, 0.3);
  s.pose.t_max = Vec3(2, 2, 0.6);
  s.pose.min_separation = 1.5;
  s.pose.yaw_min_deg = -180;
  s.pose.yaw_max_deg = 180;
  s.trajectory.radius = 6;
  s.trajectory.end_deg = 120;
  s.noise.center_sigma = 3;
  s.noise.rotation_sigma = 5;
  s.noise.box_sigma = 4;
  s.noise.scale_sigma = 0.1;
  return s;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

json read_json(const fs::path& p) { return json::parse(testing::read_file(p)); }

void write_spec(const SynthSpec& s, const fs::path& file) { testing::write_file(file, synth_spec_json(s)); }

}  // namespace

TEST_CASE("synth writes a complete scene directory deterministically") {
  TempDir dir("cli_synth");
  write_spec(small_spec(), dir / "spec.json");
  REQUIRE(run_cli("synth " + q(dir / "spec.json") + " " + q(dir / "a")) == cli::kSuccess);
  for (const char* f : {scene_files::kFrames, scene_files::kObservations, scene_files::kModels,
                        scene_files::kGroundTruth, cli::out_files::kClassStats}) {
    CHECK(fs::exists(dir / "a" / f));
  }
  REQUIRE(run_cli("synth " + q(dir / "spec.json") + " " + q(dir / "b")) == cli::kSuccess);
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    CHECK(testing::read_file(e.path()) == testing::read_file(dir / "b" / e.path().filename()));
  }
  REQUIRE(run_cli("synth " + q(dir / "spec.json") + " " + q(dir / "c") + " --seed 99") == cli::kSuccess);
  CHECK(testing::read_file(dir / "a" / scene_files::kObservations) !=
        testing::read_file(dir / "c" / scene_files::kObservations));
}

TEST_CASE("synth input errors exit 2") {
  TempDir dir("cli_synth_bad");
  SynthSpec s = small_spec();
  s.trajectory.n_frames = {0, 0};
  write_spec(s, dir / "zero.json");
  CHECK(run_cli("synth " + q(dir / "zero.json") + " " + q(dir / "out")) == cli::kInputError);
  testing::write_file(dir / "broken.json", "{");
  CHECK(run_cli("synth " + q(dir / "broken.json") + " " + q(dir / "out")) == cli::kInputError);
  CHECK(run_cli("synth " + q(dir / "missing.json") + " " + q(dir / "out")) == cli::kInputError);
  CHECK(run_cli("") == cli::kInputError);
  CHECK(run_cli("frobnicate") == cli::kInputError);
  CHECK(run_cli("--help") == cli::kSuccess);
}

TEST_CASE("noiseless solve and eval reach full accuracy") {
  TempDir dir("cli_solve");
  write_spec(small_spec(), dir / "spec.json");
  REQUIRE(run_cli("synth --noiseless " + q(dir / "spec.json") + " " + q(dir / "scene")) == cli::kSuccess);
  REQUIRE(run_cli("solve " + q(dir / "scene") + " " + q(dir / "out")) == cli::kSuccess);
  REQUIRE(run_cli("eval " + q(dir / "out" / cli::out_files::kAlignments) + " " +
                  q(dir / "scene" / scene_files::kGroundTruth) + " " + q(dir / "eval")) == cli::kSuccess);
  const json rep = read_json(dir / "eval" / cli::out_files::kReport);
  CHECK(rep["class_avg"].get<double>() == 1.0);
  CHECK(rep["global_avg"].get<double>() == 1.0);
  CHECK(rep["per_class"].size() == load_ground_truth(dir / "scene" / scene_files::kGroundTruth).size());
  CHECK(fs::exists(dir / "eval" / cli::out_files::kSweeps));
  CHECK(fs::exists(dir / "eval" / cli::out_files::kPrf));
  CHECK(fs::exists(dir / "eval" / cli::out_files::kReportText));
}

TEST_CASE("one online chunk over the whole video matches batch") {
  TempDir dir("cli_online");
  write_spec(small_spec(), dir / "spec.json");
  REQUIRE(run_cli("synth " + q(dir / "spec.json") + " " + q(dir / "scene")) == cli::kSuccess);
  REQUIRE(run_cli("solve " + q(dir / "scene") + " " + q(dir / "batch")) == cli::kSuccess);
  REQUIRE(run_cli("solve --online-chunk 1000 " + q(dir / "scene") + " " + q(dir / "online")) == cli::kSuccess);
  const double batch = read_json(dir / "batch" / cli::out_files::kReport)["total_objective"].get<double>();
  const json online = read_json(dir / "online" / cli::out_files::kReport);
  CHECK(std::abs(online["total_objective"].get<double>() - batch) <= 0.01 * batch);
  CHECK(online["chunks"].size() == 1);
  CHECK(fs::exists(dir / "online" / cli::out_files::kSnapshots / "chunk_0000.jsonl"));
}

TEST_CASE("solve input errors exit 2") {
  TempDir dir("cli_solve_bad");
  write_spec(small_spec(), dir / "spec.json");
  REQUIRE(run_cli("synth " + q(dir / "spec.json") + " " + q(dir / "scene")) == cli::kSuccess);
  fs::remove(dir / "scene" / scene_files::kObservations);
  CHECK(run_cli("solve " + q(dir / "scene") + " " + q(dir / "out")) == cli::kInputError);
  CHECK(run_cli("solve " + q(dir / "nowhere") + " " + q(dir / "out")) == cli::kInputError);
  testing::write_file(dir / "bad.json", R"({"weights": {"translation": 0, "center": 0}})");
  REQUIRE(run_cli("synth " + q(dir / "spec.json") + " " + q(dir / "scene2")) == cli::kSuccess);
  CHECK(run_cli("solve --config " + q(dir / "bad.json") + " " + q(dir / "scene2") + " " + q(dir / "out")) ==
        cli::kInputError);
  CHECK(run_cli("solve --online-chunk 0 " + q(dir / "scene2") + " " + q(dir / "out")) == cli::kInputError);
}

TEST_CASE("baseline commands") {
  TempDir dir("cli_baseline");
  SynthSpec s = small_spec();
  s.noise = s.noise.noiseless();
  write_spec(s, dir / "spec.json");
  REQUIRE(run_cli("synth " + q(dir / "spec.json") + " " + q(dir / "scene")) == cli::kSuccess);
  CHECK(run_cli("baseline --variant scale_pred " + q(dir / "scene") + " " + q(dir / "sp")) == cli::kSuccess);
  CHECK(run_cli("baseline --variant class_avg " + q(dir / "scene") + " " + q(dir / "ca")) == cli::kInputError);
  CHECK(run_cli("baseline --variant class_avg --class-stats " + q(dir / "scene" / cli::out_files::kClassStats) +
                " " + q(dir / "scene") + " " + q(dir / "ca")) == cli::kSuccess);
  CHECK(run_cli("baseline --variant nope " + q(dir / "scene") + " " + q(dir / "x")) == cli::kInputError);
  REQUIRE(run_cli("eval " + q(dir / "sp" / cli::out_files::kAlignments) + " " +
                  q(dir / "scene" / scene_files::kGroundTruth) + " " + q(dir / "eval")) == cli::kSuccess);
  CHECK(read_json(dir / "eval" / cli::out_files::kReport)["global_avg"].get<double>() == 1.0);
}

TEST_CASE("noiseless scale_pred baseline recovers the depth of every frame") {
  const SynthScene sc = generate(testing::single_object_spec(14, 10));
  const GroundTruthObject& g = sc.ground_truth.front();
  for (const auto& o : sc.scene.observations) {
    SceneInput one;
    one.frames = {sc.scene.frame(o.frame_index)};
    one.observations = {o};
    one.cad_db = sc.scene.cad_db;
    const BaselineResult r = run_baseline(one, BaselineVariant::scale_pred, ClusterParams{});
    REQUIRE(r.alignments.size() == 1);
    const CameraFrame& f = one.frames.front();
    CHECK(std::abs(world_to_camera(f, r.alignments[0].pose.t).z() - world_to_camera(f, g.pose.t).z()) < 1e-3);
  }
}

TEST_CASE("class_avg baseline with exact statistics gets the scale right") {
  SynthSpec s = testing::single_object_spec(15, 6);
  const SynthScene sc = generate(s);
  const ClassStatsTable stats = compute_class_stats(std::span(&sc, 1));
  const BaselineResult r = run_baseline(sc.scene, BaselineVariant::class_avg, ClusterParams{}, &stats);
  REQUIRE_FALSE(r.alignments.empty());
  for (const auto& a : r.alignments) CHECK((a.pose.s - sc.ground_truth.front().pose.s).norm() < 1e-12);
}

TEST_CASE("eval of ground truth and of nothing") {
  TempDir dir("cli_eval");
  const SynthScene sc = generate(small_spec());
  save_scene(sc.scene, dir / "scene");
  save_ground_truth(sc.ground_truth, dir / "scene" / scene_files::kGroundTruth);
  std::vector<AlignmentResult> perfect;
  for (const auto& g : sc.ground_truth) {
    AlignmentResult a;
    a.class_id = g.class_id;
    a.cad_model_id = g.cad_model_id;
    a.pose = g.pose;
    perfect.push_back(a);
  }
  save_alignments(perfect, dir / "perfect.jsonl");
  save_alignments({}, dir / "none.jsonl");
  const std::string gt = q(dir / "scene" / scene_files::kGroundTruth);
  REQUIRE(run_cli("eval " + q(dir / "perfect.jsonl") + " " + gt + " " + q(dir / "e1")) == cli::kSuccess);
  REQUIRE(run_cli("eval " + q(dir / "none.jsonl") + " " + gt + " " + q(dir / "e2")) == cli::kSuccess);
  const json a = read_json(dir / "e1" / cli::out_files::kReport);
  const json b = read_json(dir / "e2" / cli::out_files::kReport);
  CHECK(a["class_avg"].get<double>() == 1.0);
  CHECK(a["global_avg"].get<double>() == 1.0);
  CHECK(b["class_avg"].get<double>() == 0.0);
  CHECK(b["global_avg"].get<double>() == 0.0);
  CHECK(b["per_class"].size() == a["per_class"].size());
  CHECK(run_cli("eval " + q(dir / "missing.jsonl") + " " + gt + " " + q(dir / "e3")) == cli::kInputError);
}

TEST_CASE("export commands") {
  TempDir dir("cli_export");
  const SynthScene sc = generate(small_spec());
  save_scene(sc.scene, dir / "scene");
  const fs::path models = dir / "scene" / scene_files::kModels;
  AlignmentResult a;
  a.class_id = sc.ground_truth[0].class_id;
  a.cad_model_id = sc.ground_truth[0].cad_model_id;
  save_alignments({a}, dir / "one.jsonl");
  CHECK(run_cli("export " + q(dir / "one.jsonl") + " " + q(models) + " " + q(dir / "one.obj")) == cli::kSuccess);
  CHECK(fs::file_size(dir / "one.obj") > 0);
  a.cad_model_id = "no_such_model";
  save_alignments({a}, dir / "dangling.jsonl");
  CHECK(run_cli("export " + q(dir / "dangling.jsonl") + " " + q(models) + " " + q(dir / "d.obj")) ==
        cli::kInputError);
  save_alignments({}, dir / "empty.jsonl");
  CHECK(run_cli("export " + q(dir / "empty.jsonl") + " " + q(models) + " " + q(dir / "e.obj")) == cli::kSuccess);
  const std::string text = testing::read_file(dir / "e.obj");
  CHECK(text.find("\nv ") == std::string::npos);
}
