#include <doctest.h>

#include <json.hpp>

#include <cmath>
#include <functional>
#include <sstream>

#include "mvalign/errors.hpp"
#include "mvalign/datamodel.hpp"
#include "mvalign/synth.hpp"
#include "support.hpp"

using namespace mvalign;
using json = nlohmann::ordered_json;
using testing::TempDir;

namespace {

Observation valid_observation(int frame = 0) {
  Observation o;
  o.frame_index = frame;
  o.class_id = "cube";
  o.score = 0.9;
  o.box = {100, 80, 200, 160};
  o.center2d = {150, 120};
  o.scale_pred = Vec3(1, 1, 1);
  o.model_vote = ModelVote{"cube", {}};
  return o;
}

SceneInput small_scene(int n_frames) {
  SceneInput s;
  for (int i = 0; i < n_frames; ++i) s.frames.push_back(testing::simple_frame(i));
  s.cad_db.push_back(testing::unit_cube());
  return s;
}

// Rewrites one field of the first observation record in a saved scene.
void patch_first_observation(const std::filesystem::path& dir, const std::function<void(json&)>& patch) {
  std::istringstream in(testing::read_file(dir / scene_files::kObservations));
  std::string line, out;
  int n = 0;
  while (std::getline(in, line)) {
    if (n++ == 1) {
      json j = json::parse(line);
      patch(j);
      line = j.dump();
    }
    out += line + "\n";
  }
  testing::write_file(dir / scene_files::kObservations, out);
}

std::vector<Vec3> obj_vertices(const std::string& text) {
  std::vector<Vec3> out;
  std::istringstream in(text);
  std::string tag;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    ls >> tag;
    if (tag != "v") continue;
    Vec3 v;
    ls >> v.x() >> v.y() >> v.z();
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST_CASE("load_scene with one frame and no observations") {
  TempDir dir("empty_obs");
  save_scene(small_scene(1), dir.path());
  const SceneInput back = load_scene(dir.path());
  CHECK(back.frames.size() == 1);
  CHECK(back.observations.empty());
}

TEST_CASE("load_scene rejects an inverted box naming the field") {
  TempDir dir("bad_box");
  SceneInput s = small_scene(1);
  s.observations.push_back(valid_observation());
  save_scene(s, dir.path());
  patch_first_observation(dir.path(), [](json& j) { j["box"] = json::array({200, 80, 100, 160}); });
  try {
    load_scene(dir.path());
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(e.field().find("box") != std::string::npos);
  }
}

TEST_CASE("load_scene rejects a dangling frame reference") {
  TempDir dir("dangling");
  SceneInput s = small_scene(10);
  s.observations.push_back(valid_observation());
  save_scene(s, dir.path());
  patch_first_observation(dir.path(), [](json& j) { j["frame_index"] = 99; });
  CHECK_THROWS_AS(load_scene(dir.path()), DanglingReference);
}

TEST_CASE("alignment round-trip") {
  TempDir dir("align");
  AlignmentResult r;
  r.object_id = 3;
  r.cad_model_id = "cube";
  r.class_id = "cube";
  r.pose.t = {1.5, 0, -2};
  r.pose.rotation = UnitQuaternion::from_axis_angle(Vec3::UnitY(), deg2rad(30));
  r.pose.s = {1, 2, 0.5};
  r.score = 0.75;
  r.n_supporting_frames = 12;
  r.final_objective = 1.0 / 3.0;
  save_alignments({r}, dir / "a.jsonl");
  const auto back = load_alignments(dir / "a.jsonl");
  REQUIRE(back.size() == 1);
  CHECK(back[0] == r);
}

TEST_CASE("empty alignment list round-trips through a header-only file") {
  TempDir dir("align_empty");
  save_alignments({}, dir / "a.jsonl");
  const std::string text = testing::read_file(dir / "a.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(load_alignments(dir / "a.jsonl").empty());
}

TEST_CASE("non-finite alignment fields are rejected on save") {
  TempDir dir("align_nan");
  const auto base = [] {
    AlignmentResult r;
    r.cad_model_id = "cube";
    r.class_id = "cube";
    return r;
  };
  std::vector<std::function<void(AlignmentResult&)>> mutations = {
      [](AlignmentResult& r) { r.pose.t.x() = NAN; },
      [](AlignmentResult& r) { r.pose.s.y() = NAN; },
      [](AlignmentResult& r) { r.score = NAN; },
      [](AlignmentResult& r) { r.final_objective = INFINITY; },
  };
  for (const auto& mutate : mutations) {
    AlignmentResult r = base();
    mutate(r);
    CHECK_THROWS_AS(save_alignments({r}, dir / "a.jsonl"), ValidationError);
  }
}

TEST_CASE("scene and ground truth round-trip") {
  TempDir dir("scene_rt");
  const SynthScene sc = generate(testing::single_object_spec(4, 6));
  save_scene(sc.scene, dir.path());
  save_ground_truth(sc.ground_truth, dir / scene_files::kGroundTruth);
  const SceneInput back = load_scene(dir.path());
  CHECK(back.frames == sc.scene.frames);
  CHECK(back.observations == sc.scene.observations);
  CHECK(back.cad_db == sc.scene.cad_db);
  CHECK(load_ground_truth(dir / scene_files::kGroundTruth) == sc.ground_truth);
}

TEST_CASE("observation validation rejects each single-field mutation") {
  std::vector<std::pair<std::string, std::function<void(Observation&)>>> mutations = {
      {"box", [](Observation& o) { o.box.right = o.box.left; }},
      {"box", [](Observation& o) { o.box.bottom = o.box.top - 1; }},
      {"box", [](Observation& o) { o.box.left = NAN; }},
      {"score", [](Observation& o) { o.score = 1.5; }},
      {"score", [](Observation& o) { o.score = -0.1; }},
      {"center2d", [](Observation& o) { o.center2d.x() = INFINITY; }},
      {"class_id", [](Observation& o) { o.class_id.clear(); }},
      {"scale_pred", [](Observation& o) { o.scale_pred = Vec3(1, 0, 1); }},
      {"model_vote", [](Observation& o) { o.model_vote->cad_model_id.clear(); }},
  };
  CHECK_NOTHROW(valid_observation().validate());
  for (const auto& [field, mutate] : mutations) {
    Observation o = valid_observation();
    mutate(o);
    try {
      o.validate();
      FAIL("mutation of " << field << " accepted");
    } catch (const ValidationError& e) {
      CHECK(e.field().find(field) != std::string::npos);
    }
  }
}

TEST_CASE("camera and model validation reject invalid fields") {
  std::vector<std::function<void(CameraFrame&)>> frame_mutations = {
      [](CameraFrame& f) { f.K(0, 0) = -1; },
      [](CameraFrame& f) { f.K(0, 1) = 0.5; },
      [](CameraFrame& f) { f.E_R(0, 0) = 2; },
      [](CameraFrame& f) { f.E_R = -Mat3::Identity(); },
      [](CameraFrame& f) { f.image_width = 0; },
      [](CameraFrame& f) { f.e_t.z() = NAN; },
  };
  for (const auto& mutate : frame_mutations) {
    CameraFrame f = testing::simple_frame();
    mutate(f);
    CHECK_THROWS_AS(f.validate(), ValidationError);
  }
  std::vector<std::function<void(CadModel&)>> model_mutations = {
      [](CadModel& m) { m.id.clear(); },
      [](CadModel& m) { m.vertices.clear(); },
      [](CadModel& m) { m.vertices[0] *= 3.0; },
      [](CadModel& m) { m.symmetry_order = 0; },
      [](CadModel& m) { m.faces.push_back({0, 1, 1000}); },
  };
  for (const auto& mutate : model_mutations) {
    CadModel m = testing::unit_cube();
    mutate(m);
    CHECK_THROWS_AS(m.validate(), ValidationError);
  }
}

TEST_CASE("scene validation catches duplicates and unknown models") {
  SceneInput s = small_scene(2);
  s.frames[1].frame_index = 0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  SceneInput t = small_scene(2);
  Observation o = valid_observation(1);
  o.model_vote = ModelVote{"nope", {}};
  t.observations.push_back(o);
  CHECK_THROWS_AS(t.validate(), DanglingReference);
}

TEST_CASE("box_iou") {
  const Box2D a{0, 0, 10, 10};
  CHECK(box_iou(a, a) == 1.0);
  CHECK(box_iou(a, {10, 0, 20, 10}) == 0.0);
  CHECK(box_iou(a, {5, 0, 15, 10}) == doctest::Approx(50.0 / 150.0));
}

TEST_CASE("export_scene_mesh examples") {
  TempDir dir("export");
  const CadModel cube = testing::unit_cube();
  CadModel other = build_model({"tall", "box", Primitive::cylinder, {0.5, 0.5, 1.0}, 12, 1});
  AlignmentResult r;
  r.cad_model_id = "cube";
  r.class_id = "cube";

  export_scene_mesh({r}, {cube}, dir / "a.obj");
  auto vs = obj_vertices(testing::read_file(dir / "a.obj"));
  REQUIRE(vs.size() == cube.vertices.size());
  for (std::size_t i = 0; i < vs.size(); ++i) CHECK((vs[i] - cube.vertices[i]).norm() < 1e-15);

  r.pose.t = {0, 0, 5};
  export_scene_mesh({r}, {cube}, dir / "b.obj");
  vs = obj_vertices(testing::read_file(dir / "b.obj"));
  REQUIRE(vs.size() == cube.vertices.size());
  for (std::size_t i = 0; i < vs.size(); ++i) CHECK((vs[i] - cube.vertices[i] - Vec3(0, 0, 5)).norm() < 1e-12);

  AlignmentResult r2 = r;
  r2.cad_model_id = "tall";
  export_scene_mesh({r, r2}, {cube, other}, dir / "c.obj");
  CHECK(obj_vertices(testing::read_file(dir / "c.obj")).size() == cube.vertices.size() + other.vertices.size());

  r2.cad_model_id = "missing";
  CHECK_THROWS_AS(export_scene_mesh({r2}, {cube}, dir / "d.obj"), DanglingReference);
}

TEST_CASE("unknown fields are reported as warnings") {
  TempDir dir("warn");
  SceneInput s = small_scene(1);
  s.observations.push_back(valid_observation());
  save_scene(s, dir.path());
  patch_first_observation(dir.path(), [](json& j) { j["colour"] = "red"; });
  Warnings w;
  CHECK_NOTHROW(load_scene(dir.path(), &w));
  REQUIRE(w.size() == 1);
  CHECK(w[0].find("colour") != std::string::npos);
}
