#include "mvalign/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "jsonl.hpp"
#include "mvalign/errors.hpp"

namespace mvalign {

using jsonl::json;

namespace {

constexpr const char* kFramesFormat = "mvalign.frames";
constexpr const char* kObservationsFormat = "mvalign.observations";
constexpr const char* kModelsFormat = "mvalign.models";
constexpr const char* kGroundTruthFormat = "mvalign.ground_truth";
constexpr const char* kAlignmentsFormat = "mvalign.alignments";

bool finite(double v) { return std::isfinite(v); }

template <typename Derived>
bool finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

// ---- encode ----

json vec(const Vec2& v) { return json::array({v.x(), v.y()}); }
json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }
json mat(const Mat3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}
json quat(const UnitQuaternion& q) {
  const UnitQuaternion c = q.canonical_sign();
  return json::array({c.w(), c.x(), c.y(), c.z()});
}
json pose_json(const Pose9DoF& p) { return json{{"t", vec(p.t)}, {"rotation", quat(p.rotation)}, {"s", vec(p.s)}}; }

json frame_json(const CameraFrame& f) {
  return json{{"frame_index", f.frame_index}, {"K", mat(f.K)},         {"E_R", mat(f.E_R)},
              {"e_t", vec(f.e_t)},            {"image_width", f.image_width}, {"image_height", f.image_height}};
}

json observation_json(const Observation& o) {
  json j{{"frame_index", o.frame_index},
         {"class_id", o.class_id},
         {"score", o.score},
         {"box", json::array({o.box.left, o.box.top, o.box.right, o.box.bottom})},
         {"center2d", vec(o.center2d)},
         {"rotation_pred", quat(o.rotation_pred)}};
  if (o.scale_pred) j["scale_pred"] = vec(*o.scale_pred);
  if (o.model_vote) {
    j["model_vote"] = json{{"cad_model_id", o.model_vote->cad_model_id}, {"embedding", o.model_vote->embedding}};
  }
  if (o.track_id) j["track_id"] = *o.track_id;
  return j;
}

json model_json(const CadModel& m) {
  json verts = json::array();
  for (const auto& v : m.vertices) verts.push_back(vec(v));
  json faces = json::array();
  for (const auto& f : m.faces) faces.push_back(json::array({f[0], f[1], f[2]}));
  json j{{"id", m.id},
         {"class_id", m.class_id},
         {"vertices", verts},
         {"faces", faces},
         {"is_vertically_symmetric", m.is_vertically_symmetric},
         {"symmetry_order", m.symmetry_order}};
  if (!m.embedding.empty()) j["embedding"] = m.embedding;
  return j;
}

// ---- decode ----

struct Ctx {
  const std::filesystem::path& file;
  std::size_t line;

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(file.string(), line, what); }

  const json& field(const json& obj, const char* key) const {
    auto it = obj.find(key);
    if (it == obj.end()) fail(std::string("missing field '") + key + "'");
    return *it;
  }
  double number(const json& j, const std::string& what) const {
    if (!j.is_number()) fail(what + " must be a number");
    return j.get<double>();
  }
  int integer(const json& j, const std::string& what) const {
    if (!j.is_number_integer()) fail(what + " must be an integer");
    return j.get<int>();
  }
  std::string string(const json& j, const std::string& what) const {
    if (!j.is_string()) fail(what + " must be a string");
    return j.get<std::string>();
  }
  std::vector<double> numbers(const json& j, const std::string& what, std::size_t n) const {
    if (!j.is_array() || (n && j.size() != n)) fail(what + " must be an array of " + std::to_string(n) + " numbers");
    std::vector<double> out;
    for (const auto& e : j) out.push_back(number(e, what));
    return out;
  }
  Vec2 vec2(const json& j, const std::string& what) const {
    auto v = numbers(j, what, 2);
    return {v[0], v[1]};
  }
  Vec3 vec3(const json& j, const std::string& what) const {
    auto v = numbers(j, what, 3);
    return {v[0], v[1], v[2]};
  }
  Mat3 mat3(const json& j, const std::string& what) const {
    if (!j.is_array() || j.size() != 3) fail(what + " must be a 3x3 array");
    Mat3 m;
    for (int r = 0; r < 3; ++r) {
      auto row = numbers(j[r], what, 3);
      for (int c = 0; c < 3; ++c) m(r, c) = row[c];
    }
    return m;
  }
  UnitQuaternion quat(const json& j, const std::string& what) const {
    auto v = numbers(j, what, 4);
    try {
      return UnitQuaternion(v[0], v[1], v[2], v[3]).canonical_sign();
    } catch (const ValidationError&) {
      throw ValidationError(what, "quaternion must be finite and non-zero");
    }
  }
  Pose9DoF pose(const json& j, const std::string& what) const {
    if (!j.is_object()) fail(what + " must be an object");
    Pose9DoF p;
    p.t = vec3(field(j, "t"), what + ".t");
    p.rotation = quat(field(j, "rotation"), what + ".rotation");
    p.s = vec3(field(j, "s"), what + ".s");
    return p;
  }
};

CameraFrame parse_frame(const Ctx& c, const json& j) {
  CameraFrame f;
  f.frame_index = c.integer(c.field(j, "frame_index"), "frame_index");
  f.K = c.mat3(c.field(j, "K"), "K");
  f.E_R = c.mat3(c.field(j, "E_R"), "E_R");
  f.e_t = c.vec3(c.field(j, "e_t"), "e_t");
  f.image_width = c.integer(c.field(j, "image_width"), "image_width");
  f.image_height = c.integer(c.field(j, "image_height"), "image_height");
  return f;
}

Observation parse_observation(const Ctx& c, const json& j) {
  Observation o;
  o.frame_index = c.integer(c.field(j, "frame_index"), "frame_index");
  o.class_id = c.string(c.field(j, "class_id"), "class_id");
  o.score = c.number(c.field(j, "score"), "score");
  auto b = c.numbers(c.field(j, "box"), "box", 4);
  o.box = {b[0], b[1], b[2], b[3]};
  o.center2d = c.vec2(c.field(j, "center2d"), "center2d");
  o.rotation_pred = c.quat(c.field(j, "rotation_pred"), "rotation_pred");
  if (auto it = j.find("scale_pred"); it != j.end() && !it->is_null()) o.scale_pred = c.vec3(*it, "scale_pred");
  if (auto it = j.find("model_vote"); it != j.end() && !it->is_null()) {
    ModelVote v;
    v.cad_model_id = c.string(c.field(*it, "cad_model_id"), "model_vote.cad_model_id");
    if (auto e = it->find("embedding"); e != it->end()) v.embedding = c.numbers(*e, "model_vote.embedding", 0);
    o.model_vote = std::move(v);
  }
  if (auto it = j.find("track_id"); it != j.end() && !it->is_null()) o.track_id = c.integer(*it, "track_id");
  return o;
}

CadModel parse_model(const Ctx& c, const json& j) {
  CadModel m;
  m.id = c.string(c.field(j, "id"), "id");
  m.class_id = c.string(c.field(j, "class_id"), "class_id");
  const json& verts = c.field(j, "vertices");
  if (!verts.is_array()) c.fail("vertices must be an array");
  for (const auto& v : verts) m.vertices.push_back(c.vec3(v, "vertices[]"));
  if (auto it = j.find("faces"); it != j.end()) {
    if (!it->is_array()) c.fail("faces must be an array");
    for (const auto& f : *it) {
      if (!f.is_array() || f.size() != 3) c.fail("faces[] must hold 3 indices");
      m.faces.push_back({c.integer(f[0], "faces[]"), c.integer(f[1], "faces[]"), c.integer(f[2], "faces[]")});
    }
  }
  const json& sym = c.field(j, "is_vertically_symmetric");
  if (!sym.is_boolean()) c.fail("is_vertically_symmetric must be a boolean");
  m.is_vertically_symmetric = sym.get<bool>();
  m.symmetry_order = c.integer(c.field(j, "symmetry_order"), "symmetry_order");
  if (auto it = j.find("embedding"); it != j.end()) m.embedding = c.numbers(*it, "embedding", 0);
  return m;
}

AlignmentResult parse_alignment(const Ctx& c, const json& j) {
  AlignmentResult r;
  r.object_id = c.integer(c.field(j, "object_id"), "object_id");
  r.cad_model_id = c.string(c.field(j, "cad_model_id"), "cad_model_id");
  r.class_id = c.string(c.field(j, "class_id"), "class_id");
  r.pose = c.pose(c.field(j, "pose"), "pose");
  r.score = c.number(c.field(j, "score"), "score");
  r.n_supporting_frames = c.integer(c.field(j, "n_supporting_frames"), "n_supporting_frames");
  r.final_objective = c.number(c.field(j, "final_objective"), "final_objective");
  return r;
}

GroundTruthObject parse_ground_truth(const Ctx& c, const json& j) {
  GroundTruthObject g;
  g.class_id = c.string(c.field(j, "class_id"), "class_id");
  g.cad_model_id = c.string(c.field(j, "cad_model_id"), "cad_model_id");
  g.pose = c.pose(c.field(j, "pose"), "pose");
  return g;
}

template <typename T, typename Parse>
std::vector<T> load_records(const std::filesystem::path& file, const char* format,
                            std::initializer_list<const char*> known, Parse parse, Warnings* warnings) {
  std::vector<T> out;
  for (const auto& rec : jsonl::read(file, format, warnings)) {
    const Ctx ctx{file, rec.line};
    jsonl::warn_unknown(rec.value, known, file.string() + ":" + std::to_string(rec.line), warnings);
    try {
      out.push_back(parse(ctx, rec.value));
    } catch (const nlohmann::json::exception& e) {
      ctx.fail(e.what());
    }
  }
  return out;
}

std::string indexed(const std::string& base, std::size_t i) { return base + "[" + std::to_string(i) + "]"; }

}  // namespace

double box_iou(const Box2D& a, const Box2D& b) {
  const double w = std::min(a.right, b.right) - std::max(a.left, b.left);
  const double h = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

void Observation::validate(const std::string& field) const {
  if (!finite(box.left) || !finite(box.top) || !finite(box.right) || !finite(box.bottom)) {
    throw ValidationError(field + ".box", "non-finite box");
  }
  if (!(box.left < box.right) || !(box.top < box.bottom)) {
    throw ValidationError(field + ".box", "box requires left < right and top < bottom");
  }
  if (!(score >= 0.0 && score <= 1.0)) throw ValidationError(field + ".score", "score must lie in [0, 1]");
  if (!finite(center2d)) throw ValidationError(field + ".center2d", "non-finite center");
  if (class_id.empty()) throw ValidationError(field + ".class_id", "empty class id");
  if (scale_pred) {
    if (!finite(*scale_pred) || (scale_pred->array() <= 0.0).any()) {
      throw ValidationError(field + ".scale_pred", "scale prediction must be positive");
    }
  }
  if (model_vote) {
    if (model_vote->cad_model_id.empty()) throw ValidationError(field + ".model_vote", "empty model id");
    for (double e : model_vote->embedding) {
      if (!finite(e)) throw ValidationError(field + ".model_vote.embedding", "non-finite embedding");
    }
  }
}

std::pair<Vec3, Vec3> CadModel::bounds() const {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  return {lo, hi};
}

void CadModel::validate(const std::string& field) const {
  if (id.empty()) throw ValidationError(field + ".id", "empty model id");
  if (class_id.empty()) throw ValidationError(field + ".class_id", "empty class id");
  if (vertices.empty()) throw ValidationError(field + ".vertices", "model has no vertices");
  for (const auto& v : vertices) {
    if (!finite(v)) throw ValidationError(field + ".vertices", "non-finite vertex");
  }
  const auto [lo, hi] = bounds();
  if ((0.5 * (lo + hi)).cwiseAbs().maxCoeff() > 1e-6) {
    throw ValidationError(field + ".vertices", "bounding box is not centered at the origin");
  }
  if (std::abs((hi - lo).maxCoeff() - kCanonicalExtent) > 1e-6) {
    throw ValidationError(field + ".vertices", "largest extent is not normalized to 1");
  }
  for (const auto& f : faces) {
    for (int k : f) {
      if (k < 0 || k >= static_cast<int>(vertices.size())) {
        throw ValidationError(field + ".faces", "face index out of range");
      }
    }
  }
  if (symmetry_order < 1) throw ValidationError(field + ".symmetry_order", "must be >= 1");
  if (is_vertically_symmetric != (symmetry_order > 1)) {
    throw ValidationError(field + ".is_vertically_symmetric", "inconsistent with symmetry_order");
  }
  for (double e : embedding) {
    if (!finite(e)) throw ValidationError(field + ".embedding", "non-finite embedding");
  }
}

std::vector<Vec3> canonicalize_vertices(std::vector<Vec3> vertices) {
  if (vertices.empty()) return vertices;
  Vec3 lo = vertices.front(), hi = vertices.front();
  for (const auto& v : vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vec3 center = 0.5 * (lo + hi);
  const double extent = (hi - lo).maxCoeff();
  const double k = extent > 0.0 ? CadModel::kCanonicalExtent / extent : 1.0;
  for (auto& v : vertices) v = (v - center) * k;
  return vertices;
}

const CameraFrame& SceneInput::frame(int frame_index) const {
  // Frames are usually stored densely in index order.
  if (frame_index >= 0 && frame_index < static_cast<int>(frames.size()) && frames[frame_index].frame_index == frame_index) {
    return frames[frame_index];
  }
  auto it = std::find_if(frames.begin(), frames.end(), [&](const auto& f) { return f.frame_index == frame_index; });
  if (it == frames.end()) throw DanglingReference("unknown frame index " + std::to_string(frame_index));
  return *it;
}

const CadModel* SceneInput::find_model(const std::string& id) const {
  auto it = std::find_if(cad_db.begin(), cad_db.end(), [&](const auto& m) { return m.id == id; });
  return it == cad_db.end() ? nullptr : &*it;
}

const CadModel& SceneInput::model(const std::string& id) const {
  if (const CadModel* m = find_model(id)) return *m;
  throw DanglingReference("unknown CAD model '" + id + "'");
}

void SceneInput::validate() const {
  std::set<int> frame_ids;
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i].validate(indexed("frames", i));
    if (!frame_ids.insert(frames[i].frame_index).second) {
      throw ValidationError(indexed("frames", i) + ".frame_index", "duplicate frame index");
    }
  }
  std::set<std::string> model_ids;
  std::size_t embedding_dim = 0;
  bool have_dim = false;
  auto check_dim = [&](std::size_t dim, const std::string& field) {
    if (dim == 0) return;
    if (have_dim && dim != embedding_dim) throw ValidationError(field, "inconsistent embedding dimension");
    embedding_dim = dim;
    have_dim = true;
  };
  for (std::size_t i = 0; i < cad_db.size(); ++i) {
    cad_db[i].validate(indexed("models", i));
    if (!model_ids.insert(cad_db[i].id).second) throw ValidationError(indexed("models", i) + ".id", "duplicate id");
    check_dim(cad_db[i].embedding.size(), indexed("models", i) + ".embedding");
  }
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    o.validate(indexed("observations", i));
    if (!frame_ids.contains(o.frame_index)) {
      throw DanglingReference(indexed("observations", i) + ": frame " + std::to_string(o.frame_index) +
                              " does not exist");
    }
    if (o.model_vote) {
      if (!model_ids.contains(o.model_vote->cad_model_id)) {
        throw DanglingReference(indexed("observations", i) + ": CAD model '" + o.model_vote->cad_model_id +
                                "' does not exist");
      }
      check_dim(o.model_vote->embedding.size(), indexed("observations", i) + ".model_vote.embedding");
    }
  }
}

void AlignmentResult::validate(const std::string& field) const {
  pose.validate(field + ".pose");
  if (!finite(score)) throw ValidationError(field + ".score", "non-finite score");
  if (!finite(final_objective)) throw ValidationError(field + ".final_objective", "non-finite objective");
  if (n_supporting_frames < 1) throw ValidationError(field + ".n_supporting_frames", "must be >= 1");
}

std::vector<CadModel> load_models(const std::filesystem::path& file, Warnings* warnings) {
  auto models = load_records<CadModel>(
      file, kModelsFormat,
      {"id", "class_id", "vertices", "faces", "is_vertically_symmetric", "symmetry_order", "embedding"}, parse_model,
      warnings);
  for (std::size_t i = 0; i < models.size(); ++i) models[i].validate(indexed("models", i));
  return models;
}

SceneInput load_scene(const std::filesystem::path& dir, Warnings* warnings) {
  SceneInput scene;
  scene.frames = load_records<CameraFrame>(dir / scene_files::kFrames, kFramesFormat,
                                           {"frame_index", "K", "E_R", "e_t", "image_width", "image_height"},
                                           parse_frame, warnings);
  scene.observations = load_records<Observation>(
      dir / scene_files::kObservations, kObservationsFormat,
      {"frame_index", "class_id", "score", "box", "center2d", "rotation_pred", "scale_pred", "model_vote", "track_id"},
      parse_observation, warnings);
  scene.cad_db = load_models(dir / scene_files::kModels, warnings);
  scene.validate();
  return scene;
}

std::string observation_record(const Observation& obs) { return observation_json(obs).dump(); }

void save_scene(const SceneInput& scene, const std::filesystem::path& dir) {
  scene.validate();
  std::filesystem::create_directories(dir);
  std::vector<json> frames, observations, models;
  for (const auto& f : scene.frames) frames.push_back(frame_json(f));
  for (const auto& o : scene.observations) observations.push_back(observation_json(o));
  for (const auto& m : scene.cad_db) models.push_back(model_json(m));
  jsonl::write(dir / scene_files::kFrames, kFramesFormat, frames);
  jsonl::write(dir / scene_files::kObservations, kObservationsFormat, observations);
  jsonl::write(dir / scene_files::kModels, kModelsFormat, models);
}

void save_alignments(const std::vector<AlignmentResult>& results, const std::filesystem::path& file) {
  std::vector<json> records;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    r.validate(indexed("alignments", i));
    records.push_back(json{{"object_id", r.object_id},
                           {"cad_model_id", r.cad_model_id},
                           {"class_id", r.class_id},
                           {"pose", pose_json(r.pose)},
                           {"score", r.score},
                           {"n_supporting_frames", r.n_supporting_frames},
                           {"final_objective", r.final_objective}});
  }
  jsonl::write(file, kAlignmentsFormat, records);
}

std::vector<AlignmentResult> load_alignments(const std::filesystem::path& file, Warnings* warnings) {
  auto out = load_records<AlignmentResult>(
      file, kAlignmentsFormat,
      {"object_id", "cad_model_id", "class_id", "pose", "score", "n_supporting_frames", "final_objective"},
      parse_alignment, warnings);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].validate(indexed("alignments", i));
  return out;
}

void save_ground_truth(const std::vector<GroundTruthObject>& gt, const std::filesystem::path& file) {
  std::vector<json> records;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i].pose.validate(indexed("ground_truth", i) + ".pose");
    records.push_back(
        json{{"class_id", gt[i].class_id}, {"cad_model_id", gt[i].cad_model_id}, {"pose", pose_json(gt[i].pose)}});
  }
  jsonl::write(file, kGroundTruthFormat, records);
}

std::vector<GroundTruthObject> load_ground_truth(const std::filesystem::path& file, Warnings* warnings) {
  auto out = load_records<GroundTruthObject>(file, kGroundTruthFormat, {"class_id", "cad_model_id", "pose"},
                                             parse_ground_truth, warnings);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].pose.validate(indexed("ground_truth", i) + ".pose");
  return out;
}

void export_scene_mesh(const std::vector<AlignmentResult>& results, const std::vector<CadModel>& cad_db,
                       const std::filesystem::path& file) {
  std::vector<const CadModel*> models;
  for (const auto& r : results) {
    auto it = std::find_if(cad_db.begin(), cad_db.end(), [&](const auto& m) { return m.id == r.cad_model_id; });
    if (it == cad_db.end()) throw DanglingReference("unknown CAD model '" + r.cad_model_id + "'");
    models.push_back(&*it);
  }
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << std::setprecision(17);
  out << "# mvalign scene export, " << results.size() << " objects\n";
  std::size_t base = 1;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& r = results[i];
    const CadModel& m = *models[i];
    out << "o object_" << r.object_id << "_" << m.id << '\n';
    for (const auto& v : m.vertices) {
      const Vec3 w = object_to_world(r.pose, v);
      out << "v " << w.x() << ' ' << w.y() << ' ' << w.z() << '\n';
    }
    for (const auto& f : m.faces) out << "f " << base + f[0] << ' ' << base + f[1] << ' ' << base + f[2] << '\n';
    base += m.vertices.size();
  }
  if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace mvalign
