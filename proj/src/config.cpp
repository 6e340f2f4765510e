#include "mvalign/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mvalign/errors.hpp"

namespace mvalign {

namespace {

using json = nlohmann::ordered_json;

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json parse_document(const std::string& text, const std::string& source) {
  try {
    json j = json::parse(text);
    if (!j.is_object()) throw ParseError(source, 0, "top level must be an object");
    return j;
  } catch (const json::parse_error& e) {
    throw ParseError(source, 0, e.what());
  }
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + file.string());
  out << text;
  if (!out) throw IoError("write failed for " + file.string());
}

// Reads fields of one JSON object, remembering which keys were consumed so
// the rest can be reported.
class Fields {
 public:
  Fields(const json& j, std::string where, Warnings* warnings)
      : j_(j), where_(std::move(where)), warnings_(warnings) {
    if (!j_.is_object()) throw ValidationError(where_, "expected an object");
  }
  Fields(const Fields&) = delete;
  ~Fields() {
    if (!warnings_) return;
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) warnings_->push_back(path(key) + ": ignoring unknown field");
    }
  }

  std::string path(const std::string& key) const { return where_.empty() ? key : where_ + "." + key; }

  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void number(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ValidationError(path(key), "expected a number");
      out = v->get<double>();
    }
  }
  void integer(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) throw ValidationError(path(key), "expected an integer");
      out = v->get<int>();
    }
  }
  void unsigned_integer(const char* key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw ValidationError(path(key), "expected a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void boolean(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ValidationError(path(key), "expected true or false");
      out = v->get<bool>();
    }
  }
  void string(const char* key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ValidationError(path(key), "expected a string");
      out = v->get<std::string>();
    }
  }
  void vec3(const char* key, Vec3& out) {
    if (const json* v = find(key)) {
      if (!v->is_array() || v->size() != 3) throw ValidationError(path(key), "expected 3 numbers");
      for (int i = 0; i < 3; ++i) {
        if (!(*v)[i].is_number()) throw ValidationError(path(key), "expected 3 numbers");
        out[i] = (*v)[i].get<double>();
      }
    }
  }
  void numbers(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw ValidationError(path(key), "expected an array of numbers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) throw ValidationError(path(key), "expected an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }
  void int_range(const char* key, IntRange& out) {
    if (const json* v = find(key)) {
      if (v->is_number_integer()) {
        out.min = out.max = v->get<int>();
        return;
      }
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number_integer() || !(*v)[1].is_number_integer()) {
        throw ValidationError(path(key), "expected an integer or [min, max]");
      }
      out = {(*v)[0].get<int>(), (*v)[1].get<int>()};
    }
  }
  template <typename Fn>
  void object(const char* key, Fn&& fn) {
    if (const json* v = find(key)) {
      Fields sub(*v, path(key), warnings_);
      fn(sub);
    }
  }
  template <typename Enum>
  void choice(const char* key, Enum& out, std::initializer_list<std::pair<const char*, Enum>> options) {
    std::string name;
    string(key, name);
    if (name.empty()) return;
    std::string expected;
    for (const auto& [n, value] : options) {
      if (name == n) {
        out = value;
        return;
      }
      expected += expected.empty() ? n : std::string(", ") + n;
    }
    throw ValidationError(path(key), "expected one of " + expected + ", got '" + name + "'");
  }

  Warnings* warnings() const { return warnings_; }

 private:
  const json& j_;
  std::string where_;
  Warnings* warnings_;
  std::set<std::string> seen_;
};

json vec3_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

const std::initializer_list<std::pair<const char*, StepRule>> kStepRules{
    {"gradient", StepRule::gradient},
    {"sign_adaptive", StepRule::sign_adaptive},
    {"conjugate_gradient", StepRule::conjugate_gradient},
    {"lbfgs", StepRule::lbfgs}};

const char* step_rule_name(StepRule r) {
  for (const auto& [name, value] : kStepRules) {
    if (value == r) return name;
  }
  return "";
}

int symmetry_value(const json& v, const std::string& where) {
  if (v.is_string() && v.get<std::string>() == "continuous") return kContinuousSymmetryOrder;
  if (v.is_number_integer() && v.get<int>() >= 1) return v.get<int>();
  throw ValidationError(where, "expected an order >= 1 or \"continuous\"");
}

json symmetry_json(int order) {
  return order == kContinuousSymmetryOrder ? json("continuous") : json(order);
}

SymmetryTable read_symmetry(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where, "expected an object of class -> order");
  SymmetryTable table;
  for (const auto& [cls, v] : j.items()) table[cls] = symmetry_value(v, where + "." + cls);
  return table;
}

void read_weights(Fields& f, ObjectiveWeights& w) {
  f.number("translation", w.translation);
  f.number("center", w.center);
  f.number("rotation", w.rotation);
  f.number("scale_box", w.scale_box);
  f.number("scale_rec", w.scale_rec);
}

void read_solver(Fields& f, SolverConfig& s) {
  f.integer("max_iterations", s.max_iterations);
  f.object("learning_rate", [&](Fields& g) {
    g.number("translation", s.learning_rate.translation);
    g.number("center", s.learning_rate.center);
    g.number("depth", s.learning_rate.depth);
    g.number("quaternion", s.learning_rate.quaternion);
    g.number("log_scale", s.learning_rate.log_scale);
  });
  f.choice("step_rule", s.step_rule, kStepRules);
  f.number("lr_growth", s.lr_growth);
  f.number("lr_shrink", s.lr_shrink);
  f.number("convergence_tol", s.convergence_tol);
  f.integer("convergence_window", s.convergence_window);
  f.number("min_depth", s.min_depth);
  f.boolean("init_rotation_from_observations", s.init_rotation_from_observations);
  f.boolean("init_translation_from_rays", s.init_translation_from_rays);
  f.integer("max_observations", s.max_observations);
  f.integer("smoothing_stages", s.smoothing_stages);
  f.object("initial_smoothing", [&](Fields& g) {
    g.number("pixel", s.initial_smoothing.pixel);
    g.number("metric", s.initial_smoothing.metric);
    g.number("rotation", s.initial_smoothing.rotation);
  });
  f.integer("warm_smoothing_stages", s.warm_smoothing_stages);
  f.boolean("warm_also_cold", s.warm_also_cold);
}

}  // namespace

void RunConfig::validate() const {
  weights.validate();
  solver.validate();
  tracker.validate();
  cluster.validate();
  thresholds.validate();
  sweeps.validate();
  if (!(track_budget_fraction > 0.0 && track_budget_fraction <= 1.0)) {
    throw ValidationError("track_budget_fraction", "must lie in (0, 1]");
  }
  for (double t : iou_thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw ValidationError("iou_thresholds", "must lie in (0, 1]");
  }
  for (const auto& [cls, order] : symmetry) {
    if (order < 1) throw ValidationError("symmetry." + cls, "must be >= 1");
  }
  if (jobs < 0) throw ValidationError("jobs", "must be >= 0");
}

IntegrationOptions RunConfig::integration_options() const {
  IntegrationOptions o;
  o.tracker = tracker;
  o.cluster = cluster;
  o.track_budget_fraction = track_budget_fraction;
  o.jobs = jobs;
  return o;
}

RunConfig parse_run_config(const std::string& text, const std::string& source, Warnings* warnings) {
  const json j = parse_document(text, source);
  RunConfig c;
  {
    Fields f(j, "", warnings);
    f.object("weights", [&](Fields& g) { read_weights(g, c.weights); });
    f.object("solver", [&](Fields& g) { read_solver(g, c.solver); });
    f.object("tracker", [&](Fields& g) {
      g.number("iou_threshold", c.tracker.iou_threshold);
      g.integer("max_gap", c.tracker.max_gap);
      g.boolean("use_observation_track_ids", c.tracker.use_observation_track_ids);
    });
    f.object("cluster", [&](Fields& g) {
      g.number("translation_radius", c.cluster.translation_radius);
      g.number("rotation_radius", c.cluster.rotation_radius);
      g.number("scale_radius", c.cluster.scale_radius);
    });
    f.number("track_budget_fraction", c.track_budget_fraction);
    f.object("thresholds", [&](Fields& g) {
      g.number("translation", c.thresholds.translation);
      g.number("rotation", c.thresholds.rotation);
      g.number("scale", c.thresholds.scale);
    });
    f.object("sweeps", [&](Fields& g) {
      g.numbers("translation", c.sweeps.translation);
      g.numbers("rotation", c.sweeps.rotation);
      g.numbers("scale", c.sweeps.scale);
    });
    f.numbers("iou_thresholds", c.iou_thresholds);
    if (const json* s = f.find("symmetry")) c.symmetry = read_symmetry(*s, "symmetry");
    f.integer("jobs", c.jobs);
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file, Warnings* warnings) {
  return parse_run_config(read_text(file), file.string(), warnings);
}

std::string run_config_json(const RunConfig& c) {
  const auto& s = c.solver;
  json symmetry = json::object();
  for (const auto& [cls, order] : c.symmetry) symmetry[cls] = symmetry_json(order);
  json j{
      {"weights",
       {{"translation", c.weights.translation},
        {"center", c.weights.center},
        {"rotation", c.weights.rotation},
        {"scale_box", c.weights.scale_box},
        {"scale_rec", c.weights.scale_rec}}},
      {"solver",
       {{"max_iterations", s.max_iterations},
        {"learning_rate",
         {{"translation", s.learning_rate.translation},
          {"center", s.learning_rate.center},
          {"depth", s.learning_rate.depth},
          {"quaternion", s.learning_rate.quaternion},
          {"log_scale", s.learning_rate.log_scale}}},
        {"step_rule", step_rule_name(s.step_rule)},
        {"lr_growth", s.lr_growth},
        {"lr_shrink", s.lr_shrink},
        {"convergence_tol", s.convergence_tol},
        {"convergence_window", s.convergence_window},
        {"min_depth", s.min_depth},
        {"init_rotation_from_observations", s.init_rotation_from_observations},
        {"init_translation_from_rays", s.init_translation_from_rays},
        {"max_observations", s.max_observations},
        {"smoothing_stages", s.smoothing_stages},
        {"initial_smoothing",
         {{"pixel", s.initial_smoothing.pixel},
          {"metric", s.initial_smoothing.metric},
          {"rotation", s.initial_smoothing.rotation}}},
        {"warm_smoothing_stages", s.warm_smoothing_stages},
        {"warm_also_cold", s.warm_also_cold}}},
      {"tracker",
       {{"iou_threshold", c.tracker.iou_threshold},
        {"max_gap", c.tracker.max_gap},
        {"use_observation_track_ids", c.tracker.use_observation_track_ids}}},
      {"cluster",
       {{"translation_radius", c.cluster.translation_radius},
        {"rotation_radius", c.cluster.rotation_radius},
        {"scale_radius", c.cluster.scale_radius}}},
      {"track_budget_fraction", c.track_budget_fraction},
      {"thresholds",
       {{"translation", c.thresholds.translation},
        {"rotation", c.thresholds.rotation},
        {"scale", c.thresholds.scale}}},
      {"sweeps",
       {{"translation", c.sweeps.translation}, {"rotation", c.sweeps.rotation}, {"scale", c.sweeps.scale}}},
      {"iou_thresholds", c.iou_thresholds},
      {"symmetry", symmetry},
      {"jobs", c.jobs}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Synthetic scene specs

namespace {

const std::initializer_list<std::pair<const char*, Primitive>> kPrimitives{
    {"box", Primitive::box}, {"cylinder", Primitive::cylinder}, {"lshape", Primitive::lshape}};
const std::initializer_list<std::pair<const char*, Layout>> kLayouts{{"box", Layout::box}, {"ring", Layout::ring}};
const std::initializer_list<std::pair<const char*, TrajectoryKind>> kTrajectories{
    {"orbit", TrajectoryKind::orbit}, {"line", TrajectoryKind::line}, {"waypoints", TrajectoryKind::waypoints}};

template <typename Enum>
const char* name_of(std::initializer_list<std::pair<const char*, Enum>> options, Enum value) {
  for (const auto& [name, v] : options) {
    if (v == value) return name;
  }
  return "";
}

json range_json(const IntRange& r) { return json::array({r.min, r.max}); }

}  // namespace

SynthSpec parse_synth_spec(const std::string& text, const std::string& source, Warnings* warnings) {
  const json j = parse_document(text, source);
  SynthSpec s;
  Fields f(j, "", warnings);
  f.unsigned_integer("seed", s.seed);
  f.int_range("n_objects", s.n_objects);
  if (const json* list = f.find("templates")) {
    if (!list->is_array()) throw ValidationError("templates", "expected an array");
    for (std::size_t i = 0; i < list->size(); ++i) {
      Fields t((*list)[i], "templates[" + std::to_string(i) + "]", warnings);
      ObjectTemplate tmpl;
      t.string("model_id", tmpl.model_id);
      t.string("class_id", tmpl.class_id);
      t.choice("primitive", tmpl.primitive, kPrimitives);
      t.vec3("dims", tmpl.dims);
      t.integer("segments", tmpl.segments);
      if (const json* v = t.find("symmetry")) tmpl.symmetry_order = symmetry_value(*v, t.path("symmetry"));
      if (tmpl.model_id.empty() || tmpl.class_id.empty()) {
        throw ValidationError(t.path("model_id"), "model_id and class_id are required");
      }
      s.templates.push_back(tmpl);
    }
  }
  f.object("pose", [&](Fields& g) {
    auto& p = s.pose;
    g.choice("layout", p.layout, kLayouts);
    g.vec3("t_min", p.t_min);
    g.vec3("t_max", p.t_max);
    g.vec3("ring_center", p.ring_center);
    g.number("ring_radius_min", p.ring_radius_min);
    g.number("ring_radius_max", p.ring_radius_max);
    g.number("ring_start_deg", p.ring_start_deg);
    g.number("ring_end_deg", p.ring_end_deg);
    g.number("ring_jitter", p.ring_jitter);
    g.number("z_min", p.z_min);
    g.number("z_max", p.z_max);
    g.number("yaw_min_deg", p.yaw_min_deg);
    g.number("yaw_max_deg", p.yaw_max_deg);
    g.vec3("s_min", p.s_min);
    g.vec3("s_max", p.s_max);
    g.number("min_separation", p.min_separation);
  });
  f.object("trajectory", [&](Fields& g) {
    auto& t = s.trajectory;
    g.choice("kind", t.kind, kTrajectories);
    g.int_range("n_frames", t.n_frames);
    g.vec3("center", t.center);
    g.number("radius", t.radius);
    g.number("height", t.height);
    g.number("start_deg", t.start_deg);
    g.number("end_deg", t.end_deg);
    g.boolean("facing_outward", t.facing_outward);
    g.number("pitch_deg", t.pitch_deg);
    g.vec3("look_at", t.look_at);
    g.vec3("from", t.from);
    g.vec3("to", t.to);
    if (const json* w = g.find("waypoints")) {
      if (!w->is_array()) throw ValidationError(g.path("waypoints"), "expected an array of points");
      for (const auto& p : *w) {
        if (!p.is_array() || p.size() != 3) throw ValidationError(g.path("waypoints"), "expected 3 numbers per point");
        t.waypoints.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
      }
    }
  });
  f.object("camera", [&](Fields& g) {
    auto& c = s.camera;
    g.number("fx", c.fx);
    g.number("fy", c.fy);
    g.number("cx", c.cx);
    g.number("cy", c.cy);
    g.integer("width", c.width);
    g.integer("height", c.height);
  });
  f.object("visibility", [&](Fields& g) {
    g.number("margin_px", s.visibility.margin_px);
    g.boolean("require_each_object_observed", s.visibility.require_each_object_observed);
    if (const json* gaps = g.find("gaps")) {
      if (!gaps->is_array()) throw ValidationError(g.path("gaps"), "expected an array");
      for (std::size_t i = 0; i < gaps->size(); ++i) {
        Fields h((*gaps)[i], g.path("gaps") + "[" + std::to_string(i) + "]", warnings);
        VisibilityGap gap;
        h.integer("object", gap.object);
        h.integer("first_frame", gap.first_frame);
        h.integer("last_frame", gap.last_frame);
        s.visibility.gaps.push_back(gap);
      }
    }
  });
  f.object("noise", [&](Fields& g) {
    auto& n = s.noise;
    g.number("center_sigma", n.center_sigma);
    g.number("rotation_sigma", n.rotation_sigma);
    g.number("box_sigma", n.box_sigma);
    g.number("scale_sigma", n.scale_sigma);
    g.number("embedding_sigma", n.embedding_sigma);
    g.number("dropout_rate", n.dropout_rate);
    g.number("vote_error_rate", n.vote_error_rate);
    g.object("score", [&](Fields& h) {
      h.number("base", n.score.base);
      h.number("slope", n.score.slope);
      h.number("floor", n.score.floor);
    });
  });
  f.boolean("emit_scale_pred", s.emit_scale_pred);
  f.boolean("emit_track_ids", s.emit_track_ids);
  f.integer("embedding_dim", s.embedding_dim);
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& file, Warnings* warnings) {
  return parse_synth_spec(read_text(file), file.string(), warnings);
}

std::string synth_spec_json(const SynthSpec& s) {
  json templates = json::array();
  for (const auto& t : s.templates) {
    templates.push_back({{"model_id", t.model_id},
                         {"class_id", t.class_id},
                         {"primitive", name_of(kPrimitives, t.primitive)},
                         {"dims", vec3_json(t.dims)},
                         {"segments", t.segments},
                         {"symmetry", symmetry_json(t.symmetry_order)}});
  }
  json waypoints = json::array();
  for (const auto& w : s.trajectory.waypoints) waypoints.push_back(vec3_json(w));
  json gaps = json::array();
  for (const auto& g : s.visibility.gaps) {
    gaps.push_back({{"object", g.object}, {"first_frame", g.first_frame}, {"last_frame", g.last_frame}});
  }
  const auto& p = s.pose;
  const auto& t = s.trajectory;
  const auto& n = s.noise;
  json j{{"seed", s.seed},
         {"n_objects", range_json(s.n_objects)},
         {"templates", templates},
         {"pose",
          {{"layout", name_of(kLayouts, p.layout)},
           {"t_min", vec3_json(p.t_min)},
           {"t_max", vec3_json(p.t_max)},
           {"ring_center", vec3_json(p.ring_center)},
           {"ring_radius_min", p.ring_radius_min},
           {"ring_radius_max", p.ring_radius_max},
           {"ring_start_deg", p.ring_start_deg},
           {"ring_end_deg", p.ring_end_deg},
           {"ring_jitter", p.ring_jitter},
           {"z_min", p.z_min},
           {"z_max", p.z_max},
           {"yaw_min_deg", p.yaw_min_deg},
           {"yaw_max_deg", p.yaw_max_deg},
           {"s_min", vec3_json(p.s_min)},
           {"s_max", vec3_json(p.s_max)},
           {"min_separation", p.min_separation}}},
         {"trajectory",
          {{"kind", name_of(kTrajectories, t.kind)},
           {"n_frames", range_json(t.n_frames)},
           {"center", vec3_json(t.center)},
           {"radius", t.radius},
           {"height", t.height},
           {"start_deg", t.start_deg},
           {"end_deg", t.end_deg},
           {"facing_outward", t.facing_outward},
           {"pitch_deg", t.pitch_deg},
           {"look_at", vec3_json(t.look_at)},
           {"from", vec3_json(t.from)},
           {"to", vec3_json(t.to)},
           {"waypoints", waypoints}}},
         {"camera",
          {{"fx", s.camera.fx},
           {"fy", s.camera.fy},
           {"cx", s.camera.cx},
           {"cy", s.camera.cy},
           {"width", s.camera.width},
           {"height", s.camera.height}}},
         {"visibility",
          {{"margin_px", s.visibility.margin_px},
           {"require_each_object_observed", s.visibility.require_each_object_observed},
           {"gaps", gaps}}},
         {"noise",
          {{"center_sigma", n.center_sigma},
           {"rotation_sigma", n.rotation_sigma},
           {"box_sigma", n.box_sigma},
           {"scale_sigma", n.scale_sigma},
           {"embedding_sigma", n.embedding_sigma},
           {"dropout_rate", n.dropout_rate},
           {"vote_error_rate", n.vote_error_rate},
           {"score", {{"base", n.score.base}, {"slope", n.score.slope}, {"floor", n.score.floor}}}}},
         {"emit_scale_pred", s.emit_scale_pred},
         {"emit_track_ids", s.emit_track_ids},
         {"embedding_dim", s.embedding_dim}};
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Class statistics and symmetry tables

ClassStatsTable load_class_stats(const std::filesystem::path& file, Warnings* warnings) {
  const json j = parse_document(read_text(file), file.string());
  ClassStatsTable table;
  Fields top(j, "", warnings);
  const json* classes = top.find("classes");
  if (!classes || !classes->is_object()) throw ValidationError("classes", "expected an object of class -> stats");
  for (const auto& [cls, v] : classes->items()) {
    Fields f(v, "classes." + cls, warnings);
    ClassStats s;
    f.vec3("scale", s.scale);
    f.number("depth", s.depth);
    f.integer("objects", s.objects);
    f.integer("observations", s.observations);
    if ((s.scale.array() <= 0.0).any() || !(s.depth > 0.0)) {
      throw ValidationError("classes." + cls, "scale and depth must be positive");
    }
    table[cls] = s;
  }
  return table;
}

void save_class_stats(const ClassStatsTable& stats, const std::filesystem::path& file) {
  json classes = json::object();
  for (const auto& [cls, s] : stats) {
    classes[cls] = {{"scale", vec3_json(s.scale)},
                    {"depth", s.depth},
                    {"objects", s.objects},
                    {"observations", s.observations}};
  }
  write_text(file, json{{"classes", classes}}.dump(2) + "\n");
}

SymmetryTable load_symmetry_table(const std::filesystem::path& file, Warnings*) {
  return read_symmetry(parse_document(read_text(file), file.string()), file.string());
}

SymmetryTable symmetry_for(const SymmetryTable& table, const std::vector<CadModel>& cad_db) {
  SymmetryTable out;
  for (const auto& m : cad_db) out.emplace(m.class_id, m.symmetry_order);
  for (const auto& [cls, order] : table) out[cls] = order;
  return out;
}

}  // namespace mvalign
