#include "mvalign/synth.hpp"

#include <algorithm>
#include <cmath>

#include "mvalign/errors.hpp"
#include "mvalign/objective.hpp"
#include "mvalign/random.hpp"

namespace mvalign {

namespace {

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Triangle> faces;
};

// Prism over a counter-clockwise polygon in the xy-plane, extruded along z.
Mesh extrude(const std::vector<Vec2>& polygon, double height) {
  Mesh m;
  const int n = static_cast<int>(polygon.size());
  for (const auto& p : polygon) m.vertices.emplace_back(p.x(), p.y(), 0.0);
  for (const auto& p : polygon) m.vertices.emplace_back(p.x(), p.y(), height);
  // Caps as fans from vertex 0; valid for convex and for the L profile below.
  for (int i = 1; i + 1 < n; ++i) {
    m.faces.push_back({0, i + 1, i});
    m.faces.push_back({n, n + i, n + i + 1});
  }
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.faces.push_back({i, j, n + j});
    m.faces.push_back({i, n + j, n + i});
  }
  return m;
}

double signed_volume(const Mesh& m) {
  double v = 0.0;
  for (const auto& f : m.faces) v += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]]));
  return v / 6.0;
}

Mesh primitive_mesh(const ObjectTemplate& t) {
  const Vec3 d = t.dims;
  Mesh m;
  switch (t.primitive) {
    case Primitive::box:
      m = extrude({{0, 0}, {d.x(), 0}, {d.x(), d.y()}, {0, d.y()}}, d.z());
      break;
    case Primitive::cylinder: {
      std::vector<Vec2> poly;
      const int n = std::max(t.segments, 3);
      for (int i = 0; i < n; ++i) {
        const double a = 2.0 * EIGEN_PI * i / n;
        poly.emplace_back(0.5 * d.x() * std::cos(a), 0.5 * d.y() * std::sin(a));
      }
      m = extrude(poly, d.z());
      break;
    }
    case Primitive::lshape: {
      // Side profile (seat plus backrest) in the xz-plane, extruded along y.
      const double back = 0.3 * d.x();
      const double seat = 0.45 * d.z();
      Mesh flat = extrude({{0, 0}, {d.x(), 0}, {d.x(), seat}, {back, seat}, {back, d.z()}, {0, d.z()}}, d.y());
      for (auto& v : flat.vertices) v = Vec3(v.x(), v.z(), v.y());
      m = flat;
      break;
    }
  }
  if (signed_volume(m) < 0.0) {
    for (auto& f : m.faces) std::swap(f[1], f[2]);
  }
  return m;
}

Vec3 draw_between(Rng& rng, const Vec3& lo, const Vec3& hi) {
  return {rng.uniform(lo.x(), hi.x()), rng.uniform(lo.y(), hi.y()), rng.uniform(lo.z(), hi.z())};
}

std::vector<Vec3> camera_positions(const TrajectorySpec& t, int n, std::vector<Vec3>& targets) {
  std::vector<Vec3> pos(n);
  targets.assign(n, t.look_at);
  const auto frac = [n](int k) { return n == 1 ? 0.0 : static_cast<double>(k) / (n - 1); };
  switch (t.kind) {
    case TrajectoryKind::orbit:
      for (int k = 0; k < n; ++k) {
        const double a = deg2rad(t.start_deg + (t.end_deg - t.start_deg) * frac(k));
        const Vec3 radial(std::cos(a), std::sin(a), 0.0);
        pos[k] = t.center + t.radius * radial + Vec3(0, 0, t.height);
        if (t.facing_outward) targets[k] = pos[k] + radial - Vec3(0, 0, std::tan(deg2rad(t.pitch_deg)));
      }
      break;
    case TrajectoryKind::line:
      for (int k = 0; k < n; ++k) pos[k] = t.from + (t.to - t.from) * frac(k);
      break;
    case TrajectoryKind::waypoints: {
      std::vector<double> cumulative{0.0};
      for (std::size_t i = 1; i < t.waypoints.size(); ++i) {
        cumulative.push_back(cumulative.back() + (t.waypoints[i] - t.waypoints[i - 1]).norm());
      }
      for (int k = 0; k < n; ++k) {
        const double s = cumulative.back() * frac(k);
        std::size_t i = 1;
        while (i + 1 < t.waypoints.size() && cumulative[i] < s) ++i;
        const double seg = cumulative[i] - cumulative[i - 1];
        const double u = seg > 0.0 ? (s - cumulative[i - 1]) / seg : 0.0;
        pos[k] = t.waypoints.size() == 1 ? t.waypoints[0] : t.waypoints[i - 1] + u * (t.waypoints[i] - t.waypoints[i - 1]);
      }
      break;
    }
  }
  return pos;
}

bool visible(const CameraFrame& frame, const GroundTruthObject& obj, const CadModel& model, double margin) {
  const Vec3 c = world_to_camera(frame, obj.pose.t);
  if (!(c.z() > kBoxNearPlane)) return false;
  const Vec2 px = project(frame, c);
  if (px.x() < margin || px.y() < margin || px.x() > frame.image_width - margin ||
      px.y() > frame.image_height - margin) {
    return false;
  }
  bool any_inside = false;
  for (const auto& v : model.vertices) {
    const Vec3 cv = world_to_camera(frame, object_to_world(obj.pose, v));
    if (!(cv.z() > kBoxNearPlane)) return false;
    const Vec2 p = project(frame, cv);
    any_inside = any_inside || (p.x() >= 0 && p.y() >= 0 && p.x() <= frame.image_width && p.y() <= frame.image_height);
  }
  return any_inside;
}

std::vector<double> unit_embedding(Rng& rng, int dim) {
  std::vector<double> e(dim);
  double n = 0.0;
  for (auto& v : e) {
    v = rng.normal();
    n += v * v;
  }
  n = std::sqrt(n);
  for (auto& v : e) v /= n;
  return e;
}

}  // namespace

void NoiseSpec::validate() const {
  for (double v : {center_sigma, rotation_sigma, box_sigma, scale_sigma, embedding_sigma}) {
    if (!(v >= 0.0)) throw InfeasibleSpec("noise magnitudes must be >= 0");
  }
  for (double p : {dropout_rate, vote_error_rate}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InfeasibleSpec("noise probabilities must lie in [0, 1]");
  }
}

NoiseSpec NoiseSpec::noiseless() const {
  NoiseSpec n = *this;
  n.center_sigma = n.rotation_sigma = n.box_sigma = n.scale_sigma = n.embedding_sigma = 0.0;
  return n;
}

void SynthSpec::validate() const {
  if (trajectory.n_frames.min < 1 || trajectory.n_frames.max < trajectory.n_frames.min) {
    throw InfeasibleSpec("n_frames must be >= 1");
  }
  if (n_objects.min < 1 || n_objects.max < n_objects.min) throw InfeasibleSpec("n_objects must be >= 1");
  if (templates.empty()) throw InfeasibleSpec("no object templates");
  if ((pose.s_min.array() <= 0.0).any() || (pose.s_max.array() < pose.s_min.array()).any()) {
    throw InfeasibleSpec("scale range must be positive and non-empty");
  }
  if ((pose.t_max.array() < pose.t_min.array()).any() || pose.yaw_max_deg < pose.yaw_min_deg ||
      pose.ring_radius_max < pose.ring_radius_min || pose.z_max < pose.z_min ||
      pose.ring_end_deg <= pose.ring_start_deg) {
    throw InfeasibleSpec("pose ranges must be non-empty");
  }
  if (trajectory.kind == TrajectoryKind::waypoints && trajectory.waypoints.empty()) {
    throw InfeasibleSpec("waypoint trajectory needs at least one waypoint");
  }
  if (camera.fx <= 0 || camera.fy <= 0 || camera.width <= 0 || camera.height <= 0) {
    throw InfeasibleSpec("invalid camera");
  }
  if (embedding_dim < 1) throw InfeasibleSpec("embedding_dim must be >= 1");
  noise.validate();
}

CadModel build_model(const ObjectTemplate& tmpl) {
  Mesh m = primitive_mesh(tmpl);
  CadModel model;
  model.id = tmpl.model_id;
  model.class_id = tmpl.class_id;
  model.vertices = canonicalize_vertices(std::move(m.vertices));
  model.faces = std::move(m.faces);
  model.symmetry_order = std::max(tmpl.symmetry_order, 1);
  model.is_vertically_symmetric = model.symmetry_order > 1;
  return model;
}

CameraFrame look_at_frame(int frame_index, const CameraSpec& camera, const Vec3& position, const Vec3& target,
                          const Vec3& up) {
  const Vec3 forward = (target - position).normalized();
  const Vec3 right = forward.cross(up).normalized();
  const Vec3 down = forward.cross(right);
  CameraFrame f;
  f.frame_index = frame_index;
  f.K << camera.fx, 0.0, camera.cx, 0.0, camera.fy, camera.cy, 0.0, 0.0, 1.0;
  f.E_R.row(0) = right.transpose();
  f.E_R.row(1) = down.transpose();
  f.E_R.row(2) = forward.transpose();
  f.e_t = -f.E_R * position;
  f.image_width = camera.width;
  f.image_height = camera.height;
  return f;
}

Observation render_observation(const CameraFrame& frame, const GroundTruthObject& object, const CadModel& model) {
  Observation o;
  o.frame_index = frame.frame_index;
  o.class_id = object.class_id;
  o.score = 1.0;
  o.center2d = project(frame, world_to_camera(frame, object.pose.t));
  o.rotation_pred = (UnitQuaternion::from_matrix(frame.E_R) * object.pose.rotation).canonical_sign();
  o.box = projected_box(frame, object.pose, model.vertices);
  o.scale_pred = object.pose.s;
  o.model_vote = ModelVote{model.id, model.embedding};
  return o;
}

SynthScene generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int n_objects = rng.uniform_int(spec.n_objects.min, spec.n_objects.max);
  const int n_frames = rng.uniform_int(spec.trajectory.n_frames.min, spec.trajectory.n_frames.max);

  SynthScene out;
  for (const auto& t : spec.templates) {
    CadModel m = build_model(t);
    m.embedding = unit_embedding(rng, spec.embedding_dim);
    out.scene.cad_db.push_back(std::move(m));
  }

  // Object placement.
  const auto& pr = spec.pose;
  const double ring_span = deg2rad(pr.ring_end_deg - pr.ring_start_deg);
  const bool full_turn = ring_span >= 2.0 * EIGEN_PI;
  const double ring_offset = deg2rad(pr.ring_start_deg) + (full_turn ? rng.uniform(0.0, 2.0 * EIGEN_PI) : 0.0);
  for (int i = 0; i < n_objects; ++i) {
    const int tmpl = rng.uniform_int(0, static_cast<int>(spec.templates.size()) - 1);
    GroundTruthObject g;
    g.class_id = spec.templates[tmpl].class_id;
    g.cad_model_id = spec.templates[tmpl].model_id;
    g.pose.rotation = rot_z(deg2rad(rng.uniform(pr.yaw_min_deg, pr.yaw_max_deg))).canonical_sign();
    g.pose.s = draw_between(rng, pr.s_min, pr.s_max);
    // Rotational symmetry beyond a half turn needs equal horizontal extents.
    if (spec.templates[tmpl].symmetry_order > 2) g.pose.s.y() = g.pose.s.x();
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      if (pr.layout == Layout::ring) {
        const double sector = (full_turn ? 2.0 * EIGEN_PI : ring_span) / n_objects;
        const double a = ring_offset + sector * (i + 0.5 + 0.5 * pr.ring_jitter * rng.uniform(-1.0, 1.0));
        const double r = rng.uniform(pr.ring_radius_min, pr.ring_radius_max);
        g.pose.t = pr.ring_center + Vec3(r * std::cos(a), r * std::sin(a), rng.uniform(pr.z_min, pr.z_max));
      } else {
        g.pose.t = draw_between(rng, pr.t_min, pr.t_max);
      }
      placed = std::all_of(out.ground_truth.begin(), out.ground_truth.end(), [&](const auto& other) {
        return (other.pose.t - g.pose.t).norm() >= pr.min_separation;
      });
    }
    if (!placed) throw InfeasibleSpec("cannot place objects with the requested separation");
    out.ground_truth.push_back(g);
  }

  std::vector<Vec3> targets;
  const std::vector<Vec3> positions = camera_positions(spec.trajectory, n_frames, targets);
  for (int k = 0; k < n_frames; ++k) {
    out.scene.frames.push_back(look_at_frame(k, spec.camera, positions[k], targets[k]));
  }

  const NoiseSpec& noise = spec.noise;
  std::vector<int> observed(n_objects, 0);
  for (const auto& frame : out.scene.frames) {
    for (int i = 0; i < n_objects; ++i) {
      const auto& g = out.ground_truth[i];
      const bool in_gap = std::any_of(spec.visibility.gaps.begin(), spec.visibility.gaps.end(), [&](const auto& gap) {
        return gap.object == i && frame.frame_index >= gap.first_frame && frame.frame_index <= gap.last_frame;
      });
      if (in_gap) continue;
      const CadModel& model = out.scene.model(g.cad_model_id);
      if (!visible(frame, g, model, spec.visibility.margin_px)) continue;
      if (noise.dropout_rate > 0.0 && rng.bernoulli(noise.dropout_rate)) continue;

      Observation o = render_observation(frame, g, model);
      double z2 = 0.0;
      int nz = 0;
      auto draw = [&](double sigma) {
        const double z = rng.normal();
        z2 += z * z;
        ++nz;
        return sigma * z;
      };
      if (noise.center_sigma > 0.0) {
        o.center2d.x() += draw(noise.center_sigma);
        o.center2d.y() += draw(noise.center_sigma);
      }
      if (noise.rotation_sigma > 0.0) {
        const Vec3 axis = rng.unit_vector();
        const double angle = std::abs(draw(noise.rotation_sigma));
        o.rotation_pred = (UnitQuaternion::from_axis_angle(axis, deg2rad(angle)) * o.rotation_pred).canonical_sign();
      }
      if (noise.box_sigma > 0.0) {
        const Box2D exact = o.box;
        Box2D b{exact.left + draw(noise.box_sigma), exact.top + draw(noise.box_sigma),
                exact.right + draw(noise.box_sigma), exact.bottom + draw(noise.box_sigma)};
        if (b.left >= b.right) b.left = exact.left, b.right = exact.right;
        if (b.top >= b.bottom) b.top = exact.top, b.bottom = exact.bottom;
        o.box = b;
      }
      if (noise.scale_sigma > 0.0) {
        Vec3 s = *o.scale_pred;
        for (int a = 0; a < 3; ++a) s[a] = std::max(0.05 * s[a], s[a] * (1.0 + draw(noise.scale_sigma)));
        o.scale_pred = s;
      }
      if (noise.vote_error_rate > 0.0 && rng.bernoulli(noise.vote_error_rate) && out.scene.cad_db.size() > 1) {
        std::vector<const CadModel*> same, other;
        for (const auto& m : out.scene.cad_db) {
          if (m.id == model.id) continue;
          (m.class_id == model.class_id ? same : other).push_back(&m);
        }
        const auto& pool = same.empty() ? other : same;
        const CadModel* wrong = pool[rng.uniform_int(0, static_cast<int>(pool.size()) - 1)];
        o.model_vote = ModelVote{wrong->id, wrong->embedding};
      }
      if (noise.embedding_sigma > 0.0) {
        for (auto& e : o.model_vote->embedding) e += noise.embedding_sigma * rng.normal();
      }
      const double z = nz > 0 ? std::sqrt(z2 / nz) : 0.0;
      o.score = std::clamp(std::max(noise.score.floor, noise.score.base - noise.score.slope * z), 0.0, 1.0);
      if (!spec.emit_scale_pred) o.scale_pred.reset();
      if (spec.emit_track_ids) o.track_id = i;
      out.scene.observations.push_back(std::move(o));
      ++observed[i];
    }
  }
  if (spec.visibility.require_each_object_observed) {
    for (int i = 0; i < n_objects; ++i) {
      if (observed[i] == 0) throw InfeasibleSpec("object " + std::to_string(i) + " is never observed");
    }
  }
  out.scene.validate();
  return out;
}

AmbiguityPair ambiguity_pair(const AmbiguitySpec& spec) {
  if (!(spec.center_camera.z() > kBoxNearPlane)) {
    throw InfeasibleSpec("object center must lie in front of the camera");
  }
  if (!(spec.factor > 0.0)) throw InfeasibleSpec("scale factor must be positive");
  CadModel model = build_model(spec.object);

  CameraFrame frame;
  frame.frame_index = 0;
  frame.K << spec.camera.fx, 0.0, spec.camera.cx, 0.0, spec.camera.fy, spec.camera.cy, 0.0, 0.0, 1.0;
  frame.image_width = spec.camera.width;
  frame.image_height = spec.camera.height;

  auto make = [&](double k) {
    SynthScene s;
    s.scene.frames = {frame};
    s.scene.cad_db = {model};
    GroundTruthObject g{model.class_id, model.id, {k * spec.center_camera, spec.rotation, k * spec.scale}};
    for (const auto& v : model.vertices) {
      if (!(world_to_camera(frame, object_to_world(g.pose, v)).z() > kBoxNearPlane)) {
        throw InfeasibleSpec("object crosses the near plane");
      }
    }
    Observation o = render_observation(frame, g, model);
    o.scale_pred.reset();
    s.scene.observations = {o};
    s.ground_truth = {g};
    return s;
  };
  return {make(1.0), make(spec.factor)};
}

void add_offset_view(AmbiguityPair& pair, const AmbiguitySpec& spec, double degrees) {
  const Vec3 pivot = spec.center_camera;
  const Vec3 up(0.0, -1.0, 0.0);
  const Eigen::AngleAxisd turn(deg2rad(degrees), up);
  const Vec3 position = pivot + turn * (Vec3::Zero() - pivot);
  for (SynthScene* s : {&pair.a, &pair.b}) {
    const int index = static_cast<int>(s->scene.frames.size());
    CameraFrame f = look_at_frame(index, spec.camera, position, pivot, up);
    s->scene.frames.push_back(f);
    Observation o = render_observation(f, s->ground_truth.front(), s->scene.cad_db.front());
    o.scale_pred.reset();
    s->scene.observations.push_back(o);
  }
}

}  // namespace mvalign
