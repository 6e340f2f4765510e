#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <string>

namespace mvalign {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

/// Symmetry order used to designate continuous rotational symmetry about the
/// canonical up-axis (z). Orders are otherwise discrete, 1 meaning none.
inline constexpr int kContinuousSymmetryOrder = 1 << 20;

/// Rotation stored as a unit quaternion. Construction normalizes, so every
/// instance satisfies |q| = 1 up to rounding.
class UnitQuaternion {
 public:
  UnitQuaternion() = default;
  /// Throws ValidationError on a zero or non-finite input.
  UnitQuaternion(double w, double x, double y, double z);
  explicit UnitQuaternion(const Vec4& wxyz) : UnitQuaternion(wxyz[0], wxyz[1], wxyz[2], wxyz[3]) {}

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double radians);
  static UnitQuaternion from_matrix(const Mat3& r);

  double w() const { return w_; }
  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }
  Vec4 coeffs() const { return {w_, x_, y_, z_}; }

  Mat3 matrix() const;
  UnitQuaternion conjugate() const;
  /// Representative with w >= 0 (same rotation).
  UnitQuaternion canonical_sign() const;

  friend UnitQuaternion operator*(const UnitQuaternion& a, const UnitQuaternion& b);
  friend bool operator==(const UnitQuaternion&, const UnitQuaternion&) = default;

 private:
  double w_ = 1.0, x_ = 0.0, y_ = 0.0, z_ = 0.0;
};

/// Rotation about the canonical up-axis.
UnitQuaternion rot_z(double radians);

/// Derivatives of the rotation matrix of q with respect to (w, x, y, z),
/// taken on the unnormalized polynomial form and evaluated at q.
std::array<Mat3, 4> rotation_matrix_partials(const Vec4& q);

/// Gradient of f(q / |q|) given the gradient of f at the unit point q̂.
/// The result is tangent to the unit sphere.
Vec4 project_to_sphere_tangent(const Vec4& q, const Vec4& grad_at_unit);

struct Pose9DoF {
  Vec3 t = Vec3::Zero();
  UnitQuaternion rotation;
  Vec3 s = Vec3::Ones();

  /// Throws ValidationError naming `field` when any invariant fails.
  void validate(const std::string& field = "pose") const;
  friend bool operator==(const Pose9DoF& a, const Pose9DoF& b) {
    return a.t == b.t && a.rotation == b.rotation && a.s == b.s;
  }
};

struct CameraFrame {
  int frame_index = 0;
  Mat3 K = Mat3::Identity();
  Mat3 E_R = Mat3::Identity();
  Vec3 e_t = Vec3::Zero();
  int image_width = 0;
  int image_height = 0;

  double fx() const { return K(0, 0); }
  double fy() const { return K(1, 1); }
  double cx() const { return K(0, 2); }
  double cy() const { return K(1, 2); }
  Vec2 image_center() const { return {0.5 * image_width, 0.5 * image_height}; }
  /// Camera center in world coordinates.
  Vec3 center() const { return -E_R.transpose() * e_t; }

  void validate(const std::string& field = "frame") const;
  friend bool operator==(const CameraFrame& a, const CameraFrame& b) {
    return a.frame_index == b.frame_index && a.K == b.K && a.E_R == b.E_R && a.e_t == b.e_t &&
           a.image_width == b.image_width && a.image_height == b.image_height;
  }
};

/// t + R (s ⊙ v): scale along canonical axes, rotate, translate.
Vec3 object_to_world(const Pose9DoF& pose, const Vec3& v);

/// e_t + E_R p.
Vec3 world_to_camera(const CameraFrame& frame, const Vec3& p_world);

/// Perspective projection of a camera-space point to pixels.
/// Pixel (0,0) is the top-left corner of the top-left pixel.
/// Throws NonPositiveDepth when p_camera.z <= 0.
Vec2 project(const CameraFrame& frame, const Vec3& p_camera);

/// World point that projects to `pixel` at camera depth `depth`.
/// Throws NonPositiveDepth when depth <= 0.
Vec3 backproject(const CameraFrame& frame, const Vec2& pixel, double depth);

/// Geodesic distance between two rotations, degrees in [0, 180].
double geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b);

/// Geodesic distance minimized over the symmetry orbit {b * rot_z(2πk/m)}.
/// Continuous symmetry reduces to the angle between the two up-axes.
double symmetric_geodesic_angle(const UnitQuaternion& a, const UnitQuaternion& b, int symmetry_order);

inline double deg2rad(double d) { return d * (EIGEN_PI / 180.0); }
inline double rad2deg(double r) { return r * (180.0 / EIGEN_PI); }

}  // namespace mvalign
