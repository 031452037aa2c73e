#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace instavo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Raised for invalid geometric input (degenerate points, ambiguous logs,
// triangulation without parallax).
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Skew-symmetric matrix such that Hat(a) * b == a.cross(b).
Mat3 Hat(const Vec3& v);

// Element of SO(3). Construction from a raw matrix validates orthonormality
// and a positive determinant within 1e-9.
class Rotation {
 public:
  Rotation() : matrix_(Mat3::Identity()) {}

  static Rotation FromMatrix(const Mat3& m);
  static Rotation FromQuaternion(const Eigen::Quaterniond& q);
  static Rotation Exp(const Vec3& theta);
  static Rotation AboutAxis(const Vec3& axis, double angle_rad);

  // Principal-branch logarithm. Throws GeometryError when the rotation angle
  // is within 1e-10 of pi, where the axis sign is ambiguous.
  Vec3 Log() const;

  const Mat3& matrix() const { return matrix_; }
  Eigen::Quaterniond quaternion() const;
  double angle() const;
  double AngleTo(const Rotation& other) const;

  Rotation inverse() const { return Rotation(matrix_.transpose()); }
  // Right perturbation: R * exp(theta).
  Rotation Retract(const Vec3& theta) const;

  Rotation operator*(const Rotation& rhs) const {
    return Rotation(matrix_ * rhs.matrix_);
  }
  Vec3 operator*(const Vec3& v) const { return matrix_ * v; }

 private:
  explicit Rotation(const Mat3& m) : matrix_(m) {}
  Mat3 matrix_;
};

inline Rotation So3Exp(const Vec3& theta) { return Rotation::Exp(theta); }
inline Vec3 So3Log(const Rotation& r) { return r.Log(); }

// A point on S^2 stored as the third column of a host rotation. The first
// two host columns span the tangent plane, which gives a chart without
// polar singularities.
class UnitDirection {
 public:
  UnitDirection() = default;
  explicit UnitDirection(const Rotation& host) : host_(host) {}

  // Builds a host rotation whose third column is v / |v|.
  static UnitDirection FromVector(const Vec3& v);

  Vec3 vector() const { return host_.matrix().col(2); }
  const Rotation& host() const { return host_; }

  // u(beta) = R_u * exp((beta_1, beta_2, 0)) * e_z.
  UnitDirection Retract(const Vec2& beta) const;

  // Columns are du/dbeta_1 and du/dbeta_2 at beta = 0.
  Eigen::Matrix<double, 3, 2> TangentBasis() const;

  // The antipodal direction, with the host rotated by pi about its x axis.
  UnitDirection Flipped() const;

 private:
  Rotation host_;
};

inline UnitDirection DirectionRetract(const UnitDirection& u, const Vec2& beta) {
  return u.Retract(beta);
}

// Unit-norm viewing ray.
class Bearing {
 public:
  Bearing() : v_(Vec3::UnitZ()) {}
  // Normalizes; throws GeometryError on a zero or non-finite vector.
  static Bearing FromVector(const Vec3& v);

  const Vec3& vector() const { return v_; }
  double operator[](int i) const { return v_[i]; }

 private:
  explicit Bearing(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

// Rigid transform p_b = R p_a + t.
struct Pose {
  Rotation rotation;
  Vec3 translation = Vec3::Zero();

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }
  Pose operator*(const Pose& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }
  Pose inverse() const {
    const Rotation rt = rotation.inverse();
    return {rt, -(rt * translation)};
  }
  // Camera center when the pose maps world into camera coordinates.
  Vec3 center() const { return -(rotation.inverse() * translation); }
};

// Keyframe-to-frame motion split into rotation, direction and magnitude.
struct RelativePose {
  Rotation rotation;
  UnitDirection direction;
  double magnitude = 0.0;

  Vec3 translation() const { return direction.vector() * magnitude; }
  Pose ToPose() const { return {rotation, translation()}; }
};

struct CameraModel {
  enum class Kind { kPinhole, kSpherical };

  Kind kind = Kind::kPinhole;
  double fx = 200.0;
  double fy = 200.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  static CameraModel Pinhole(double f, int width, int height);
  static CameraModel Spherical(double f, int width, int height);

  // Throws std::invalid_argument on non-positive focal lengths or a
  // principal point outside the image.
  void Validate() const;
  bool InImage(const Vec2& px) const;
};

// Pinhole: (fx x/z + cx, fy y/z + cy). Spherical: tangent-plane projection
// about the optical axis, which coincides with the pinhole mapping.
// Throws GeometryError("behind camera") or GeometryError("degenerate point").
Vec2 Project(const CameraModel& cam, const Vec3& point);

// Projects onto the tangent plane at `reference`: rotate so that the
// reference bearing becomes the z axis, divide by z and scale by focal
// length. Returns nullopt for points on or behind that plane.
std::optional<Vec2> ProjectAround(const CameraModel& cam, const Vec3& point,
                                  const Vec3& reference);

// Rotation Q with Q * reference == e_z, used for tangent-plane charts.
Rotation TangentFrame(const Vec3& reference);

// Pixel residual between a 3D point and an observed bearing. Pinhole
// cameras compare image projections; spherical cameras compare in the
// tangent plane at the observed bearing. nullopt when not projectable.
std::optional<Vec2> ReprojectionError(const CameraModel& cam, const Vec3& point,
                                      const Bearing& observed);

// First-order geometric epipolar error of (f, f') under E = [u]x R, in
// normalized image coordinates. Falls back to the algebraic error magnitude
// when the gradient vanishes.
double SampsonDistance(const Rotation& rotation, const UnitDirection& direction,
                       const Bearing& f, const Bearing& f_prime);

// Angle in degrees between the rotation-compensated rays R f and f'.
double ParallaxAngleDeg(const Rotation& rotation, const Bearing& f,
                        const Bearing& f_prime);

// Midpoint triangulation; returns the distance along f in the first camera.
// Throws GeometryError("insufficient parallax") when the rays are within
// 1e-4 rad of parallel or the baseline is zero, and
// GeometryError("point behind camera") for a negative depth.
double TriangulateTwoView(const Rotation& rotation, const Vec3& translation,
                          const Bearing& f, const Bearing& f_prime);

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kRadToDeg = 180.0 / kPi;
inline constexpr double kDegToRad = kPi / 180.0;

}  // namespace instavo
