#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

// Camera model, raster containers and pose arithmetic shared by the whole
// pipeline.
//
// Conventions (used everywhere, do not change locally):
//  - Poses are world-to-camera: x_cam = R * x_world + t.
//  - Integer pixel (u, v) samples the continuous image point (u+0.5, v+0.5).
//    A continuous coordinate c belongs to pixel floor(c); the in-bounds
//    domain is [0, W) x [0, H).
//  - DepthMap values are z-depth in the camera frame. Depth measured along
//    unit rays ("ray length") is a distinct quantity; see
//    ray_lengths_from_depth.

namespace splatkit {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPixelCenterOffset = 0.5;
inline constexpr double kBehindCameraEps = 1e-9;
inline constexpr double kRotationTol = 1e-9;
inline constexpr double kUnitDirectionTol = 1e-6;

/// Rigid world-to-camera transform.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 to_camera(const Vec3& p_world) const {
    return rotation * p_world + translation;
  }
  Vec3 to_world(const Vec3& p_camera) const {
    return rotation.transpose() * (p_camera - translation);
  }
  /// Camera center expressed in world coordinates.
  Vec3 center() const { return -(rotation.transpose() * translation); }

  Pose inverse() const {
    Pose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(rotation.transpose() * translation);
    return inv;
  }

  /// this∘rhs: apply rhs first, then this.
  Pose compose(const Pose& rhs) const {
    Pose out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
  }

  bool has_valid_rotation(double tol = kRotationTol) const {
    const Mat3 defect = rotation.transpose() * rotation - Mat3::Identity();
    return defect.cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// Pinhole camera: intrinsics in pixels plus a world-to-camera pose.
/// Construction validates the invariants; treat instances as immutable.
struct PinholeCamera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
  Pose pose;

  PinholeCamera() = default;
  PinholeCamera(double fx_, double fy_, double cx_, double cy_, int w, int h,
                Pose pose_ = Pose{})
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h),
        pose(std::move(pose_)) {
    if (!(fx > 0) || !(fy > 0))
      throw std::invalid_argument("PinholeCamera: focal lengths must be positive");
    if (width <= 0 || height <= 0)
      throw std::invalid_argument("PinholeCamera: image size must be positive");
    if (!(cx > 0 && cx < width) || !(cy > 0 && cy < height))
      throw std::invalid_argument("PinholeCamera: principal point outside image");
    if (!pose.has_valid_rotation())
      throw std::invalid_argument("PinholeCamera: rotation is not orthonormal");
  }

  Vec3 center() const { return pose.center(); }
  bool contains(const Vec2& pixel) const {
    return pixel.x() >= 0.0 && pixel.x() < width && pixel.y() >= 0.0 &&
           pixel.y() < height;
  }
};

/// Per-pixel z-depth with validity. set() keeps the invariant that every
/// valid value is finite and positive: non-positive or non-finite values
/// invalidate the pixel.
struct DepthMap {
  int width = 0, height = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> validity;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), values(size_t(w) * h, 0.0),
        validity(size_t(w) * h, 0) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("DepthMap: size must be positive");
  }

  size_t index(int x, int y) const { return size_t(y) * width + x; }
  double at(int x, int y) const { return values[index(x, y)]; }
  bool is_valid(int x, int y) const { return validity[index(x, y)] != 0; }
  void set(int x, int y, double depth) {
    const size_t i = index(x, y);
    if (std::isfinite(depth) && depth > 0.0) {
      values[i] = depth;
      validity[i] = 1;
    } else {
      values[i] = 0.0;
      validity[i] = 0;
    }
  }
  void invalidate(int x, int y) {
    values[index(x, y)] = 0.0;
    validity[index(x, y)] = 0;
  }
  size_t valid_count() const {
    size_t n = 0;
    for (auto v : validity) n += v;
    return n;
  }
};

/// Per-pixel ray origins and unit directions.
struct RayMap {
  int width = 0, height = 0;
  std::vector<Vec3> origins;
  std::vector<Vec3> directions;

  RayMap() = default;
  RayMap(int w, int h)
      : width(w), height(h), origins(size_t(w) * h, Vec3::Zero()),
        directions(size_t(w) * h, Vec3::UnitZ()) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("RayMap: size must be positive");
  }

  size_t index(int x, int y) const { return size_t(y) * width + x; }
  const Vec3& origin(int x, int y) const { return origins[index(x, y)]; }
  const Vec3& direction(int x, int y) const { return directions[index(x, y)]; }
  void set(int x, int y, const Vec3& o, const Vec3& d) {
    origins[index(x, y)] = o;
    directions[index(x, y)] = d;
  }

  bool has_unit_directions(double tol = kUnitDirectionTol) const {
    for (const Vec3& d : directions)
      if (std::abs(d.norm() - 1.0) > tol) return false;
    return true;
  }

  /// Rays through every pixel center of `camera`: origin at the camera
  /// center, unit world-frame directions.
  static RayMap from_camera(const PinholeCamera& camera) {
    RayMap rays(camera.width, camera.height);
    const Vec3 origin = camera.center();
    const Mat3 rot_t = camera.pose.rotation.transpose();
    for (int y = 0; y < camera.height; ++y) {
      for (int x = 0; x < camera.width; ++x) {
        const double u = x + kPixelCenterOffset;
        const double v = y + kPixelCenterOffset;
        Vec3 dir_cam((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy,
                     1.0);
        rays.set(x, y, origin, (rot_t * dir_cam).normalized());
      }
    }
    return rays;
  }
};

/// Image raster, channel-interleaved row-major. Color images hold values in
/// [0,1]; 1-channel buffers also carry masks and residual/depth rasters, so
/// the range is not enforced, only finiteness at the file boundary.
struct ImageBuffer {
  int width = 0, height = 0, channels = 0;
  std::vector<double> values;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c)
      : width(w), height(h), channels(c), values(size_t(w) * h * c, 0.0) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("ImageBuffer: size must be positive");
    if (c != 1 && c != 3)
      throw std::invalid_argument("ImageBuffer: channels must be 1 or 3");
  }

  size_t index(int x, int y, int c) const {
    return (size_t(y) * width + x) * channels + c;
  }
  double at(int x, int y, int c = 0) const { return values[index(x, y, c)]; }
  void set(int x, int y, int c, double v) { values[index(x, y, c)] = v; }
};

/// Generic N-channel raster with no range constraint. Holds head outputs
/// (logits, log-scales, depth offsets, feature channels) and weights.
struct FeatureMap {
  int width = 0, height = 0, channels = 0;
  std::vector<double> values;

  FeatureMap() = default;
  FeatureMap(int w, int h, int c)
      : width(w), height(h), channels(c), values(size_t(w) * h * c, 0.0) {
    if (w <= 0 || h <= 0 || c <= 0)
      throw std::invalid_argument("FeatureMap: size must be positive");
  }

  size_t index(int x, int y, int c) const {
    return (size_t(y) * width + x) * channels + c;
  }
  double at(int x, int y, int c = 0) const { return values[index(x, y, c)]; }
  void set(int x, int y, int c, double v) { values[index(x, y, c)] = v; }
};

/// Coordinate frame a PointMap lives in: world, or the camera frame of a
/// specific view.
struct FrameTag {
  enum class Kind { World, Camera };
  Kind kind = Kind::World;
  int view_id = -1;

  static FrameTag world() { return FrameTag{Kind::World, -1}; }
  static FrameTag camera_of(int view_id) {
    return FrameTag{Kind::Camera, view_id};
  }
  bool operator==(const FrameTag&) const = default;
};

/// Per-pixel 3D points with validity, tagged with their coordinate frame.
struct PointMap {
  int width = 0, height = 0;
  FrameTag frame;
  std::vector<Vec3> points;
  std::vector<std::uint8_t> validity;

  PointMap() = default;
  PointMap(int w, int h, FrameTag frame_)
      : width(w), height(h), frame(frame_), points(size_t(w) * h, Vec3::Zero()),
        validity(size_t(w) * h, 0) {
    if (w <= 0 || h <= 0)
      throw std::invalid_argument("PointMap: size must be positive");
  }

  size_t index(int x, int y) const { return size_t(y) * width + x; }
  const Vec3& at(int x, int y) const { return points[index(x, y)]; }
  bool is_valid(int x, int y) const { return validity[index(x, y)] != 0; }
  void set(int x, int y, const Vec3& p) {
    points[index(x, y)] = p;
    validity[index(x, y)] = 1;
  }
  void invalidate(int x, int y) {
    points[index(x, y)] = Vec3::Zero();
    validity[index(x, y)] = 0;
  }
};

struct Projection {
  Vec2 pixel;
  double depth;  // z in the camera frame
};

/// Projects a world point; nullopt when the point is behind the camera
/// (z <= 1e-9). The returned pixel is continuous and may fall outside the
/// image bounds.
inline std::optional<Projection> project(const PinholeCamera& camera,
                                         const Vec3& point_world) {
  const Vec3 p = camera.pose.to_camera(point_world);
  if (p.z() <= kBehindCameraEps) return std::nullopt;
  return Projection{Vec2(camera.fx * p.x() / p.z() + camera.cx,
                         camera.fy * p.y() / p.z() + camera.cy),
                    p.z()};
}

/// Inverse of project for a continuous pixel coordinate and positive z-depth.
inline Vec3 unproject(const PinholeCamera& camera, const Vec2& pixel,
                      double depth) {
  if (!(depth > 0.0))
    throw std::invalid_argument("unproject: depth must be positive");
  const Vec3 p_cam((pixel.x() - camera.cx) / camera.fx * depth,
                   (pixel.y() - camera.cy) / camera.fy * depth, depth);
  return camera.pose.to_world(p_cam);
}

/// Unprojects every valid depth pixel through its pixel center into a
/// world-frame point map.
inline PointMap depth_to_points(const PinholeCamera& camera,
                                const DepthMap& depth) {
  if (depth.width != camera.width || depth.height != camera.height)
    throw std::invalid_argument("depth_to_points: depth/camera size mismatch");
  PointMap out(depth.width, depth.height, FrameTag::world());
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const Vec2 pixel(x + kPixelCenterOffset, y + kPixelCenterOffset);
      out.set(x, y, unproject(camera, pixel, depth.at(x, y)));
    }
  }
  return out;
}

/// Points along rays: p = o + (D + dD) * d, with D measured along the unit
/// ray direction. Pixels with invalid depth or D + dD <= 0 come out invalid.
inline PointMap ray_points(const RayMap& rays, const DepthMap& depth,
                           const FeatureMap* offset = nullptr) {
  if (rays.width != depth.width || rays.height != depth.height)
    throw std::invalid_argument("ray_points: ray/depth size mismatch");
  if (offset &&
      (offset->width != rays.width || offset->height != rays.height ||
       offset->channels != 1))
    throw std::invalid_argument("ray_points: offset raster size mismatch");
  PointMap out(rays.width, rays.height, FrameTag::world());
  for (int y = 0; y < rays.height; ++y) {
    for (int x = 0; x < rays.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const double t = depth.at(x, y) + (offset ? offset->at(x, y) : 0.0);
      if (!(t > 0.0) || !std::isfinite(t)) continue;
      out.set(x, y, rays.origin(x, y) + t * rays.direction(x, y));
    }
  }
  return out;
}

/// Converts a z-depth map into depth measured along the unit pixel rays of
/// `camera`, so that ray_points(RayMap::from_camera(camera), result)
/// reproduces depth_to_points(camera, depth).
inline DepthMap ray_lengths_from_depth(const PinholeCamera& camera,
                                       const DepthMap& depth) {
  if (depth.width != camera.width || depth.height != camera.height)
    throw std::invalid_argument(
        "ray_lengths_from_depth: depth/camera size mismatch");
  DepthMap out(depth.width, depth.height);
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (!depth.is_valid(x, y)) continue;
      const double u = (x + kPixelCenterOffset - camera.cx) / camera.fx;
      const double v = (y + kPixelCenterOffset - camera.cy) / camera.fy;
      out.set(x, y, depth.at(x, y) * std::sqrt(u * u + v * v + 1.0));
    }
  }
  return out;
}

struct PoseSeparation {
  double distance;  // Euclidean distance between camera centers
  double angle;     // relative rotation angle, radians in [0, pi]
};

inline PoseSeparation pose_distance_angle(const PinholeCamera& a,
                                          const PinholeCamera& b) {
  const double d = (a.center() - b.center()).norm();
  const Mat3 rel = a.pose.rotation * b.pose.rotation.transpose();
  const double c = std::clamp((rel.trace() - 1.0) / 2.0, -1.0, 1.0);
  return PoseSeparation{d, std::acos(c)};
}

}  // namespace splatkit
