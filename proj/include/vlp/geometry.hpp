#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace vlp {

struct Vec3 {
  double x{0}, y{0}, z{0};

  constexpr Vec3() = default;
  constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  friend constexpr Vec3 operator*(double s, const Vec3& v) { return v * s; }
  constexpr bool operator==(const Vec3&) const = default;

  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  constexpr double norm2() const { return x * x + y * y + z * z; }
  Vec3 normalized() const {
    const double n = norm();
    return n == 0.0 ? *this : *this / n;
  }
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

enum class SurfaceTag : std::uint8_t {
  wall_n,
  wall_s,
  wall_e,
  wall_w,
  floor,
  human_top,
  human_side_upper,
  human_side_lower,
};

std::string_view to_string(SurfaceTag tag);
bool is_human(SurfaceTag tag);

/// One flat elemental patch of a diffuse surface.
struct SurfaceSegment {
  Vec3 centroid;
  Vec3 normal;
  double area{0};
  double reflectance{0};
  SurfaceTag tag{SurfaceTag::floor};
};

/// Axis-aligned box used as an occluder.
struct Cuboid {
  Vec3 lo;
  Vec3 hi;

  Cuboid() = default;
  /// Throws ConfigError unless lo < hi componentwise.
  Cuboid(const Vec3& lo_, const Vec3& hi_);
};

/// Tiles the rectangle origin + s*edge_u + t*edge_v (s, t in [0, 1]) into a grid of
/// equal cells, ceil(|edge|/resolution) per edge, so no cell side exceeds the resolution.
std::vector<SurfaceSegment> tessellate_rect(const Vec3& origin, const Vec3& edge_u, const Vec3& edge_v,
                                            const Vec3& normal, double reflectance, double resolution,
                                            SurfaceTag tag);

/// True when the open segment (a, b) stays out of the interior of the box. Paths that only touch
/// a face, edge or corner are visible.
bool segment_clear(const Vec3& a, const Vec3& b, const Cuboid& box);

/// Line of sight between a and b given the occluders. Throws ConfigError for a == b.
bool segment_visible(const Vec3& a, const Vec3& b, std::span<const Cuboid> occluders);

}  // namespace vlp
