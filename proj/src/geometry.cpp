#include "vlp/geometry.hpp"

#include <algorithm>

#include "vlp/error.hpp"

namespace vlp {

namespace {
// Overlaps shorter than this (in units of the segment parameter) are tangential contacts.
constexpr double kGrazeTolerance = 1e-12;
}  // namespace

std::string_view to_string(SurfaceTag tag) {
  switch (tag) {
    case SurfaceTag::wall_n: return "wall_N";
    case SurfaceTag::wall_s: return "wall_S";
    case SurfaceTag::wall_e: return "wall_E";
    case SurfaceTag::wall_w: return "wall_W";
    case SurfaceTag::floor: return "floor";
    case SurfaceTag::human_top: return "human_top";
    case SurfaceTag::human_side_upper: return "human_side_upper";
    case SurfaceTag::human_side_lower: return "human_side_lower";
  }
  return "unknown";
}

bool is_human(SurfaceTag tag) {
  return tag == SurfaceTag::human_top || tag == SurfaceTag::human_side_upper ||
         tag == SurfaceTag::human_side_lower;
}

Cuboid::Cuboid(const Vec3& lo_, const Vec3& hi_) : lo(lo_), hi(hi_) {
  if (!(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z)) throw ConfigError("cuboid corners must satisfy lo < hi");
}

std::vector<SurfaceSegment> tessellate_rect(const Vec3& origin, const Vec3& edge_u, const Vec3& edge_v,
                                            const Vec3& normal, double reflectance, double resolution,
                                            SurfaceTag tag) {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) throw ConfigError("tessellation resolution must be positive");
  const double lu = edge_u.norm();
  const double lv = edge_v.norm();
  if (!(lu > 0.0) || !(lv > 0.0)) throw ConfigError("tessellation edges must have positive length");
  if (std::abs(dot(edge_u, edge_v)) > 1e-9 * lu * lv) throw ConfigError("tessellation edges are not orthogonal");
  if (std::abs(normal.norm() - 1.0) > 1e-9) throw ConfigError("surface normal must be unit length");
  if (!(reflectance >= 0.0 && reflectance <= 1.0)) throw ConfigError("reflectance must lie in [0, 1]");

  const auto cells = [resolution](double len) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(len / resolution - 1e-9)));
  };
  const std::size_t nu = cells(lu);
  const std::size_t nv = cells(lv);
  const double cell_area = (lu / static_cast<double>(nu)) * (lv / static_cast<double>(nv));

  std::vector<SurfaceSegment> out;
  out.reserve(nu * nv);
  for (std::size_t j = 0; j < nv; ++j) {
    const double t = (static_cast<double>(j) + 0.5) / static_cast<double>(nv);
    for (std::size_t i = 0; i < nu; ++i) {
      const double s = (static_cast<double>(i) + 0.5) / static_cast<double>(nu);
      out.push_back({origin + edge_u * s + edge_v * t, normal, cell_area, reflectance, tag});
    }
  }
  return out;
}

bool segment_clear(const Vec3& a, const Vec3& b, const Cuboid& box) {
  const double origin[3] = {a.x, a.y, a.z};
  const double dir[3] = {b.x - a.x, b.y - a.y, b.z - a.z};
  const double lo[3] = {box.lo.x, box.lo.y, box.lo.z};
  const double hi[3] = {box.hi.x, box.hi.y, box.hi.z};
  double t_enter = 0.0;
  double t_exit = 1.0;
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (!(origin[k] > lo[k] && origin[k] < hi[k])) return true;
      continue;
    }
    double t1 = (lo[k] - origin[k]) / dir[k];
    double t2 = (hi[k] - origin[k]) / dir[k];
    if (t1 > t2) std::swap(t1, t2);
    t_enter = std::max(t_enter, t1);
    t_exit = std::min(t_exit, t2);
    if (t_exit - t_enter <= kGrazeTolerance) return true;
  }
  return t_exit - t_enter <= kGrazeTolerance;
}

bool segment_visible(const Vec3& a, const Vec3& b, std::span<const Cuboid> occluders) {
  if (a == b) throw ConfigError("visibility query with coincident endpoints");
  for (const auto& box : occluders) {
    if (!segment_clear(a, b, box)) return false;
  }
  return true;
}

}  // namespace vlp
