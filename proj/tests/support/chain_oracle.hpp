#pragma once

// Brute-force reference for multi-bounce DC gains: enumerates every reflection chain
// LED -> s1 -> ... -> sk -> PD with its own geometry and visibility code. Kept separate from the
// library's transfer-matrix path on purpose; only the scene description is shared.

#include <array>
#include <cmath>
#include <vector>

#include "vlp/scene.hpp"

namespace oracle {

using Gains9 = std::array<double, 9>;

inline double dot3(const vlp::Vec3& a, const vlp::Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

// Cyrus-Beck clipping of p0 + t (p1 - p0), t in (0, 1), against the box's six half-spaces.
inline bool path_clear(const vlp::Vec3& p0, const vlp::Vec3& p1, const std::vector<vlp::Cuboid>& boxes) {
  const vlp::Vec3 d{p1.x - p0.x, p1.y - p0.y, p1.z - p0.z};
  for (const auto& b : boxes) {
    const vlp::Vec3 normals[6] = {{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, -1}, {0, 0, 1}};
    const vlp::Vec3 points[6] = {b.lo, b.hi, b.lo, b.hi, b.lo, b.hi};
    double t_in = 0.0, t_out = 1.0;
    bool outside = false;
    for (int f = 0; f < 6 && !outside; ++f) {
      const vlp::Vec3 w{p0.x - points[f].x, p0.y - points[f].y, p0.z - points[f].z};
      const double num = dot3(normals[f], w);
      const double den = dot3(normals[f], d);
      if (den == 0.0) {
        if (num >= 0.0) outside = true;
        continue;
      }
      const double t = -num / den;
      if (den < 0.0) t_in = std::max(t_in, t);
      else t_out = std::min(t_out, t);
    }
    if (!outside && t_out - t_in > 1e-12) return false;
  }
  return true;
}

struct Link {
  double dist2, cos_src, cos_dst;
};

inline Link link(const vlp::Vec3& from, const vlp::Vec3& from_n, const vlp::Vec3& to, const vlp::Vec3& to_n) {
  const vlp::Vec3 d{to.x - from.x, to.y - from.y, to.z - from.z};
  const double d2 = dot3(d, d);
  const double r = std::sqrt(d2);
  return {d2, dot3(from_n, d) / r, -dot3(to_n, d) / r};
}

// Per-order detector gains; result[k - 1] holds reflection order k.
inline std::vector<Gains9> enumerate_chains(const vlp::Scene& scene, int max_order) {
  const double pi = 3.14159265358979323846;
  const auto segs = scene.all_segments();
  const auto& occ = scene.occluders;
  const std::size_t n = segs.size();
  const auto& led = scene.emitter;

  std::vector<double> from_led(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Link l = link(led.position, led.normal, segs[i].centroid, segs[i].normal);
    if (l.cos_src > 0 && l.cos_dst > 0 && path_clear(led.position, segs[i].centroid, occ)) {
      from_led[i] = (led.lambertian_order + 1) / (2 * pi * l.dist2) * std::pow(l.cos_src, led.lambertian_order) *
                    l.cos_dst * segs[i].area;
    }
  }

  std::vector<Gains9> to_pd(n, Gains9{});
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& pd : scene.detectors) {
      const Link l = link(segs[i].centroid, segs[i].normal, pd.position, pd.normal);
      if (l.cos_src <= 0 || l.cos_dst <= 0 || std::acos(std::min(1.0, l.cos_dst)) > pd.fov_rad + 1e-15) continue;
      if (!path_clear(segs[i].centroid, pd.position, occ)) continue;
      const double sin_fov = std::sin(pd.fov_rad);
      to_pd[i][static_cast<std::size_t>(pd.index)] = segs[i].reflectance * 2.0 / (2 * pi * l.dist2) * l.cos_src *
                                                     pd.area * pd.filter_gain * pd.lens_index * pd.lens_index /
                                                     (sin_fov * sin_fov) * l.cos_dst;
    }
  }

  auto hop = [&](std::size_t a, std::size_t b) {
    const Link l = link(segs[a].centroid, segs[a].normal, segs[b].centroid, segs[b].normal);
    if (!(l.cos_src > 0) || !(l.cos_dst > 0)) return 0.0;
    if (!path_clear(segs[a].centroid, segs[b].centroid, occ)) return 0.0;
    return segs[a].reflectance * l.cos_src * l.cos_dst / (pi * l.dist2) * segs[b].area;
  };

  std::vector<Gains9> out(static_cast<std::size_t>(max_order), Gains9{});
  // Depth-first over chains; `power` is the power incident on the chain's last segment.
  auto walk = [&](auto&& self, std::size_t last, double power, int order) -> void {
    for (std::size_t k = 0; k < 9; ++k) out[static_cast<std::size_t>(order - 1)][k] += power * to_pd[last][k];
    if (order == max_order) return;
    for (std::size_t next = 0; next < n; ++next) {
      if (next == last) continue;
      const double f = hop(last, next);
      if (f != 0.0) self(self, next, power * f, order + 1);
    }
  };
  if (max_order >= 1) {
    for (std::size_t s = 0; s < n; ++s) {
      if (from_led[s] != 0.0) walk(walk, s, from_led[s], 1);
    }
  }
  return out;
}

}  // namespace oracle
