#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vlp/geometry.hpp"
#include "vlp/scene.hpp"

namespace vlp {

using DetectorVector = std::array<double, kDetectorCount>;

/// DC channel gains of the nine detectors for one scene state.
struct GainSet {
  DetectorVector los{};
  std::vector<DetectorVector> bounces;  // bounces[k - 1] = contribution of reflection order k
  DetectorVector gains{};               // los + sum of bounces
  DetectorVector rss_mw{};
};

/// Lens gain n^2 / sin^2(FOV) applied inside the field of view.
double concentrator_gain(double lens_index, double fov_rad);

/// Lambertian source-to-detector DC gain
///   (m + 1) A / (2 pi d^2) cos^m(phi) Ts g(psi) cos(psi),  0 <= psi <= FOV,
/// zero outside the FOV, behind either surface, or when an occluder blocks the path.
/// Throws ConfigError when source and receiver coincide.
double los_link_gain(const Vec3& src_pos, const Vec3& src_normal, double order, const Vec3& rx_pos,
                     const Vec3& rx_normal, double area, double fov_rad, double filter_gain, double lens_index,
                     std::span<const Cuboid> occluders);

double los_link_gain(const Vec3& src_pos, const Vec3& src_normal, double order, const Detector& rx,
                     std::span<const Cuboid> occluders);

/// Fraction of the emitter power incident on a plain (unfiltered, full-hemisphere) segment.
double incident_gain(const Emitter& emitter, const SurfaceSegment& seg, std::span<const Cuboid> occluders);

/// Power coefficient from segment `from` (re-emitting its incident power times its reflectance as a
/// first-order Lambertian source) onto segment `to`, ignoring occlusion.
double transfer_coefficient(const SurfaceSegment& from, const SurfaceSegment& to);

/// Dense segment-to-segment transfer coefficients; entry (i, j) moves power from j to i.
struct TransferMatrix {
  Eigen::MatrixXd coeff;
  std::size_t size() const { return static_cast<std::size_t>(coeff.rows()); }
};

TransferMatrix build_transfer_matrix(std::span<const SurfaceSegment> segments, std::span<const Cuboid> occluders);

/// Incident first-bounce gain on every segment.
Eigen::VectorXd first_bounce(const Emitter& emitter, std::span<const SurfaceSegment> segments,
                             std::span<const Cuboid> occluders);

/// 9 x N matrix: gain at each detector per unit power incident on each segment (reflectance included).
Eigen::MatrixXd gather_matrix(std::span<const Detector> detectors, std::span<const SurfaceSegment> segments,
                              std::span<const Cuboid> occluders);

/// Direct (unreflected) gains; co-located detectors receive nothing.
DetectorVector los_gains(const Scene& scene);

/// Full recomputation over all segments of the scene, up to `bounces` reflections.
GainSet multi_bounce_gains(const Scene& scene, int bounces);

/// Fills rss_mw = Pt * R * H (+ N(0, sigma^2) when sigma > 0, seeded).
void fill_rss(GainSet& gains, const SceneConfig& config, double noise_sigma_mw, std::uint64_t seed);

GainSet rss_vector(const Scene& scene, int bounces, double noise_sigma_mw, std::uint64_t seed);

/// Empty-room transfer data shared by many occupant placements. Immutable after construction, so
/// concurrent calls to occluded_recompute are safe.
class EmptyRoomBase {
 public:
  explicit EmptyRoomBase(const Scene& empty_scene);

  const Scene& scene() const { return scene_; }
  /// Config digest the base was built from.
  const std::string& digest() const { return digest_; }
  const TransferMatrix& transfer() const { return transfer_; }

  GainSet empty_gains(int bounces) const;

  /// Same result as multi_bounce_gains(occupied, bounces), computed by correcting the empty-room
  /// matrix for the pairs the occupant blocks and appending the occupant's own segments. A scene
  /// without an occupant returns the empty-room gains. Throws InvalidationError if `occupied` was
  /// built from a different configuration.
  GainSet occluded_recompute(const Scene& occupied, int bounces) const;

  /// Number of static segment pairs the occupant's box blocks (diagnostics).
  std::size_t blocked_pair_count(const Cuboid& box) const;

 private:
  struct Pair {
    std::uint32_t i, j;
  };
  std::vector<Pair> blocked_pairs(const Cuboid& box) const;

  Scene scene_;
  std::string digest_;
  TransferMatrix transfer_;
  Eigen::VectorXd first_;
  Eigen::MatrixXd gather_;
  std::vector<Pair> coupled_;  // i < j with a non-zero coefficient in either direction
  DetectorVector los_{};
};

/// Gain dump: one row per detector, columns pd_index,h1..hK,h_total,rss_mw, preceded by
/// `# scene_digest=...`.
void write_gain_csv(const std::filesystem::path& path, const GainSet& gains, const std::string& scene_digest,
                    const std::string& manifest = {});

struct GainFile {
  GainSet gains;
  std::string scene_digest;
};
GainFile read_gain_csv(const std::filesystem::path& path);

}  // namespace vlp
