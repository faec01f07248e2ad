#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vlp/geometry.hpp"

namespace vlp {

inline constexpr int kDetectorCount = 9;

/// Physical description of the room, luminaire, photodetectors and occupant. Defaults reproduce
/// the reference 5 x 5 x 3 m setup.
struct SceneConfig {
  Vec3 room_size{5.0, 5.0, 3.0};
  Vec3 led_position{2.5, 2.5, 3.0};
  double half_power_angle_deg = 60.0;
  double transmit_power_mw = 1000.0;
  double pd_area_m2 = 1e-4;
  double pd_tilt_deg = 10.0;
  double pd_responsivity = 1.0;
  double pd_fov_deg = 85.0;
  double filter_gain = 1.0;
  double lens_index = 1.5;
  double wall_reflectance = 0.8;
  double floor_reflectance = 0.45;
  double hair_reflectance = 0.6;
  double face_reflectance = 0.5;
  double shirt_reflectance = 0.3;
  Vec3 human_size{0.4, 0.4, 1.8};  // width_x, width_y, height
  double head_band_m = 0.3;
  std::array<double, 3> pd_grid{1.25, 2.5, 3.75};
  double resolution_m = 0.25;
  int reflection_order = 3;
  double noise_sigma_mw = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys absent from the document keep their defaults; unknown keys are rejected.
  static SceneConfig from_json(const nlohmann::json& doc);
  static SceneConfig load(const std::filesystem::path& path);
  /// Hex content hash of the canonical JSON form.
  std::string digest() const;
};

struct Emitter {
  Vec3 position;
  Vec3 normal{0, 0, -1};
  double lambertian_order = 1.0;
  double power_mw = 1000.0;
};

struct Detector {
  int index = 0;
  Vec3 position;
  Vec3 normal{0, 0, -1};
  double area = 1e-4;
  double fov_rad = 0.0;
  double filter_gain = 1.0;
  double lens_index = 1.5;
  double responsivity = 1.0;
};

/// m = -ln 2 / ln cos(half-power angle); snapped to the nearest integer within 1e-12.
double lambertian_order(double half_power_angle_deg);

/// Detector pose for grid index 0..8 (index = row * 3 + column, rows along y).
struct Pose {
  Vec3 position;
  Vec3 normal;
};
Pose pd_pose(int grid_index, const SceneConfig& config);

struct Scene {
  SceneConfig config;
  Emitter emitter;
  std::vector<Detector> detectors;
  std::vector<SurfaceSegment> static_segments;
  std::vector<SurfaceSegment> human_segments;
  std::vector<Cuboid> occluders;
  std::optional<std::array<double, 2>> human_center;

  bool has_human() const { return human_center.has_value(); }
  /// Static segments followed by human segments.
  std::vector<SurfaceSegment> all_segments() const;
  /// Config digest combined with the occupant placement.
  std::string digest() const;
};

Scene build_scene(const SceneConfig& config);

/// Adds the occupant as a reflecting, occluding cuboid centred at (x, y). Throws PlacementError
/// if the footprint leaves the room.
Scene place_human(const Scene& scene, double x, double y);
Scene remove_human(const Scene& scene);

/// Nearest legal body centre for a nominal position (keeps the footprint inside the room).
std::array<double, 2> clamp_body_center(const SceneConfig& config, double x, double y);

/// The eight symmetries of the square floor plan, acting about the room centre.
enum class SquareSymmetry { identity, rot90, rot180, rot270, mirror_x, mirror_y, diagonal, antidiagonal };
inline constexpr std::array<SquareSymmetry, 8> kAllSymmetries{
    SquareSymmetry::identity, SquareSymmetry::rot90,    SquareSymmetry::rot180,   SquareSymmetry::rot270,
    SquareSymmetry::mirror_x, SquareSymmetry::mirror_y, SquareSymmetry::diagonal, SquareSymmetry::antidiagonal};

/// Applies the symmetry to a point (about `center`) or to a direction (center = origin).
Vec3 apply_symmetry(SquareSymmetry s, const Vec3& v, const Vec3& center = {});

/// perm[i] = index of the detector that detector i maps onto. Throws ConfigError if the detector
/// layout is not invariant under the symmetry.
std::array<int, kDetectorCount> detector_permutation(const Scene& scene, SquareSymmetry s);

std::string fnv1a_hex(std::string_view bytes);

}  // namespace vlp
