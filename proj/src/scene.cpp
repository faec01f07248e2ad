#include "vlp/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "vlp/error.hpp"

namespace vlp {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kFitTolerance = 1e-12;

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

Vec3 json_vec(const nlohmann::json& j, const std::string& key) {
  if (!j.is_array() || j.size() != 3) throw ConfigError("'" + key + "' must be an array of 3 numbers");
  Vec3 v;
  double* out[3] = {&v.x, &v.y, &v.z};
  for (std::size_t i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ConfigError("'" + key + "' must be an array of 3 numbers");
    *out[i] = j[i].get<double>();
  }
  return v;
}

double json_num(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("'" + key + "' must be a number");
  return j.get<double>();
}

void require(bool ok, const char* message) {
  if (!ok) throw ConfigError(message);
}

bool inside_closed(double v, double lo, double hi) { return v >= lo && v <= hi; }

int side_of(double v, double mid) {
  if (std::abs(v - mid) <= 1e-12) return 0;
  return v < mid ? -1 : 1;
}

}  // namespace

void SceneConfig::validate() const {
  require(room_size.x > 0 && room_size.y > 0 && room_size.z > 0, "room dimensions must be positive");
  require(inside_closed(led_position.x, 0, room_size.x) && inside_closed(led_position.y, 0, room_size.y) &&
              inside_closed(led_position.z, 0, room_size.z),
          "LED position lies outside the room");
  require(half_power_angle_deg > 0 && half_power_angle_deg < 90, "half-power angle must lie in (0, 90) degrees");
  require(transmit_power_mw > 0, "transmit power must be positive");
  require(pd_area_m2 > 0, "photodetector area must be positive");
  require(pd_tilt_deg >= 0 && pd_tilt_deg < 90, "photodetector tilt must lie in [0, 90) degrees");
  require(pd_responsivity >= 0, "photodetector responsivity must be non-negative");
  require(pd_fov_deg > 0 && pd_fov_deg <= 90, "field of view must lie in (0, 90] degrees");
  require(filter_gain > 0, "optical filter gain must be positive");
  require(lens_index > 0, "lens refractive index must be positive");
  for (double r : {wall_reflectance, floor_reflectance, hair_reflectance, face_reflectance, shirt_reflectance}) {
    require(r >= 0 && r <= 1, "reflectances must lie in [0, 1]");
  }
  require(human_size.x > 0 && human_size.y > 0 && human_size.z > 0, "human dimensions must be positive");
  require(human_size.x <= room_size.x && human_size.y <= room_size.y && human_size.z < room_size.z,
          "human does not fit in the room");
  require(head_band_m > 0 && head_band_m <= human_size.z, "head band must lie in (0, height]");
  for (double g : pd_grid) {
    require(inside_closed(g, 0, room_size.x) && inside_closed(g, 0, room_size.y),
            "photodetector grid coordinate lies outside the room");
  }
  require(resolution_m > 0 && std::isfinite(resolution_m), "resolution must be positive");
  require(reflection_order >= 0, "reflection order must be non-negative");
  require(noise_sigma_mw >= 0, "noise sigma must be non-negative");
}

nlohmann::json SceneConfig::to_json() const {
  nlohmann::json j;
  j["room_size"] = vec_json(room_size);
  j["led_position"] = vec_json(led_position);
  j["half_power_angle_deg"] = half_power_angle_deg;
  j["transmit_power_mw"] = transmit_power_mw;
  j["pd_area_m2"] = pd_area_m2;
  j["pd_tilt_deg"] = pd_tilt_deg;
  j["pd_responsivity"] = pd_responsivity;
  j["pd_fov_deg"] = pd_fov_deg;
  j["filter_gain"] = filter_gain;
  j["lens_index"] = lens_index;
  j["wall_reflectance"] = wall_reflectance;
  j["floor_reflectance"] = floor_reflectance;
  j["hair_reflectance"] = hair_reflectance;
  j["face_reflectance"] = face_reflectance;
  j["shirt_reflectance"] = shirt_reflectance;
  j["human_size"] = vec_json(human_size);
  j["head_band_m"] = head_band_m;
  j["pd_grid"] = nlohmann::json::array({pd_grid[0], pd_grid[1], pd_grid[2]});
  j["resolution_m"] = resolution_m;
  j["reflection_order"] = reflection_order;
  j["noise_sigma_mw"] = noise_sigma_mw;
  j["seed"] = seed;
  return j;
}

SceneConfig SceneConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("scene configuration must be a JSON object");
  SceneConfig c;
  for (const auto& [key, value] : doc.items()) {
    if (key == "room_size") c.room_size = json_vec(value, key);
    else if (key == "led_position") c.led_position = json_vec(value, key);
    else if (key == "half_power_angle_deg") c.half_power_angle_deg = json_num(value, key);
    else if (key == "transmit_power_mw") c.transmit_power_mw = json_num(value, key);
    else if (key == "pd_area_m2") c.pd_area_m2 = json_num(value, key);
    else if (key == "pd_tilt_deg") c.pd_tilt_deg = json_num(value, key);
    else if (key == "pd_responsivity") c.pd_responsivity = json_num(value, key);
    else if (key == "pd_fov_deg") c.pd_fov_deg = json_num(value, key);
    else if (key == "filter_gain") c.filter_gain = json_num(value, key);
    else if (key == "lens_index") c.lens_index = json_num(value, key);
    else if (key == "wall_reflectance") c.wall_reflectance = json_num(value, key);
    else if (key == "floor_reflectance") c.floor_reflectance = json_num(value, key);
    else if (key == "hair_reflectance") c.hair_reflectance = json_num(value, key);
    else if (key == "face_reflectance") c.face_reflectance = json_num(value, key);
    else if (key == "shirt_reflectance") c.shirt_reflectance = json_num(value, key);
    else if (key == "human_size") c.human_size = json_vec(value, key);
    else if (key == "head_band_m") c.head_band_m = json_num(value, key);
    else if (key == "pd_grid") {
      const Vec3 g = json_vec(value, key);
      c.pd_grid = {g.x, g.y, g.z};
    } else if (key == "resolution_m") c.resolution_m = json_num(value, key);
    else if (key == "reflection_order") {
      if (!value.is_number_integer()) throw ConfigError("'reflection_order' must be an integer");
      c.reflection_order = value.get<int>();
    } else if (key == "noise_sigma_mw") c.noise_sigma_mw = json_num(value, key);
    else if (key == "seed") {
      if (!value.is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
    } else {
      throw ConfigError("unknown scene configuration key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

SceneConfig SceneConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scene configuration '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return SceneConfig{};
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("scene configuration '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

std::string SceneConfig::digest() const { return fnv1a_hex(to_json().dump()); }

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double lambertian_order(double half_power_angle_deg) {
  const double m = -std::log(2.0) / std::log(std::cos(half_power_angle_deg * kDeg));
  const double nearest = std::round(m);
  return std::abs(m - nearest) <= 1e-12 ? nearest : m;
}

Pose pd_pose(int grid_index, const SceneConfig& config) {
  if (grid_index < 0 || grid_index >= kDetectorCount) throw ConfigError("photodetector index out of range");
  const double x = config.pd_grid[static_cast<std::size_t>(grid_index % 3)];
  const double y = config.pd_grid[static_cast<std::size_t>(grid_index / 3)];
  Pose pose{{x, y, config.room_size.z}, {0, 0, -1}};
  const int sx = side_of(x, 0.5 * config.room_size.x);
  const int sy = side_of(y, 0.5 * config.room_size.y);
  if (sx == 0 && sy == 0) return pose;
  const double tilt = config.pd_tilt_deg * kDeg;
  const double inv = 1.0 / std::sqrt(static_cast<double>(sx * sx + sy * sy));
  pose.normal = {std::sin(tilt) * sx * inv, std::sin(tilt) * sy * inv, -std::cos(tilt)};
  return pose;
}

std::vector<SurfaceSegment> Scene::all_segments() const {
  std::vector<SurfaceSegment> all = static_segments;
  all.insert(all.end(), human_segments.begin(), human_segments.end());
  return all;
}

std::string Scene::digest() const {
  std::string key = config.digest();
  if (human_center) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "@%.17g,%.17g", (*human_center)[0], (*human_center)[1]);
    key += buf;
  }
  return fnv1a_hex(key);
}

Scene build_scene(const SceneConfig& config) {
  config.validate();
  Scene scene;
  scene.config = config;
  scene.emitter = {config.led_position, {0, 0, -1}, lambertian_order(config.half_power_angle_deg),
                   config.transmit_power_mw};

  for (int i = 0; i < kDetectorCount; ++i) {
    const Pose pose = pd_pose(i, config);
    scene.detectors.push_back({i, pose.position, pose.normal, config.pd_area_m2, config.pd_fov_deg * kDeg,
                               config.filter_gain, config.lens_index, config.pd_responsivity});
  }

  const double lx = config.room_size.x, ly = config.room_size.y, lz = config.room_size.z;
  const double res = config.resolution_m;
  const double rw = config.wall_reflectance;
  const Vec3 up{0, 0, lz};
  auto add = [&scene](std::vector<SurfaceSegment> segs) {
    scene.static_segments.insert(scene.static_segments.end(), segs.begin(), segs.end());
  };
  add(tessellate_rect({0, 0, 0}, {lx, 0, 0}, up, {0, 1, 0}, rw, res, SurfaceTag::wall_s));
  add(tessellate_rect({lx, 0, 0}, {0, ly, 0}, up, {-1, 0, 0}, rw, res, SurfaceTag::wall_e));
  add(tessellate_rect({lx, ly, 0}, {-lx, 0, 0}, up, {0, -1, 0}, rw, res, SurfaceTag::wall_n));
  add(tessellate_rect({0, ly, 0}, {0, -ly, 0}, up, {1, 0, 0}, rw, res, SurfaceTag::wall_w));
  add(tessellate_rect({0, 0, 0}, {lx, 0, 0}, {0, ly, 0}, {0, 0, 1}, config.floor_reflectance, res,
                      SurfaceTag::floor));
  return scene;
}

std::array<double, 2> clamp_body_center(const SceneConfig& config, double x, double y) {
  const double hx = 0.5 * config.human_size.x;
  const double hy = 0.5 * config.human_size.y;
  return {std::clamp(x, hx, config.room_size.x - hx), std::clamp(y, hy, config.room_size.y - hy)};
}

Scene place_human(const Scene& scene, double x, double y) {
  const SceneConfig& c = scene.config;
  const double wx = c.human_size.x, wy = c.human_size.y, h = c.human_size.z;
  if (!std::isfinite(x) || !std::isfinite(y) || x - 0.5 * wx < -kFitTolerance || y - 0.5 * wy < -kFitTolerance ||
      x + 0.5 * wx > c.room_size.x + kFitTolerance || y + 0.5 * wy > c.room_size.y + kFitTolerance) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "human footprint at (%.6g, %.6g) leaves the room", x, y);
    throw PlacementError(buf);
  }

  Scene out = remove_human(scene);
  const Vec3 lo{x - 0.5 * wx, y - 0.5 * wy, 0.0};
  const Vec3 hi{x + 0.5 * wx, y + 0.5 * wy, h};
  out.occluders.emplace_back(lo, hi);
  out.human_center = std::array<double, 2>{x, y};

  const double res = c.resolution_m;
  auto add = [&out](std::vector<SurfaceSegment> segs) {
    out.human_segments.insert(out.human_segments.end(), segs.begin(), segs.end());
  };
  add(tessellate_rect({lo.x, lo.y, h}, {wx, 0, 0}, {0, wy, 0}, {0, 0, 1}, c.hair_reflectance, res,
                      SurfaceTag::human_top));

  // Side faces run counter-clockwise seen from above, each with an outward normal.
  struct Face {
    Vec3 origin, edge, normal;
  };
  const Face faces[4] = {
      {{lo.x, lo.y, 0}, {wx, 0, 0}, {0, -1, 0}},
      {{hi.x, lo.y, 0}, {0, wy, 0}, {1, 0, 0}},
      {{hi.x, hi.y, 0}, {-wx, 0, 0}, {0, 1, 0}},
      {{lo.x, hi.y, 0}, {0, -wy, 0}, {-1, 0, 0}},
  };
  const double lower = h - c.head_band_m;
  for (const Face& f : faces) {
    if (lower > 0) {
      add(tessellate_rect(f.origin, f.edge, {0, 0, lower}, f.normal, c.shirt_reflectance, res,
                          SurfaceTag::human_side_lower));
    }
    add(tessellate_rect(f.origin + Vec3{0, 0, lower}, f.edge, {0, 0, c.head_band_m}, f.normal,
                        c.face_reflectance, res, SurfaceTag::human_side_upper));
  }
  return out;
}

Scene remove_human(const Scene& scene) {
  Scene out = scene;
  out.human_segments.clear();
  out.occluders.clear();
  out.human_center.reset();
  return out;
}

Vec3 apply_symmetry(SquareSymmetry s, const Vec3& v, const Vec3& center) {
  const double X = v.x - center.x;
  const double Y = v.y - center.y;
  double nx = X, ny = Y;
  switch (s) {
    case SquareSymmetry::identity: break;
    case SquareSymmetry::rot90: nx = -Y; ny = X; break;
    case SquareSymmetry::rot180: nx = -X; ny = -Y; break;
    case SquareSymmetry::rot270: nx = Y; ny = -X; break;
    case SquareSymmetry::mirror_x: nx = -X; break;
    case SquareSymmetry::mirror_y: ny = -Y; break;
    case SquareSymmetry::diagonal: nx = Y; ny = X; break;
    case SquareSymmetry::antidiagonal: nx = -Y; ny = -X; break;
  }
  return {nx + center.x, ny + center.y, v.z};
}

std::array<int, kDetectorCount> detector_permutation(const Scene& scene, SquareSymmetry s) {
  const Vec3 center{0.5 * scene.config.room_size.x, 0.5 * scene.config.room_size.y, 0};
  std::array<int, kDetectorCount> perm{};
  for (const Detector& d : scene.detectors) {
    const Vec3 p = apply_symmetry(s, d.position, center);
    const Vec3 n = apply_symmetry(s, d.normal);
    int match = -1;
    for (const Detector& e : scene.detectors) {
      if ((e.position - p).norm() < 1e-9 && (e.normal - n).norm() < 1e-9) match = e.index;
    }
    if (match < 0) throw ConfigError("detector layout is not invariant under the requested symmetry");
    perm[static_cast<std::size_t>(d.index)] = match;
  }
  return perm;
}

}  // namespace vlp
