#include "vlp/channel.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "vlp/error.hpp"

namespace vlp {

namespace {

constexpr double kPi = std::numbers::pi;

DetectorVector to_detector_vector(const Eigen::VectorXd& v) {
  DetectorVector out{};
  for (int k = 0; k < kDetectorCount; ++k) out[static_cast<std::size_t>(k)] = v[k];
  return out;
}

// Bounce k power is gathered into the detectors, then pushed through the transfer matrix.
template <typename Propagate>
GainSet propagate_bounces(const DetectorVector& los, int bounces, Propagate&& step) {
  GainSet out;
  out.los = los;
  out.gains = los;
  for (int k = 1; k <= bounces; ++k) {
    const DetectorVector h = step(k, k < bounces);
    out.bounces.push_back(h);
    for (std::size_t j = 0; j < h.size(); ++j) out.gains[j] += h[j];
  }
  return out;
}

bool boxes_overlap(const Vec3& a, const Vec3& b, const Cuboid& box) {
  return std::min(a.x, b.x) < box.hi.x && std::max(a.x, b.x) > box.lo.x && std::min(a.y, b.y) < box.hi.y &&
         std::max(a.y, b.y) > box.lo.y && std::min(a.z, b.z) < box.hi.z && std::max(a.z, b.z) > box.lo.z;
}

void check_bounces(int bounces) {
  if (bounces < 0) throw ConfigError("reflection order must be non-negative");
}

}  // namespace

double concentrator_gain(double lens_index, double fov_rad) {
  const double s = std::sin(fov_rad);
  return lens_index * lens_index / (s * s);
}

double los_link_gain(const Vec3& src_pos, const Vec3& src_normal, double order, const Vec3& rx_pos,
                     const Vec3& rx_normal, double area, double fov_rad, double filter_gain, double lens_index,
                     std::span<const Cuboid> occluders) {
  const Vec3 d = rx_pos - src_pos;
  const double d2 = d.norm2();
  if (d2 == 0.0) throw ConfigError("degenerate link: source and receiver coincide");
  const double dist = std::sqrt(d2);
  const double cos_emit = dot(src_normal, d) / dist;
  const double cos_incident = -dot(rx_normal, d) / dist;
  if (cos_emit <= 0.0 || cos_incident <= 0.0) return 0.0;
  if (cos_incident < std::cos(fov_rad)) return 0.0;
  if (!occluders.empty() && !segment_visible(src_pos, rx_pos, occluders)) return 0.0;
  return (order + 1.0) * area / (2.0 * kPi * d2) * std::pow(cos_emit, order) * filter_gain *
         concentrator_gain(lens_index, fov_rad) * cos_incident;
}

double los_link_gain(const Vec3& src_pos, const Vec3& src_normal, double order, const Detector& rx,
                     std::span<const Cuboid> occluders) {
  return los_link_gain(src_pos, src_normal, order, rx.position, rx.normal, rx.area, rx.fov_rad, rx.filter_gain,
                       rx.lens_index, occluders);
}

double incident_gain(const Emitter& emitter, const SurfaceSegment& seg, std::span<const Cuboid> occluders) {
  const Vec3 d = seg.centroid - emitter.position;
  const double d2 = d.norm2();
  if (d2 == 0.0) throw ConfigError("degenerate link: segment coincides with the emitter");
  const double dist = std::sqrt(d2);
  const double cos_emit = dot(emitter.normal, d) / dist;
  const double cos_incident = -dot(seg.normal, d) / dist;
  if (cos_emit <= 0.0 || cos_incident <= 0.0) return 0.0;
  if (!occluders.empty() && !segment_visible(emitter.position, seg.centroid, occluders)) return 0.0;
  const double m = emitter.lambertian_order;
  return (m + 1.0) / (2.0 * kPi * d2) * std::pow(cos_emit, m) * cos_incident * seg.area;
}

double transfer_coefficient(const SurfaceSegment& from, const SurfaceSegment& to) {
  const Vec3 d = to.centroid - from.centroid;
  const double d2 = d.norm2();
  if (d2 == 0.0) return 0.0;
  const double dist = std::sqrt(d2);
  const double cos_emit = dot(from.normal, d) / dist;
  const double cos_incident = -dot(to.normal, d) / dist;
  if (cos_emit <= 0.0 || cos_incident <= 0.0) return 0.0;
  return from.reflectance * cos_emit * cos_incident / (kPi * d2) * to.area;
}

TransferMatrix build_transfer_matrix(std::span<const SurfaceSegment> segments, std::span<const Cuboid> occluders) {
  const auto n = static_cast<Eigen::Index>(segments.size());
  TransferMatrix t{Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& si = segments[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& sj = segments[static_cast<std::size_t>(j)];
      const double to_i = transfer_coefficient(sj, si);
      const double to_j = transfer_coefficient(si, sj);
      if (to_i == 0.0 && to_j == 0.0) continue;
      if (!occluders.empty() && !segment_visible(si.centroid, sj.centroid, occluders)) continue;
      t.coeff(i, j) = to_i;
      t.coeff(j, i) = to_j;
    }
  }
  return t;
}

Eigen::VectorXd first_bounce(const Emitter& emitter, std::span<const SurfaceSegment> segments,
                             std::span<const Cuboid> occluders) {
  Eigen::VectorXd p(static_cast<Eigen::Index>(segments.size()));
  for (std::size_t i = 0; i < segments.size(); ++i) {
    p[static_cast<Eigen::Index>(i)] = incident_gain(emitter, segments[i], occluders);
  }
  return p;
}

Eigen::MatrixXd gather_matrix(std::span<const Detector> detectors, std::span<const SurfaceSegment> segments,
                              std::span<const Cuboid> occluders) {
  Eigen::MatrixXd g(static_cast<Eigen::Index>(detectors.size()), static_cast<Eigen::Index>(segments.size()));
  for (std::size_t k = 0; k < detectors.size(); ++k) {
    for (std::size_t i = 0; i < segments.size(); ++i) {
      const auto& s = segments[i];
      g(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          s.reflectance == 0.0 ? 0.0 : s.reflectance * los_link_gain(s.centroid, s.normal, 1.0, detectors[k], occluders);
    }
  }
  return g;
}

DetectorVector los_gains(const Scene& scene) {
  DetectorVector out{};
  for (const Detector& d : scene.detectors) {
    if (d.position == scene.emitter.position) continue;
    out[static_cast<std::size_t>(d.index)] =
        los_link_gain(scene.emitter.position, scene.emitter.normal, scene.emitter.lambertian_order, d, scene.occluders);
  }
  return out;
}

GainSet multi_bounce_gains(const Scene& scene, int bounces) {
  check_bounces(bounces);
  const auto segments = scene.all_segments();
  const DetectorVector los = los_gains(scene);
  if (bounces == 0) return propagate_bounces(los, 0, [](int, bool) { return DetectorVector{}; });

  const TransferMatrix t = build_transfer_matrix(segments, scene.occluders);
  const Eigen::MatrixXd g = gather_matrix(scene.detectors, segments, scene.occluders);
  Eigen::VectorXd p = first_bounce(scene.emitter, segments, scene.occluders);
  return propagate_bounces(los, bounces, [&](int, bool more) {
    const DetectorVector h = to_detector_vector(g * p);
    if (more) p = t.coeff * p;
    return h;
  });
}

void fill_rss(GainSet& gains, const SceneConfig& config, double noise_sigma_mw, std::uint64_t seed) {
  const double scale = config.transmit_power_mw * config.pd_responsivity;
  for (std::size_t j = 0; j < gains.gains.size(); ++j) gains.rss_mw[j] = scale * gains.gains[j];
  if (noise_sigma_mw > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sigma_mw);
    for (double& r : gains.rss_mw) r += noise(rng);
  }
}

GainSet rss_vector(const Scene& scene, int bounces, double noise_sigma_mw, std::uint64_t seed) {
  if (!(scene.config.transmit_power_mw > 0.0)) throw ConfigError("transmit power must be positive");
  GainSet g = multi_bounce_gains(scene, bounces);
  fill_rss(g, scene.config, noise_sigma_mw, seed);
  return g;
}

EmptyRoomBase::EmptyRoomBase(const Scene& empty_scene)
    : scene_(empty_scene), digest_(empty_scene.config.digest()) {
  if (scene_.has_human()) throw MisuseError("empty-room base requires a scene without occupant");
  const auto& segs = scene_.static_segments;
  transfer_ = build_transfer_matrix(segs, {});
  first_ = first_bounce(scene_.emitter, segs, {});
  gather_ = gather_matrix(scene_.detectors, segs, {});
  los_ = los_gains(scene_);
  const auto n = static_cast<std::uint32_t>(segs.size());
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = i + 1; j < n; ++j) {
      if (transfer_.coeff(i, j) != 0.0 || transfer_.coeff(j, i) != 0.0) coupled_.push_back({i, j});
    }
  }
}

GainSet EmptyRoomBase::empty_gains(int bounces) const {
  check_bounces(bounces);
  Eigen::VectorXd p = first_;
  GainSet g = propagate_bounces(los_, bounces, [&](int, bool more) {
    const DetectorVector h = to_detector_vector(gather_ * p);
    if (more) p = transfer_.coeff * p;
    return h;
  });
  fill_rss(g, scene_.config, 0.0, 0);
  return g;
}

std::vector<EmptyRoomBase::Pair> EmptyRoomBase::blocked_pairs(const Cuboid& box) const {
  std::vector<Pair> out;
  const auto& segs = scene_.static_segments;
  for (const Pair& p : coupled_) {
    const Vec3& a = segs[p.i].centroid;
    const Vec3& b = segs[p.j].centroid;
    if (boxes_overlap(a, b, box) && !segment_clear(a, b, box)) out.push_back(p);
  }
  return out;
}

std::size_t EmptyRoomBase::blocked_pair_count(const Cuboid& box) const { return blocked_pairs(box).size(); }

GainSet EmptyRoomBase::occluded_recompute(const Scene& occupied, int bounces) const {
  check_bounces(bounces);
  if (occupied.config.digest() != digest_) {
    throw InvalidationError("empty-room base was built for scene " + digest_ + ", not " + occupied.config.digest());
  }
  if (!occupied.has_human()) return empty_gains(bounces);

  const auto& segs = scene_.static_segments;
  const auto& human = occupied.human_segments;
  const std::span<const Cuboid> occ = occupied.occluders;
  const Cuboid& box = occupied.occluders.front();
  const auto n = static_cast<Eigen::Index>(segs.size());
  const auto m = static_cast<Eigen::Index>(human.size());

  Eigen::VectorXd p_s = first_;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3& c = segs[static_cast<std::size_t>(i)].centroid;
    if (p_s[i] != 0.0 && !segment_clear(scene_.emitter.position, c, box)) p_s[i] = 0.0;
  }
  Eigen::VectorXd p_h = first_bounce(scene_.emitter, human, occ);

  Eigen::MatrixXd g_s = gather_;
  for (Eigen::Index k = 0; k < g_s.rows(); ++k) {
    const Vec3& d = scene_.detectors[static_cast<std::size_t>(k)].position;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (g_s(k, i) != 0.0 && !segment_clear(segs[static_cast<std::size_t>(i)].centroid, d, box)) g_s(k, i) = 0.0;
    }
  }
  const Eigen::MatrixXd g_h = gather_matrix(scene_.detectors, human, occ);

  const std::vector<Pair> blocked = bounces > 1 ? blocked_pairs(box) : std::vector<Pair>{};
  Eigen::MatrixXd t_sh = Eigen::MatrixXd::Zero(n, m);  // human -> static
  Eigen::MatrixXd t_hs = Eigen::MatrixXd::Zero(m, n);  // static -> human
  Eigen::MatrixXd t_hh;
  if (bounces > 1) {
    for (Eigen::Index h = 0; h < m; ++h) {
      const auto& sh = human[static_cast<std::size_t>(h)];
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto& si = segs[static_cast<std::size_t>(i)];
        const double to_static = transfer_coefficient(sh, si);
        const double to_human = transfer_coefficient(si, sh);
        if (to_static == 0.0 && to_human == 0.0) continue;
        if (!segment_clear(si.centroid, sh.centroid, box)) continue;
        t_sh(i, h) = to_static;
        t_hs(h, i) = to_human;
      }
    }
    t_hh = build_transfer_matrix(human, occ).coeff;
  }

  GainSet g = propagate_bounces(los_gains(occupied), bounces, [&](int, bool more) {
    const DetectorVector h = to_detector_vector(g_s * p_s + g_h * p_h);
    if (more) {
      Eigen::VectorXd next_s = transfer_.coeff * p_s;
      for (const Pair& p : blocked) {
        next_s[p.i] -= transfer_.coeff(p.i, p.j) * p_s[p.j];
        next_s[p.j] -= transfer_.coeff(p.j, p.i) * p_s[p.i];
      }
      next_s = next_s.cwiseMax(0.0);
      next_s.noalias() += t_sh * p_h;
      Eigen::VectorXd next_h = t_hs * p_s;
      next_h.noalias() += t_hh * p_h;
      p_s = std::move(next_s);
      p_h = std::move(next_h);
    }
    return h;
  });
  fill_rss(g, occupied.config, 0.0, 0);
  return g;
}

void write_gain_csv(const std::filesystem::path& path, const GainSet& gains, const std::string& scene_digest,
                    const std::string& manifest) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write gain file '" + path.string() + "'");
  out << "# scene_digest=" << scene_digest << "\n";
  if (!manifest.empty()) out << "# manifest=" << manifest << "\n";
  out << "pd_index";
  for (std::size_t k = 1; k <= gains.bounces.size(); ++k) out << ",h" << k;
  out << ",h_total,rss_mw\n";
  char buf[64];
  for (std::size_t j = 0; j < gains.gains.size(); ++j) {
    out << j;
    for (const auto& b : gains.bounces) {
      std::snprintf(buf, sizeof buf, ",%.17g", b[j]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.17g", gains.gains[j]);
    out << buf;
    std::snprintf(buf, sizeof buf, ",%.17g", gains.rss_mw[j]);
    out << buf << "\n";
  }
  if (!out) throw RuntimeFailure("failed writing gain file '" + path.string() + "'");
}

GainFile read_gain_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open gain file '" + path.string() + "'");
  GainFile file;
  std::string line;
  std::size_t line_no = 0;
  std::size_t bounce_cols = 0;
  bool header_seen = false;
  std::size_t rows = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line[0] == '#') {
      constexpr std::string_view key = "# scene_digest=";
      if (line.rfind(key, 0) == 0) file.scene_digest = line.substr(key.size());
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (!header_seen) {
      if (cells.size() < 3 || cells.front() != "pd_index" || cells[cells.size() - 2] != "h_total" ||
          cells.back() != "rss_mw") {
        fail("expected header pd_index,h1..hK,h_total,rss_mw");
      }
      bounce_cols = cells.size() - 3;
      file.gains.bounces.assign(bounce_cols, DetectorVector{});
      header_seen = true;
      continue;
    }
    if (cells.size() != bounce_cols + 3) fail("expected " + std::to_string(bounce_cols + 3) + " columns");
    std::size_t idx = 0;
    std::vector<double> values;
    try {
      idx = std::stoul(cells[0]);
      for (std::size_t c = 1; c < cells.size(); ++c) values.push_back(std::stod(cells[c]));
    } catch (const std::exception&) {
      fail("malformed number");
    }
    if (idx >= static_cast<std::size_t>(kDetectorCount)) fail("pd_index out of range");
    for (std::size_t k = 0; k < bounce_cols; ++k) file.gains.bounces[k][idx] = values[k];
    file.gains.gains[idx] = values[bounce_cols];
    file.gains.rss_mw[idx] = values[bounce_cols + 1];
    ++rows;
  }
  if (!header_seen || rows != static_cast<std::size_t>(kDetectorCount)) {
    throw ParseError(path.string() + ": expected " + std::to_string(kDetectorCount) + " detector rows");
  }
  return file;
}

}  // namespace vlp
