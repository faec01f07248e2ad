#include "vlp/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "vlp/error.hpp"
#include "vlp/random.hpp"

namespace vlp {

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string join9(const DetectorVector& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += fmt9(v[i]);
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

std::string_view to_string(SplitLabel s) {
  switch (s) {
    case SplitLabel::none: return "none";
    case SplitLabel::train: return "train";
    case SplitLabel::val: return "val";
    case SplitLabel::test: return "test";
  }
  return "none";
}

SplitLabel parse_split(std::string_view s) {
  if (s == "none") return SplitLabel::none;
  if (s == "train") return SplitLabel::train;
  if (s == "val") return SplitLabel::val;
  if (s == "test") return SplitLabel::test;
  throw ParseError("unknown split label '" + std::string(s) + "'");
}

double GridSpec::coordinate(int i) const { return quantize9(start + step * i); }

DetectorVector Normalization::apply(const DetectorVector& v) const {
  DetectorVector out{};
  for (std::size_t j = 0; j < v.size(); ++j) out[j] = (v[j] - mean[j]) / std[j];
  return out;
}

std::vector<const FingerprintRow*> FingerprintDataset::rows_with(SplitLabel s) const {
  std::vector<const FingerprintRow*> out;
  for (const auto& r : rows) {
    if (r.split == s) out.push_back(&r);
  }
  return out;
}

double quantize9(double v) { return std::strtod(fmt9(v).c_str(), nullptr); }

DetectorVector compute_baseline(const Scene& empty_scene, int bounces) {
  if (empty_scene.has_human()) throw MisuseError("baseline requires an unoccupied scene");
  return rss_vector(empty_scene, bounces, 0.0, 0).rss_mw;
}

DetectorVector delta_rss(std::span<const double> rss_occupied, std::span<const double> rss_empty) {
  if (rss_occupied.size() != static_cast<std::size_t>(kDetectorCount) || rss_empty.size() != rss_occupied.size()) {
    throw MisuseError("delta_rss expects two vectors of " + std::to_string(kDetectorCount) + " values");
  }
  DetectorVector out{};
  for (std::size_t j = 0; j < out.size(); ++j) out[j] = rss_occupied[j] - rss_empty[j];
  return out;
}

FingerprintDataset sweep_positions(const EmptyRoomBase& base, std::span<const std::array<double, 2>> positions,
                                   int bounces, unsigned threads) {
  const Scene& empty = base.scene();
  const SceneConfig& cfg = empty.config;
  const DetectorVector rss0 = base.empty_gains(bounces).rss_mw;

  FingerprintDataset ds;
  ds.scene_digest = base.digest();
  ds.room = {cfg.room_size.x, cfg.room_size.y};
  ds.seed = cfg.seed;
  ds.rows.resize(positions.size());
  std::vector<double> shift(positions.size(), 0.0);

  parallel_for(positions.size(), threads, [&](std::size_t i) {
    const auto [x, y] = positions[i];
    const auto c = clamp_body_center(cfg, x, y);
    shift[i] = std::max(std::abs(c[0] - x), std::abs(c[1] - y));
    GainSet g = base.occluded_recompute(place_human(empty, c[0], c[1]), bounces);
    if (cfg.noise_sigma_mw > 0.0) fill_rss(g, cfg, cfg.noise_sigma_mw, mix_seed(cfg.seed, i));
    FingerprintRow& row = ds.rows[i];
    row.x = quantize9(x);
    row.y = quantize9(y);
    row.drss = delta_rss(g.rss_mw, rss0);
    for (double& v : row.drss) v = quantize9(v);
  });
  for (double d : shift) ds.max_body_clamp_m = std::max(ds.max_body_clamp_m, quantize9(d));
  return ds;
}

FingerprintDataset sweep_grid(const SceneConfig& config, const SweepOptions& options) {
  if (options.grid.count < 1 || !(options.grid.step > 0)) throw ConfigError("grid must have a positive count and step");
  const EmptyRoomBase base(build_scene(config));
  std::vector<std::array<double, 2>> positions;
  positions.reserve(static_cast<std::size_t>(options.grid.count * options.grid.count));
  for (int iy = 0; iy < options.grid.count; ++iy) {
    for (int ix = 0; ix < options.grid.count; ++ix) {
      const double x = options.grid.coordinate(ix), y = options.grid.coordinate(iy);
      const double hx = 0.5 * config.human_size.x, hy = 0.5 * config.human_size.y;
      if (x < 0 || y < 0 || x > config.room_size.x || y > config.room_size.y ||
          config.room_size.x < 2 * hx || config.room_size.y < 2 * hy) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "grid point (%.6g, %.6g) lies outside the room", x, y);
        throw PlacementError(buf);
      }
      positions.push_back({x, y});
    }
  }
  FingerprintDataset ds = sweep_positions(base, positions, options.bounces, options.threads);
  ds.grid = options.grid;
  return ds;
}

bool near_wall(double x, double y, const std::array<double, 2>& room, double threshold) {
  return std::min({x, y, room[0] - x, room[1] - y}) <= threshold + 1e-9;
}

SplitResult stratified_split(FingerprintDataset& dataset, const SplitRatios& ratios, double wall_threshold_m,
                             std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> strata[2];
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    const auto& r = dataset.rows[i];
    strata[near_wall(r.x, r.y, dataset.room, wall_threshold_m) ? 0 : 1].push_back(i);
  }
  SplitResult result{strata[0].size(), strata[1].size(), {}};
  if (strata[0].empty() || strata[1].empty()) {
    result.warnings.push_back(std::string(strata[0].empty() ? "near-wall" : "interior") +
                              " stratum is empty; splitting the remaining rows unstratified");
  }

  Rng rng(seed);
  for (auto& stratum : strata) {
    shuffle(std::span<std::size_t>(stratum), rng);
    const std::size_t n = stratum.size();
    const auto n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n) + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n) + 1e-9));
    const std::size_t n_train = n - n_val - n_test;
    for (std::size_t k = 0; k < n; ++k) {
      dataset.rows[stratum[k]].split =
          k < n_train ? SplitLabel::train : (k < n_train + n_val ? SplitLabel::val : SplitLabel::test);
    }
  }

  const auto train = dataset.rows_with(SplitLabel::train);
  if (train.empty()) throw ConfigError("split produced no training rows");
  Normalization norm;
  for (std::size_t j = 0; j < norm.mean.size(); ++j) {
    double sum = 0;
    for (const auto* r : train) sum += r->drss[j];
    const double mean = sum / static_cast<double>(train.size());
    double ss = 0;
    for (const auto* r : train) ss += (r->drss[j] - mean) * (r->drss[j] - mean);
    const double sd = std::sqrt(ss / static_cast<double>(train.size()));
    norm.mean[j] = quantize9(mean);
    norm.std[j] = sd > 0 ? quantize9(sd) : 1.0;
  }
  dataset.norm = norm;
  dataset.seed = seed;
  return result;
}

void write_dataset(const std::filesystem::path& path, const FingerprintDataset& ds) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write dataset '" + path.string() + "'");
  out << "# scene_digest=" << ds.scene_digest << "\n";
  out << "# seed=" << ds.seed << "\n";
  out << "# grid=" << fmt9(ds.grid.start) << "," << fmt9(ds.grid.step) << "," << ds.grid.count << "\n";
  out << "# room=" << fmt9(ds.room[0]) << "," << fmt9(ds.room[1]) << "\n";
  out << "# max_body_clamp_m=" << fmt9(ds.max_body_clamp_m) << "\n";
  if (!ds.manifest.empty()) out << "# manifest=" << ds.manifest << "\n";
  if (ds.norm) {
    out << "# norm_mean=" << join9(ds.norm->mean) << "\n";
    out << "# norm_std=" << join9(ds.norm->std) << "\n";
  }
  out << "x_m,y_m";
  for (int j = 0; j < kDetectorCount; ++j) out << ",drss_" << j;
  out << ",split\n";
  for (const auto& r : ds.rows) {
    out << fmt9(r.x) << ',' << fmt9(r.y) << ',' << join9(r.drss) << ',' << to_string(r.split) << '\n';
  }
  if (!out) throw RuntimeFailure("failed writing dataset '" + path.string() + "'");
}

FingerprintDataset read_dataset(const std::filesystem::path& path, const std::optional<std::string>& expected_digest) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset '" + path.string() + "'");
  FingerprintDataset ds;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::optional<DetectorVector> mean, sd;
  const auto fail = [&](const std::string& what) -> void {
    throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + what);
  };
  const auto parse_vector = [&](const std::string& text) {
    const auto cells = split_csv(text);
    if (cells.size() != static_cast<std::size_t>(kDetectorCount)) fail("expected 9 values");
    DetectorVector v{};
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (!parse_double(cells[j], v[j])) fail("malformed number '" + cells[j] + "'");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (line.size() < 3 || eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string value = line.substr(eq + 1);
      if (key == "scene_digest") {
        ds.scene_digest = value;
      } else if (key == "seed") {
        ds.seed = std::strtoull(value.c_str(), nullptr, 10);
      } else if (key == "grid") {
        const auto c = split_csv(value);
        if (c.size() != 3 || !parse_double(c[0], ds.grid.start) || !parse_double(c[1], ds.grid.step)) fail("bad grid");
        ds.grid.count = std::atoi(c[2].c_str());
      } else if (key == "room") {
        const auto c = split_csv(value);
        if (c.size() != 2 || !parse_double(c[0], ds.room[0]) || !parse_double(c[1], ds.room[1])) fail("bad room");
      } else if (key == "max_body_clamp_m") {
        if (!parse_double(value, ds.max_body_clamp_m)) fail("bad max_body_clamp_m");
      } else if (key == "manifest") {
        ds.manifest = value;
      } else if (key == "norm_mean") {
        mean = parse_vector(value);
      } else if (key == "norm_std") {
        sd = parse_vector(value);
      }
      continue;
    }
    const auto cells = split_csv(line);
    if (!header_seen) {
      if (cells.size() != 12 || cells[0] != "x_m" || cells[1] != "y_m" || cells[11] != "split") {
        fail("expected header x_m,y_m,drss_0..drss_8,split");
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != 12) {
      fail("expected 2 coordinates, 9 features and a split label, got " + std::to_string(cells.size()) + " fields");
    }
    FingerprintRow row;
    if (!parse_double(cells[0], row.x) || !parse_double(cells[1], row.y)) fail("malformed coordinate");
    for (std::size_t j = 0; j < row.drss.size(); ++j) {
      if (!parse_double(cells[j + 2], row.drss[j])) fail("malformed feature '" + cells[j + 2] + "'");
    }
    try {
      row.split = parse_split(cells[11]);
    } catch (const ParseError& e) {
      fail(e.what());
    }
    ds.rows.push_back(row);
  }
  if (!header_seen) throw ParseError(path.string() + ": missing header line");
  if (mean.has_value() != sd.has_value()) throw ParseError(path.string() + ": incomplete normalization metadata");
  if (mean) ds.norm = Normalization{*mean, *sd};
  if (expected_digest && *expected_digest != ds.scene_digest) {
    throw InvalidationError("dataset '" + path.string() + "' was generated for scene " + ds.scene_digest +
                            ", expected " + *expected_digest);
  }
  return ds;
}

}  // namespace vlp
