#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vlp/channel.hpp"
#include "vlp/parallel.hpp"
#include "vlp/scene.hpp"

namespace vlp {

enum class SplitLabel : std::uint8_t { none, train, val, test };
std::string_view to_string(SplitLabel s);
SplitLabel parse_split(std::string_view s);

struct FingerprintRow {
  double x = 0, y = 0;
  DetectorVector drss{};
  SplitLabel split = SplitLabel::none;
};

struct GridSpec {
  double start = 0.1;
  double step = 0.1;
  int count = 49;
  double coordinate(int i) const;
};

/// z-score parameters fitted on the training split.
struct Normalization {
  DetectorVector mean{};
  DetectorVector std{};
  DetectorVector apply(const DetectorVector& v) const;
};

struct FingerprintDataset {
  std::vector<FingerprintRow> rows;
  std::string scene_digest;
  GridSpec grid;
  std::array<double, 2> room{5.0, 5.0};
  std::uint64_t seed = 0;
  double max_body_clamp_m = 0.0;  // largest shift applied to keep the footprint inside the room
  std::optional<Normalization> norm;
  std::string manifest;

  std::vector<const FingerprintRow*> rows_with(SplitLabel s) const;
};

/// Rounds to the 9 significant digits used by the dataset file, so files round-trip exactly.
double quantize9(double v);

/// Empty-room RSS per detector. Throws MisuseError if the scene has an occupant.
DetectorVector compute_baseline(const Scene& empty_scene, int bounces);

/// Element-wise occupied - empty. Throws MisuseError on length mismatch.
DetectorVector delta_rss(std::span<const double> rss_occupied, std::span<const double> rss_empty);

struct SweepOptions {
  GridSpec grid;
  int bounces = 3;
  unsigned threads = 0;  // 0 = hardware concurrency
  std::function<void(std::size_t done, std::size_t total)> progress;
};

/// ΔRSS of the occupant at every grid point, rows ordered by (y, x). Grid points whose footprint
/// would leave the room are simulated with the body centre clamped inside; rows keep the nominal
/// coordinates.
FingerprintDataset sweep_grid(const SceneConfig& config, const SweepOptions& options);

/// Same sweep for an explicit list of nominal positions (rows in the given order).
FingerprintDataset sweep_positions(const EmptyRoomBase& base, std::span<const std::array<double, 2>> positions,
                                   int bounces, unsigned threads = 0);

struct SplitRatios {
  double train = 0.6, val = 0.2, test = 0.2;
};

struct SplitResult {
  std::size_t near_wall = 0, interior = 0;
  std::vector<std::string> warnings;
};

bool near_wall(double x, double y, const std::array<double, 2>& room, double threshold);

/// Splits the near-wall and interior strata independently (seeded shuffle; floor for val and test,
/// remainder to train) and fits the normalization on the training rows.
SplitResult stratified_split(FingerprintDataset& dataset, const SplitRatios& ratios, double wall_threshold_m,
                             std::uint64_t seed);

/// CSV with comment-line metadata; header x_m,y_m,drss_0..drss_8,split.
void write_dataset(const std::filesystem::path& path, const FingerprintDataset& dataset);
/// Throws ParseError naming the offending line; InvalidationError when `expected_digest` is given
/// and does not match the file header.
FingerprintDataset read_dataset(const std::filesystem::path& path,
                                const std::optional<std::string>& expected_digest = std::nullopt);

}  // namespace vlp
