#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vlp/channel.hpp"
#include "vlp/ensemble.hpp"

namespace vlp {

/// Arithmetic mean. Throws MisuseError on an empty list.
double mpe(std::span<const double> errors);
/// Linear-interpolation percentile at rank 1 + 0.9 (n - 1) of the sorted list.
double p90(std::span<const double> errors);

/// Walk of `steps` positions: start uniform in [0.5, room-0.5]^2, then fixed-length steps at
/// uniform headings, resampled (up to 100 tries) until inside [margin, room-margin]^2.
std::vector<Point2> random_walk(std::uint64_t seed, int steps = 25, double step_len = 0.5, double margin = 0.1,
                                std::array<double, 2> room = {5.0, 5.0});
std::vector<Point2> random_points(std::uint64_t seed, int n = 100, double margin = 0.1,
                                  std::array<double, 2> room = {5.0, 5.0});

struct EvalPoint {
  Point2 truth{}, prediction{};
  double error_cm = 0;
  double infer_ms = 0;
  std::vector<double> member_error_cm;
};

struct Timings {
  double dataset_s = 0, training_s = 0, weight_fit_s = 0, simulation_s = 0;
  double inference_ms_mean = 0;
};

struct EvalReport {
  std::string tag;          // ensemble composition
  std::string experiment;   // "trajectory", "random100", ...
  std::vector<EvalPoint> points;
  double mpe_cm = 0, p90_cm = 0;
  std::vector<double> member_mpe_cm;
  double weighted_member_mpe_cm = 0;  // sum_i w_i * MPE_i
  bool convexity_holds = false;
  double max_body_clamp_m = 0;
  std::string scene_digest;
  std::string hardware;
  Timings timings;
};

/// Simulates the occupant at each (continuous) position, predicts with the bundle and collects
/// errors. Throws InvalidationError when bundle and base come from different scenes.
EvalReport evaluate_run(const EnsembleBundle& bundle, const EmptyRoomBase& base, std::span<const Point2> positions,
                        int bounces, unsigned threads, const std::string& experiment);

std::string hardware_descriptor();

/// step,x,y,x_hat,y_hat,pe_cm
void write_trajectory_csv(const std::filesystem::path& path, const EvalReport& report);
/// x,y,pe_cm
void write_heatmap_csv(const std::filesystem::path& path, const EvalReport& report);
/// Rows of a CSV written above (header skipped), as numbers.
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path);

nlohmann::json report_json(const EvalReport& report);
/// Inverse of report_json. Throws ParseError on missing fields.
EvalReport report_from_json(const nlohmann::json& j);

struct SummaryRow {
  std::string composition;
  double training_min = 0;
  double traj_mpe = 0, traj_p90 = 0, rand_mpe = 0, rand_p90 = 0;
};
/// Plain-text table: composition, training minutes, trajectory MPE/P90, random-100 MPE/P90.
std::string summary_table(std::span<const SummaryRow> rows);

}  // namespace vlp
