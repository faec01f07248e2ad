#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vlp/fingerprint.hpp"
#include "vlp/neural.hpp"

namespace vlp {

using Point2 = std::array<double, 2>;

/// Lloyd iterations from k-means++ seeding. Labels are in [0, k). Throws ConfigError when
/// k < 1 or k exceeds the number of points.
std::vector<int> kmeans_partition(std::span<const Point2> points, int k, std::uint64_t seed);

struct FoldPlan {
  int k = 0;
  std::vector<int> labels;                          // per weight-fitting row
  std::vector<std::vector<std::size_t>> train;      // per fold: rows outside the held-out cluster
  std::vector<std::vector<std::size_t>> held_out;   // per fold: rows of cluster f
};

FoldPlan make_fold_plan(std::span<const Point2> points, int k, std::uint64_t seed);

/// Member predictions indexed [member][row].
using MemberPredictions = std::vector<std::vector<Point2>>;

/// Mean Euclidean error of the w-weighted prediction.
double weighted_objective(const MemberPredictions& preds, std::span<const Point2> truths,
                          std::span<const double> w);

struct WeightFit {
  std::vector<double> weights;
  double objective = 0;
  double uniform_objective = 0;
  std::vector<double> vertex_objectives;
  int iterations = 0;
};

/// Projected-gradient minimization of weighted_objective over the simplex. Flat objectives return
/// uniform weights.
WeightFit fit_fold_weights(const MemberPredictions& preds, std::span<const Point2> truths);

/// Inverse-MPE weighted mean of the fold weights (MPE floored at 1e-6 m), renormalized.
std::vector<double> aggregate_fold_weights(const std::vector<std::vector<double>>& fold_weights,
                                           std::span<const double> fold_mpe_m);

/// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::span<const double> v);

struct EnsembleMember {
  Architecture architecture = Architecture::mlp;
  std::uint64_t seed = 0;
  ModelWeights model;
  std::string file;  // relative to the bundle directory
  double train_seconds = 0;
};

struct FoldRecord {
  std::size_t held_out_rows = 0;
  double mpe_m = 0;
  std::vector<double> weights;
  double uniform_objective = 0;
  std::vector<double> vertex_objectives;
};

struct EnsembleBundle {
  std::string composition;  // e.g. "mlp+unet"
  std::vector<EnsembleMember> members;
  std::vector<double> weights;
  Normalization norm;
  std::vector<FoldRecord> folds;
  int k = 0;
  std::string scene_digest;
  std::uint64_t seed = 0;
  std::array<double, 2> room{5.0, 5.0};
  double train_seconds = 0;  // wall time of member training
  double fit_seconds = 0;    // wall time of cross-validated weight fitting
  std::string manifest;
};

inline constexpr int kInstancesPerArchitecture = 3;

std::string composition_tag(std::span<const Architecture> archs);
std::vector<Architecture> parse_composition(std::string_view tag);

struct MemberTrainOptions {
  TrainConfig config;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::function<void(const EnsembleMember&)> on_member;
};

/// Trains kInstancesPerArchitecture models of every spec on the train split with per-member seeds
/// derived from options.seed, validating on the val split. Dataset must be split and normalized.
std::vector<EnsembleMember> train_members(const FingerprintDataset& dataset, std::span<const ModelSpec> specs,
                                          const MemberTrainOptions& options);

/// Member outputs for raw ΔRSS rows, each clamped to the room.
MemberPredictions member_predictions(std::span<const EnsembleMember> members, const Normalization& norm,
                                     std::span<const DetectorVector> drss, const std::array<double, 2>& room);

/// Clusters the train+val rows, fits weights on every held-out cluster and aggregates them into
/// bundle.weights.
void spatial_cv(EnsembleBundle& bundle, const FingerprintDataset& dataset, int k, std::uint64_t seed);

Point2 clamp_to_room(const Point2& p, const std::array<double, 2>& room);

/// Weighted sum of clamped member outputs for raw ΔRSS (mW), clamped to the room.
Point2 ensemble_predict(const EnsembleBundle& bundle, const DetectorVector& drss);

/// manifest.json plus one weight file per member.
void save_bundle(const std::filesystem::path& dir, EnsembleBundle& bundle);
EnsembleBundle load_bundle(const std::filesystem::path& dir);

}  // namespace vlp
