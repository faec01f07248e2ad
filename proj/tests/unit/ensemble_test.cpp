#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "vlp/ensemble.hpp"
#include "vlp/error.hpp"
#include "vlp/random.hpp"

using namespace vlp;

namespace {

std::vector<Point2> blobs() {
  Rng rng(4);
  std::vector<Point2> pts;
  const Point2 centers[3] = {{0.5, 0.5}, {4.5, 0.5}, {2.5, 4.5}};
  for (const auto& c : centers)
    for (int i = 0; i < 30; ++i) pts.push_back({c[0] + uniform(rng, -0.1, 0.1), c[1] + uniform(rng, -0.1, 0.1)});
  return pts;
}

double sum(const std::vector<double>& w) {
  double s = 0;
  for (double v : w) s += v;
  return s;
}

}  // namespace

TEST(KMeans, RecoversBlobs) {
  const auto pts = blobs();
  const auto labels = kmeans_partition(pts, 3, 9);
  for (int b = 0; b < 3; ++b) {
    for (int i = 1; i < 30; ++i) EXPECT_EQ(labels[static_cast<std::size_t>(b * 30 + i)], labels[static_cast<std::size_t>(b * 30)]);
  }
  EXPECT_NE(labels[0], labels[30]);
  EXPECT_NE(labels[0], labels[60]);
  EXPECT_NE(labels[30], labels[60]);
  EXPECT_EQ(labels, kmeans_partition(pts, 3, 9));
  for (int l : kmeans_partition(pts, 1, 2)) EXPECT_EQ(l, 0);
  EXPECT_THROW(kmeans_partition(std::span(pts).first(2), 3, 1), ConfigError);
}

TEST(KMeans, DuplicatePointsStillFillClusters) {
  std::vector<Point2> pts(6, Point2{1, 1});
  const auto labels = kmeans_partition(pts, 3, 1);
  std::vector<int> count(3, 0);
  for (int l : labels) ++count[static_cast<std::size_t>(l)];
  for (int c : count) EXPECT_GT(c, 0);
}

TEST(FoldPlan, PartitionsRows) {
  const auto pts = blobs();
  const auto plan = make_fold_plan(pts, 3, 1);
  std::vector<int> seen(pts.size(), 0);
  for (int f = 0; f < 3; ++f) {
    const auto& h = plan.held_out[static_cast<std::size_t>(f)];
    EXPECT_EQ(h.size() + plan.train[static_cast<std::size_t>(f)].size(), pts.size());
    for (auto r : h) ++seen[r];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Simplex, Projection) {
  const auto w = project_simplex(std::vector<double>{0.2, 0.2, 0.6});
  EXPECT_NEAR(w[2], 0.6, 1e-15);
  const auto v = project_simplex(std::vector<double>{5, -1, 0});
  EXPECT_EQ(v[0], 1.0);
  EXPECT_EQ(v[1], 0.0);
  const auto u = project_simplex(std::vector<double>{0.5, 0.5, 0.5, 0.5});
  for (double x : u) EXPECT_NEAR(x, 0.25, 1e-15);
}

TEST(FitWeights, ConcentratesOnCorrectMember) {
  Rng rng(2);
  std::vector<Point2> truth;
  for (int i = 0; i < 40; ++i) truth.push_back({uniform(rng, 0, 5), uniform(rng, 0, 5)});
  MemberPredictions p(3, truth);
  for (auto& q : p[1]) q[0] += 1.0;
  for (auto& q : p[2]) q[1] -= 1.0;
  const auto fit = fit_fold_weights(p, truth);
  EXPECT_LT(fit.objective, 1e-6);
  EXPECT_GT(fit.weights[0], 0.999);
  EXPECT_NEAR(sum(fit.weights), 1.0, 1e-12);
}

TEST(FitWeights, IdenticalMembersGiveUniform) {
  std::vector<Point2> truth{{1, 1}, {2, 3}};
  MemberPredictions p(4, std::vector<Point2>{{1.5, 1}, {2, 2.5}});
  const auto fit = fit_fold_weights(p, truth);
  for (double w : fit.weights) EXPECT_EQ(w, 0.25);
}

TEST(FitWeights, NeverWorseThanUniformOrVertices) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(s);
    std::vector<Point2> truth;
    for (int i = 0; i < 25; ++i) truth.push_back({uniform(rng, 0, 5), uniform(rng, 0, 5)});
    MemberPredictions p(5);
    for (auto& m : p)
      for (const auto& t : truth) m.push_back({t[0] + uniform(rng, -1, 1), t[1] + uniform(rng, -1, 1)});
    const auto fit = fit_fold_weights(p, truth);
    EXPECT_LE(fit.objective, fit.uniform_objective + 1e-9);
    for (double v : fit.vertex_objectives) EXPECT_LE(fit.objective, v + 1e-9);
    EXPECT_NEAR(fit.objective, weighted_objective(p, truth, fit.weights), 1e-15);
    EXPECT_NEAR(sum(fit.weights), 1.0, 1e-12);
    for (double w : fit.weights) EXPECT_GE(w, 0.0);
  }
}

TEST(FitWeights, RejectsNonFinite) {
  std::vector<Point2> truth{{1, 1}};
  MemberPredictions p{{{std::nan(""), 1}}};
  EXPECT_THROW(fit_fold_weights(p, truth), MisuseError);
}

TEST(Aggregate, InverseMpe) {
  const auto w = aggregate_fold_weights({{1, 0}, {0, 1}}, std::vector<double>{0.01, 1.0});
  EXPECT_NEAR(w[0], 100.0 / 101.0, 1e-12);
  EXPECT_NEAR(w[1], 1.0 / 101.0, 1e-12);
  const auto same = aggregate_fold_weights({{0.3, 0.7}, {0.3, 0.7}}, std::vector<double>{0.2, 0.5});
  EXPECT_NEAR(same[0], 0.3, 1e-15);
  const auto zero = aggregate_fold_weights({{1, 0}, {0, 1}}, std::vector<double>{0.0, 1e-6});
  EXPECT_NEAR(zero[0], 0.5, 1e-12);
}

TEST(Composition, Tags) {
  const std::vector<Architecture> a{Architecture::mlp, Architecture::cnn, Architecture::unet};
  EXPECT_EQ(composition_tag(a), "mlp+cnn+unet");
  EXPECT_EQ(parse_composition("mlp+unet"), (std::vector<Architecture>{Architecture::mlp, Architecture::unet}));
  EXPECT_THROW(parse_composition("mlp+mlp"), ConfigError);
  EXPECT_THROW(parse_composition("mlp+rnn"), ConfigError);
}

TEST(Predict, WeightedClampedSum) {
  EnsembleBundle b;
  b.norm.std.fill(1.0);
  // zero-weight dense stacks whose output is the bias
  for (Point2 out : {Point2{1, 1}, Point2{3, 3}, Point2{7, -2}}) {
    EnsembleMember m;
    m.model = build_model(ModelSpec::dense_stack({}), 1);
    m.model.weight[0].setZero();
    m.model.bias[0] << out[0], out[1];
    b.members.push_back(m);
  }
  DetectorVector x{};
  b.weights = {0.5, 0.5, 0.0};
  EXPECT_EQ(ensemble_predict(b, x), (Point2{2, 2}));
  b.weights = {0, 0, 1};
  EXPECT_EQ(ensemble_predict(b, x), (Point2{5, 0}));
  b.weights = {0.25, 0.25, 0.5};
  const Point2 p = ensemble_predict(b, x);
  const Point2 truth{2.2, 1.9};
  const double e = std::hypot(p[0] - truth[0], p[1] - truth[1]);
  const double bound = 0.25 * std::hypot(1 - 2.2, 1 - 1.9) + 0.25 * std::hypot(3 - 2.2, 3 - 1.9) +
                       0.5 * std::hypot(5 - 2.2, 0 - 1.9);
  EXPECT_LE(e, bound);
  x[0] = INFINITY;
  EXPECT_THROW(ensemble_predict(b, x), MisuseError);
}

TEST(Bundle, TrainCvSaveLoad) {
  FingerprintDataset ds;
  ds.scene_digest = "d";
  Rng rng(1);
  for (int i = 0; i < 90; ++i) {
    FingerprintRow r;
    r.x = uniform(rng, 0.1, 4.9);
    r.y = uniform(rng, 0.1, 4.9);
    for (std::size_t j = 0; j < 9; ++j) r.drss[j] = 1e-4 * (r.x * static_cast<double>(j) - r.y);
    r.split = i % 5 == 0 ? SplitLabel::val : (i % 5 == 1 ? SplitLabel::test : SplitLabel::train);
    ds.rows.push_back(r);
  }
  Normalization n;
  n.std.fill(1e-4);
  ds.norm = n;
  MemberTrainOptions opt;
  opt.config.epochs = 3;
  opt.seed = 5;
  const std::vector<ModelSpec> specs{ModelSpec::mlp({8}), ModelSpec::cnn({2}, {8})};
  EnsembleBundle b;
  b.members = train_members(ds, specs, opt);
  ASSERT_EQ(b.members.size(), 6u);
  EXPECT_NE(b.members[0].seed, b.members[1].seed);
  b.norm = n;
  b.scene_digest = "d";
  spatial_cv(b, ds, 3, 7);
  EXPECT_EQ(b.folds.size(), 3u);
  EXPECT_NEAR(sum(b.weights), 1.0, 1e-12);
  std::size_t held = 0;
  for (const auto& f : b.folds) held += f.held_out_rows;
  EXPECT_EQ(held, ds.rows_with(SplitLabel::train).size() + ds.rows_with(SplitLabel::val).size());

  const auto dir = std::filesystem::temp_directory_path() / "vlp_bundle_test";
  std::filesystem::remove_all(dir);
  save_bundle(dir, b);
  const auto r = load_bundle(dir);
  EXPECT_EQ(r.weights, b.weights);
  EXPECT_EQ(r.members.size(), 6u);
  EXPECT_EQ(ensemble_predict(r, ds.rows[3].drss), ensemble_predict(b, ds.rows[3].drss));

  // same seeds train the same members
  const auto again = train_members(ds, specs, opt);
  EXPECT_TRUE(again[4].model.weight.back() == b.members[4].model.weight.back());
  std::filesystem::remove_all(dir);
}
