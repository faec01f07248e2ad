#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "vlp/error.hpp"
#include "vlp/eval.hpp"
#include "vlp/random.hpp"

using namespace vlp;

TEST(Metrics, MpeExamples) {
  const std::vector<double> e{0.0, 500.0};  // predictions (0,0),(3,4) vs truth (0,0): 0 and 5 m
  EXPECT_EQ(mpe(e), 250.0);
  EXPECT_EQ(mpe(std::vector<double>{7.5}), 7.5);
  EXPECT_EQ(mpe(std::vector<double>{0, 0, 0}), 0.0);
  EXPECT_THROW(mpe(std::vector<double>{}), MisuseError);
}

TEST(Metrics, P90Examples) {
  std::vector<double> e;
  for (int i = 1; i <= 10; ++i) e.push_back(i);
  EXPECT_NEAR(p90(e), 9.1, 1e-12);
  EXPECT_EQ(p90(std::vector<double>{3.0}), 3.0);
  EXPECT_EQ(p90(std::vector<double>{2, 2, 2, 2}), 2.0);
  EXPECT_THROW(p90(std::vector<double>{}), MisuseError);
}

TEST(Metrics, PermutationInvariantAndOrdered) {
  Rng rng(3);
  std::vector<double> e;
  for (int i = 0; i < 37; ++i) e.push_back(uniform(rng, 0, 50));
  const double m = mpe(e), p = p90(e);
  shuffle(std::span<double>(e), rng);
  EXPECT_NEAR(mpe(e), m, 1e-12);
  EXPECT_EQ(p90(e), p);
  std::vector<double> s = e;
  std::sort(s.begin(), s.end());
  EXPECT_GE(p, s[18]);
  EXPECT_GE(s[18], s[0]);
}

TEST(Walk, StepsAndBounds) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto w = random_walk(seed);
    ASSERT_EQ(w.size(), 25u);
    EXPECT_TRUE(w[0][0] >= 0.5 && w[0][0] <= 4.5 && w[0][1] >= 0.5 && w[0][1] <= 4.5);
    for (std::size_t i = 0; i < w.size(); ++i) {
      EXPECT_TRUE(w[i][0] >= 0.1 && w[i][0] <= 4.9 && w[i][1] >= 0.1 && w[i][1] <= 4.9);
      if (i > 0) EXPECT_NEAR(std::hypot(w[i][0] - w[i - 1][0], w[i][1] - w[i - 1][1]), 0.5, 1e-9);
    }
  }
  EXPECT_EQ(random_walk(4), random_walk(4));
  EXPECT_NE(random_walk(4), random_walk(5));
  EXPECT_THROW(random_walk(1, 25, 6.0), ConfigError);
}

TEST(RandomPoints, CountBoundsDeterminism) {
  const auto p = random_points(9);
  ASSERT_EQ(p.size(), 100u);
  for (const auto& q : p) EXPECT_TRUE(q[0] >= 0.1 && q[0] <= 4.9 && q[1] >= 0.1 && q[1] <= 4.9);
  EXPECT_EQ(p, random_points(9));
}

TEST(EvaluateRun, MemorizingModelOnTrainingPoints) {
  SceneConfig cfg;
  cfg.resolution_m = 0.5;
  const EmptyRoomBase base(build_scene(cfg));
  std::vector<Point2> pos;
  for (int iy = 0; iy < 4; ++iy)
    for (int ix = 0; ix < 4; ++ix) pos.push_back({0.9 + 1.1 * ix, 0.9 + 1.1 * iy});
  FingerprintDataset ds = sweep_positions(base, pos, 3, 1);
  Normalization n;
  for (std::size_t j = 0; j < 9; ++j) {
    double s = 0, s2 = 0;
    for (const auto& r : ds.rows) s += r.drss[j];
    n.mean[j] = s / 16;
    for (const auto& r : ds.rows) s2 += (r.drss[j] - n.mean[j]) * (r.drss[j] - n.mean[j]);
    n.std[j] = std::sqrt(s2 / 16);
  }
  std::vector<const FingerprintRow*> rows;
  for (const auto& r : ds.rows) rows.push_back(&r);
  TrainConfig tc;
  tc.epochs = 1500;
  tc.batch_size = 16;
  tc.learning_rate = 0.003;
  EnsembleBundle b;
  b.composition = "toy";
  b.norm = n;
  b.scene_digest = base.digest();
  EnsembleMember m;
  m.model = train(ModelSpec::mlp({32, 32}), make_train_data(rows, n), TrainData{}, tc, 2);
  b.members.push_back(m);
  b.weights = {1.0};

  const auto rep = evaluate_run(b, base, pos, 3, 1, "grid");
  ASSERT_EQ(rep.points.size(), pos.size());
  EXPECT_LT(rep.mpe_cm, 3.0);
  std::vector<double> e;
  for (const auto& p : rep.points) e.push_back(p.error_cm);
  EXPECT_EQ(mpe(e), rep.mpe_cm);
  EXPECT_TRUE(rep.convexity_holds);

  const auto again = evaluate_run(b, base, pos, 3, 1, "grid");
  for (std::size_t i = 0; i < pos.size(); ++i) EXPECT_EQ(again.points[i].prediction, rep.points[i].prediction);

  const auto dir = std::filesystem::temp_directory_path();
  write_trajectory_csv(dir / "vlp_traj.csv", rep);
  write_heatmap_csv(dir / "vlp_heat.csv", rep);
  const auto t = read_numeric_csv(dir / "vlp_traj.csv");
  const auto h = read_numeric_csv(dir / "vlp_heat.csv");
  ASSERT_EQ(t.size(), pos.size());
  ASSERT_EQ(h.size(), pos.size());
  EXPECT_EQ(t[5][3], rep.points[5].prediction[0]);
  EXPECT_EQ(h[7][2], rep.points[7].error_cm);

  b.scene_digest = "other";
  EXPECT_THROW(evaluate_run(b, base, pos, 3, 1, "grid"), InvalidationError);
}

TEST(Summary, HasOneLinePerRow) {
  const std::vector<SummaryRow> rows{{"mlp", 1.5, 9.39, 12.44, 11.21, 18.6}, {"mlp+unet", 12.8, 1, 2, 3, 4}};
  const auto s = summary_table(rows);
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 3);
  EXPECT_NE(s.find("mlp+unet"), std::string::npos);
}
