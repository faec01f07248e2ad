#include "vlp/ensemble.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "vlp/error.hpp"
#include "vlp/parallel.hpp"
#include "vlp/random.hpp"

namespace vlp {

namespace {

double dist2(const Point2& a, const Point2& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return dx * dx + dy * dy;
}

int nearest(const Point2& p, const std::vector<Point2>& centers) {
  int best = 0;
  double best_d = dist2(p, centers[0]);
  for (std::size_t c = 1; c < centers.size(); ++c) {
    const double d = dist2(p, centers[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<double> gradient(const MemberPredictions& preds, std::span<const Point2> truths, std::span<const double> w) {
  std::vector<double> g(preds.size(), 0.0);
  for (std::size_t r = 0; r < truths.size(); ++r) {
    double ex = -truths[r][0], ey = -truths[r][1];
    for (std::size_t i = 0; i < preds.size(); ++i) {
      ex += w[i] * preds[i][r][0];
      ey += w[i] * preds[i][r][1];
    }
    const double n = std::hypot(ex, ey);
    if (n < 1e-300) continue;
    for (std::size_t i = 0; i < preds.size(); ++i) g[i] += (preds[i][r][0] * ex + preds[i][r][1] * ey) / n;
  }
  for (double& v : g) v /= static_cast<double>(truths.size());
  return g;
}

void check_predictions(const MemberPredictions& preds, std::span<const Point2> truths) {
  if (preds.empty() || truths.empty()) throw MisuseError("weight fitting needs at least one member and one row");
  for (const auto& m : preds) {
    if (m.size() != truths.size()) throw MisuseError("member prediction count does not match truths");
    for (const auto& p : m) {
      if (!std::isfinite(p[0]) || !std::isfinite(p[1])) throw MisuseError("non-finite member prediction");
    }
  }
}

nlohmann::json vec_json(const DetectorVector& v) { return std::vector<double>(v.begin(), v.end()); }

DetectorVector json_vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != kDetectorCount) throw ParseError("normalization vector must have 9 entries");
  DetectorVector out{};
  std::copy(v.begin(), v.end(), out.begin());
  return out;
}

}  // namespace

std::vector<int> kmeans_partition(std::span<const Point2> points, int k, std::uint64_t seed) {
  const std::size_t n = points.size();
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  if (static_cast<std::size_t>(k) > n) {
    throw ConfigError("k-means with k=" + std::to_string(k) + " on " + std::to_string(n) + " points");
  }
  Rng rng(seed);
  std::vector<Point2> centers;
  centers.push_back(points[bounded(rng, n)]);
  std::vector<double> d2(n);
  while (centers.size() < static_cast<std::size_t>(k)) {
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = dist2(points[i], centers[static_cast<std::size_t>(nearest(points[i], centers))]);
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0) {
      const double target = uniform01(rng) * total;
      double acc = 0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target && d2[i] > 0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = static_cast<std::size_t>(bounded(rng, n));
    }
    centers.push_back(points[pick]);
  }

  std::vector<int> labels(n, -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest(points[i], centers);
      if (c != labels[i]) {
        labels[i] = c;
        changed = true;
      }
    }
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    for (int c : labels) ++count[static_cast<std::size_t>(c)];
    for (int c = 0; c < k; ++c) {
      if (count[static_cast<std::size_t>(c)] > 0) continue;
      // re-seed from the point farthest from its own centre, taken from a cluster that can spare it
      std::size_t far = n;
      double far_d = -1;
      for (std::size_t i = 0; i < n; ++i) {
        const auto li = static_cast<std::size_t>(labels[i]);
        if (count[li] < 2) continue;
        const double d = dist2(points[i], centers[li]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far == n) throw RuntimeFailure("k-means could not fill an empty cluster");
      --count[static_cast<std::size_t>(labels[far])];
      labels[far] = c;
      count[static_cast<std::size_t>(c)] = 1;
      centers[static_cast<std::size_t>(c)] = points[far];
      changed = true;
    }
    std::vector<Point2> sum(static_cast<std::size_t>(k), Point2{0, 0});
    for (std::size_t i = 0; i < n; ++i) {
      sum[static_cast<std::size_t>(labels[i])][0] += points[i][0];
      sum[static_cast<std::size_t>(labels[i])][1] += points[i][1];
    }
    for (std::size_t c = 0; c < sum.size(); ++c) {
      centers[c] = {sum[c][0] / static_cast<double>(count[c]), sum[c][1] / static_cast<double>(count[c])};
    }
    if (!changed) break;
  }
  return labels;
}

FoldPlan make_fold_plan(std::span<const Point2> points, int k, std::uint64_t seed) {
  FoldPlan plan;
  plan.k = k;
  plan.labels = kmeans_partition(points, k, seed);
  plan.train.resize(static_cast<std::size_t>(k));
  plan.held_out.resize(static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (int f = 0; f < k; ++f) {
      (plan.labels[i] == f ? plan.held_out : plan.train)[static_cast<std::size_t>(f)].push_back(i);
    }
  }
  for (const auto& h : plan.held_out) {
    if (h.empty()) throw RuntimeFailure("spatial fold without rows");
  }
  return plan;
}

double weighted_objective(const MemberPredictions& preds, std::span<const Point2> truths, std::span<const double> w) {
  double total = 0;
  for (std::size_t r = 0; r < truths.size(); ++r) {
    double x = 0, y = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      x += w[i] * preds[i][r][0];
      y += w[i] * preds[i][r][1];
    }
    total += std::hypot(x - truths[r][0], y - truths[r][1]);
  }
  return total / static_cast<double>(truths.size());
}

std::vector<double> project_simplex(std::span<const double> v) {
  std::vector<double> u(v.begin(), v.end());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0, theta = 0;
  for (std::size_t j = 0; j < u.size(); ++j) {
    cum += u[j];
    const double t = (cum - 1.0) / static_cast<double>(j + 1);
    if (u[j] - t > 0) theta = t;
  }
  std::vector<double> w(v.size());
  double sum = 0;
  for (std::size_t i = 0; i < v.size(); ++i) sum += (w[i] = std::max(v[i] - theta, 0.0));
  for (double& x : w) x /= sum;
  return w;
}

WeightFit fit_fold_weights(const MemberPredictions& preds, std::span<const Point2> truths) {
  check_predictions(preds, truths);
  const std::size_t m = preds.size();
  WeightFit fit;
  std::vector<double> w(m, 1.0 / static_cast<double>(m));
  fit.uniform_objective = weighted_objective(preds, truths, w);
  double f = fit.uniform_objective;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> e(m, 0.0);
    e[i] = 1.0;
    fit.vertex_objectives.push_back(weighted_objective(preds, truths, e));
  }
  const auto best_vertex = std::min_element(fit.vertex_objectives.begin(), fit.vertex_objectives.end());
  if (*best_vertex < f - 1e-15) {
    std::fill(w.begin(), w.end(), 0.0);
    w[static_cast<std::size_t>(best_vertex - fit.vertex_objectives.begin())] = 1.0;
    f = *best_vertex;
  }

  std::vector<double> history{f};
  double step = 1.0;
  int it = 0;
  for (; it < 20000 && m > 1; ++it) {
    const auto g = gradient(preds, truths, w);
    std::vector<double> trial(m);
    for (std::size_t i = 0; i < m; ++i) trial[i] = w[i] - step * g[i];
    trial = project_simplex(trial);
    const double ft = weighted_objective(preds, truths, trial);
    if (ft < f) {
      w = std::move(trial);
      f = ft;
      step *= 1.5;
    } else {
      step *= 0.5;
    }
    history.push_back(f);
    if (history.size() > 50 && history[history.size() - 51] - f < 1e-10) break;
    if (step < 1e-14) break;
  }
  fit.weights = std::move(w);
  fit.objective = f;
  fit.iterations = it;
  return fit;
}

std::vector<double> aggregate_fold_weights(const std::vector<std::vector<double>>& fold_weights,
                                           std::span<const double> fold_mpe_m) {
  if (fold_weights.empty() || fold_weights.size() != fold_mpe_m.size()) {
    throw MisuseError("aggregate_fold_weights needs one MPE per fold");
  }
  std::vector<double> alpha;
  double total = 0;
  for (double mpe : fold_mpe_m) {
    if (!std::isfinite(mpe) || mpe < 0) throw MisuseError("fold MPE must be finite and non-negative");
    alpha.push_back(1.0 / std::max(mpe, 1e-6));
    total += alpha.back();
  }
  std::vector<double> w(fold_weights[0].size(), 0.0);
  for (std::size_t f = 0; f < fold_weights.size(); ++f) {
    if (fold_weights[f].size() != w.size()) throw MisuseError("fold weight vectors differ in length");
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += alpha[f] / total * fold_weights[f][i];
  }
  double sum = 0;
  for (double& x : w) sum += (x = std::max(x, 0.0));
  for (double& x : w) x /= sum;
  return w;
}

std::string composition_tag(std::span<const Architecture> archs) {
  std::string tag;
  for (auto a : archs) {
    if (!tag.empty()) tag += '+';
    tag += to_string(a);
  }
  return tag;
}

std::vector<Architecture> parse_composition(std::string_view tag) {
  std::vector<Architecture> out;
  std::size_t start = 0;
  while (start <= tag.size()) {
    const auto end = std::min(tag.find('+', start), tag.size());
    const auto a = parse_architecture(tag.substr(start, end - start));
    if (std::find(out.begin(), out.end(), a) != out.end()) {
      throw ConfigError("architecture listed twice in '" + std::string(tag) + "'");
    }
    out.push_back(a);
    start = end + 1;
  }
  return out;
}

std::vector<EnsembleMember> train_members(const FingerprintDataset& dataset, std::span<const ModelSpec> specs,
                                          const MemberTrainOptions& options) {
  if (!dataset.norm) throw MisuseError("dataset has no normalization; run the split first");
  const TrainData train_rows = make_train_data(dataset.rows_with(SplitLabel::train), *dataset.norm);
  const TrainData val_rows = make_train_data(dataset.rows_with(SplitLabel::val), *dataset.norm);
  if (train_rows.size() == 0) throw ConfigError("dataset has no training rows");

  std::vector<EnsembleMember> members;
  for (const auto& spec : specs) {
    for (int j = 0; j < kInstancesPerArchitecture; ++j) {
      EnsembleMember m;
      m.architecture = spec.architecture;
      m.seed = mix_seed(options.seed, static_cast<std::uint64_t>(spec.architecture) * 16 + static_cast<std::uint64_t>(j));
      m.model.spec = spec;
      members.push_back(std::move(m));
    }
  }
  parallel_for(members.size(), options.threads, [&](std::size_t i) {
    EnsembleMember& m = members[i];
    TrainConfig cfg = options.config;
    cfg.shuffle_seed = mix_seed(m.seed, 1);
    const auto t0 = std::chrono::steady_clock::now();
    m.model = train(m.model.spec, train_rows, val_rows, cfg, m.seed);
    m.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.model.norm = dataset.norm;
    if (options.on_member) options.on_member(m);
  });
  return members;
}

Point2 clamp_to_room(const Point2& p, const std::array<double, 2>& room) {
  return {std::clamp(p[0], 0.0, room[0]), std::clamp(p[1], 0.0, room[1])};
}

MemberPredictions member_predictions(std::span<const EnsembleMember> members, const Normalization& norm,
                                     std::span<const DetectorVector> drss, const std::array<double, 2>& room) {
  Eigen::MatrixXd x(kDetectorCount, static_cast<Eigen::Index>(drss.size()));
  for (std::size_t r = 0; r < drss.size(); ++r) {
    const auto z = norm.apply(drss[r]);
    for (int j = 0; j < kDetectorCount; ++j) {
      if (!std::isfinite(z[static_cast<std::size_t>(j)])) throw MisuseError("non-finite feature");
      x(j, static_cast<Eigen::Index>(r)) = z[static_cast<std::size_t>(j)];
    }
  }
  MemberPredictions out;
  for (const auto& m : members) {
    const Eigen::MatrixXd y = forward_batch(m.model, x);
    std::vector<Point2> p(drss.size());
    for (std::size_t r = 0; r < drss.size(); ++r) {
      p[r] = clamp_to_room({y(0, static_cast<Eigen::Index>(r)), y(1, static_cast<Eigen::Index>(r))}, room);
    }
    out.push_back(std::move(p));
  }
  return out;
}

void spatial_cv(EnsembleBundle& bundle, const FingerprintDataset& dataset, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("spatial cross-validation needs k >= 2");
  if (bundle.members.empty()) throw MisuseError("bundle has no members");
  std::vector<Point2> pos;
  std::vector<DetectorVector> feats;
  for (const auto& r : dataset.rows) {
    if (r.split != SplitLabel::train && r.split != SplitLabel::val) continue;
    pos.push_back({r.x, r.y});
    feats.push_back(r.drss);
  }
  const FoldPlan plan = make_fold_plan(pos, k, seed);
  const MemberPredictions all = member_predictions(bundle.members, bundle.norm, feats, bundle.room);

  bundle.folds.clear();
  std::vector<std::vector<double>> fold_w;
  std::vector<double> fold_mpe;
  for (int f = 0; f < k; ++f) {
    const auto& rows = plan.held_out[static_cast<std::size_t>(f)];
    MemberPredictions sub(all.size());
    std::vector<Point2> truths;
    for (std::size_t r : rows) {
      truths.push_back(pos[r]);
      for (std::size_t i = 0; i < all.size(); ++i) sub[i].push_back(all[i][r]);
    }
    const WeightFit fit = fit_fold_weights(sub, truths);
    bundle.folds.push_back({rows.size(), fit.objective, fit.weights, fit.uniform_objective, fit.vertex_objectives});
    fold_w.push_back(fit.weights);
    fold_mpe.push_back(fit.objective);
  }
  bundle.weights = aggregate_fold_weights(fold_w, fold_mpe);
  bundle.k = k;
}

Point2 ensemble_predict(const EnsembleBundle& bundle, const DetectorVector& drss) {
  for (double v : drss) {
    if (!std::isfinite(v)) throw MisuseError("non-finite ΔRSS input");
  }
  if (bundle.weights.size() != bundle.members.size()) throw MisuseError("bundle weights do not match members");
  const auto z = bundle.norm.apply(drss);
  Point2 p{0, 0};
  for (std::size_t i = 0; i < bundle.members.size(); ++i) {
    const auto out = forward(bundle.members[i].model, z);
    const Point2 c = clamp_to_room({out[0], out[1]}, bundle.room);
    p[0] += bundle.weights[i] * c[0];
    p[1] += bundle.weights[i] * c[1];
  }
  return clamp_to_room(p, bundle.room);
}

void save_bundle(const std::filesystem::path& dir, EnsembleBundle& bundle) {
  std::filesystem::create_directories(dir);
  nlohmann::json members = nlohmann::json::array();
  for (std::size_t i = 0; i < bundle.members.size(); ++i) {
    auto& m = bundle.members[i];
    m.file = "member_" + std::to_string(i) + "_" + std::string(to_string(m.architecture)) + ".dnn";
    m.model.norm = bundle.norm;
    if (m.model.manifest.empty()) m.model.manifest = bundle.manifest;
    write_weights(dir / m.file, m.model);
    members.push_back({{"architecture", to_string(m.architecture)},
                       {"seed", m.seed},
                       {"file", m.file},
                       {"param_count", param_count(m.model)},
                       {"train_seconds", m.train_seconds}});
  }
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : bundle.folds) {
    folds.push_back({{"held_out_rows", f.held_out_rows},
                     {"mpe_m", f.mpe_m},
                     {"weights", f.weights},
                     {"uniform_objective", f.uniform_objective},
                     {"vertex_objectives", f.vertex_objectives}});
  }
  const nlohmann::json j{{"format", "vlp-ensemble-1"},
                         {"composition", bundle.composition},
                         {"scene_digest", bundle.scene_digest},
                         {"seed", bundle.seed},
                         {"k", bundle.k},
                         {"room", bundle.room},
                         {"norm", {{"mean", vec_json(bundle.norm.mean)}, {"std", vec_json(bundle.norm.std)}}},
                         {"weights", bundle.weights},
                         {"members", members},
                         {"folds", folds},
                         {"train_seconds", bundle.train_seconds},
                         {"fit_seconds", bundle.fit_seconds},
                         {"manifest", bundle.manifest}};
  std::ofstream out(dir / "manifest.json");
  out << j.dump(2) << '\n';
  if (!out) throw RuntimeFailure("cannot write bundle manifest in '" + dir.string() + "'");
}

EnsembleBundle load_bundle(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open bundle manifest '" + path.string() + "'");
  EnsembleBundle b;
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "vlp-ensemble-1") throw ParseError("unsupported bundle format in '" + path.string() + "'");
    b.composition = j.at("composition").get<std::string>();
    b.scene_digest = j.at("scene_digest").get<std::string>();
    b.seed = j.at("seed").get<std::uint64_t>();
    b.k = j.at("k").get<int>();
    b.room = j.at("room").get<std::array<double, 2>>();
    b.norm.mean = json_vec(j.at("norm").at("mean"));
    b.norm.std = json_vec(j.at("norm").at("std"));
    b.weights = j.at("weights").get<std::vector<double>>();
    b.train_seconds = j.value("train_seconds", 0.0);
    b.fit_seconds = j.value("fit_seconds", 0.0);
    b.manifest = j.value("manifest", std::string{});
    for (const auto& m : j.at("members")) {
      EnsembleMember em;
      em.architecture = parse_architecture(m.at("architecture").get<std::string>());
      em.seed = m.at("seed").get<std::uint64_t>();
      em.file = m.at("file").get<std::string>();
      em.train_seconds = m.value("train_seconds", 0.0);
      em.model = read_weights(dir / em.file);
      b.members.push_back(std::move(em));
    }
    for (const auto& f : j.at("folds")) {
      b.folds.push_back({f.at("held_out_rows").get<std::size_t>(), f.at("mpe_m").get<double>(),
                         f.at("weights").get<std::vector<double>>(), f.at("uniform_objective").get<double>(),
                         f.at("vertex_objectives").get<std::vector<double>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed bundle manifest '" + path.string() + "': " + e.what());
  }
  const auto n = b.members.size();
  if (n == 0 || n % kInstancesPerArchitecture != 0 || n > 9) {
    throw ParseError("bundle must hold 3, 6 or 9 members, found " + std::to_string(n));
  }
  if (b.weights.size() != n) throw ParseError("bundle weight count does not match members");
  double sum = 0;
  for (double w : b.weights) {
    if (!(w >= 0)) throw ParseError("negative ensemble weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw ParseError("ensemble weights do not sum to 1");
  return b;
}

}  // namespace vlp
