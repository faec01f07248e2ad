#include "vlp/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "vlp/error.hpp"
#include "vlp/random.hpp"

namespace vlp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool inside(const Point2& p, double margin, const std::array<double, 2>& room) {
  return p[0] >= margin && p[1] >= margin && p[0] <= room[0] - margin && p[1] <= room[1] - margin;
}

}  // namespace

double mpe(std::span<const double> errors) {
  if (errors.empty()) throw MisuseError("mpe of an empty error list");
  double s = 0;
  for (double e : errors) s += e;
  return s / static_cast<double>(errors.size());
}

double p90(std::span<const double> errors) {
  if (errors.empty()) throw MisuseError("p90 of an empty error list");
  std::vector<double> v(errors.begin(), errors.end());
  std::sort(v.begin(), v.end());
  const double r = 1.0 + 0.9 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(r)), hi = static_cast<std::size_t>(std::ceil(r));
  return v[lo - 1] + (r - static_cast<double>(lo)) * (v[hi - 1] - v[lo - 1]);
}

std::vector<Point2> random_walk(std::uint64_t seed, int steps, double step_len, double margin,
                                std::array<double, 2> room) {
  if (steps < 1) throw ConfigError("random walk needs at least one step");
  if (!(step_len > 0) || step_len >= std::min(room[0], room[1]) - 2 * margin) {
    throw ConfigError("step length must be positive and shorter than the room span");
  }
  Rng rng(seed);
  std::vector<Point2> walk{{uniform(rng, 0.5, room[0] - 0.5), uniform(rng, 0.5, room[1] - 0.5)}};
  while (static_cast<int>(walk.size()) < steps) {
    const Point2 prev = walk.back();
    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double h = uniform(rng, 0.0, 2 * std::numbers::pi);
      const Point2 next{prev[0] + step_len * std::cos(h), prev[1] + step_len * std::sin(h)};
      if (inside(next, margin, room)) {
        walk.push_back(next);
        placed = true;
      }
    }
    if (!placed) throw RuntimeFailure("random walk could not find an admissible heading");
  }
  return walk;
}

std::vector<Point2> random_points(std::uint64_t seed, int n, double margin, std::array<double, 2> room) {
  if (n < 1) throw ConfigError("need at least one random point");
  Rng rng(seed);
  std::vector<Point2> pts;
  for (int i = 0; i < n; ++i) {
    const double x = uniform(rng, margin, room[0] - margin);
    pts.push_back({x, uniform(rng, margin, room[1] - margin)});
  }
  return pts;
}

std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      cpu = line.substr(line.find(':') + 2);
      break;
    }
  }
  return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
}

EvalReport evaluate_run(const EnsembleBundle& bundle, const EmptyRoomBase& base, std::span<const Point2> positions,
                        int bounces, unsigned threads, const std::string& experiment) {
  if (!bundle.scene_digest.empty() && bundle.scene_digest != base.digest()) {
    throw InvalidationError("bundle was trained for scene " + bundle.scene_digest + " but the baseline is " +
                            base.digest());
  }
  EvalReport rep;
  rep.tag = bundle.composition;
  rep.experiment = experiment;
  rep.scene_digest = base.digest();
  rep.hardware = hardware_descriptor();

  auto t0 = Clock::now();
  const FingerprintDataset sim = sweep_positions(base, positions, bounces, threads);
  rep.timings.simulation_s = seconds_since(t0);
  rep.max_body_clamp_m = sim.max_body_clamp_m;

  std::vector<DetectorVector> feats;
  for (const auto& r : sim.rows) feats.push_back(r.drss);
  const MemberPredictions members = member_predictions(bundle.members, bundle.norm, feats, bundle.room);

  std::vector<double> errs;
  double infer_total = 0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    EvalPoint p;
    p.truth = positions[i];
    t0 = Clock::now();
    p.prediction = ensemble_predict(bundle, feats[i]);
    p.infer_ms = seconds_since(t0) * 1e3;
    infer_total += p.infer_ms;
    p.error_cm = 100.0 * std::hypot(p.prediction[0] - p.truth[0], p.prediction[1] - p.truth[1]);
    for (const auto& m : members) {
      p.member_error_cm.push_back(100.0 * std::hypot(m[i][0] - p.truth[0], m[i][1] - p.truth[1]));
    }
    errs.push_back(p.error_cm);
    rep.points.push_back(std::move(p));
  }
  rep.mpe_cm = mpe(errs);
  rep.p90_cm = p90(errs);
  rep.timings.inference_ms_mean = infer_total / static_cast<double>(positions.size());
  rep.member_mpe_cm.assign(members.size(), 0.0);
  for (std::size_t m = 0; m < members.size(); ++m) {
    std::vector<double> e;
    for (const auto& p : rep.points) e.push_back(p.member_error_cm[m]);
    rep.member_mpe_cm[m] = mpe(e);
    rep.weighted_member_mpe_cm += bundle.weights[m] * rep.member_mpe_cm[m];
  }
  // exact up to the rounding of the two sums
  rep.convexity_holds = rep.mpe_cm <= rep.weighted_member_mpe_cm * (1 + 1e-12) + 1e-12;
  return rep;
}

void write_trajectory_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  out << "step,x,y,x_hat,y_hat,pe_cm\n";
  char buf[200];
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    const auto& p = report.points[i];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, p.truth[0], p.truth[1], p.prediction[0],
                  p.prediction[1], p.error_cm);
    out << buf;
  }
}

void write_heatmap_csv(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw RuntimeFailure("cannot write '" + path.string() + "'");
  out << "x,y,pe_cm\n";
  char buf[120];
  for (const auto& p : report.points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.truth[0], p.truth[1], p.error_cm);
    out << buf;
  }
}

std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::getline(in, line);
  for (int n = 2; std::getline(in, line); ++n) {
    std::vector<double> row;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(n) + ": bad number '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.points) {
    pts.push_back({{"x", p.truth[0]}, {"y", p.truth[1]}, {"x_hat", p.prediction[0]}, {"y_hat", p.prediction[1]},
                   {"pe_cm", p.error_cm}, {"infer_ms", p.infer_ms}, {"member_pe_cm", p.member_error_cm}});
  }
  return {{"composition", r.tag},
          {"experiment", r.experiment},
          {"mpe_cm", r.mpe_cm},
          {"p90_cm", r.p90_cm},
          {"member_mpe_cm", r.member_mpe_cm},
          {"weighted_member_mpe_cm", r.weighted_member_mpe_cm},
          {"convexity_holds", r.convexity_holds},
          {"max_body_clamp_m", r.max_body_clamp_m},
          {"scene_digest", r.scene_digest},
          {"hardware", r.hardware},
          {"timings",
           {{"dataset_s", r.timings.dataset_s},
            {"training_s", r.timings.training_s},
            {"weight_fit_s", r.timings.weight_fit_s},
            {"simulation_s", r.timings.simulation_s},
            {"inference_ms_mean", r.timings.inference_ms_mean}}},
          {"points", pts}};
}

EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.tag = j.at("composition").get<std::string>();
    r.experiment = j.at("experiment").get<std::string>();
    r.mpe_cm = j.at("mpe_cm").get<double>();
    r.p90_cm = j.at("p90_cm").get<double>();
    r.member_mpe_cm = j.at("member_mpe_cm").get<std::vector<double>>();
    r.weighted_member_mpe_cm = j.at("weighted_member_mpe_cm").get<double>();
    r.convexity_holds = j.at("convexity_holds").get<bool>();
    r.max_body_clamp_m = j.at("max_body_clamp_m").get<double>();
    r.scene_digest = j.at("scene_digest").get<std::string>();
    r.hardware = j.at("hardware").get<std::string>();
    const auto& t = j.at("timings");
    r.timings = {t.at("dataset_s").get<double>(), t.at("training_s").get<double>(), t.at("weight_fit_s").get<double>(),
                 t.at("simulation_s").get<double>(), t.at("inference_ms_mean").get<double>()};
    for (const auto& p : j.at("points")) {
      EvalPoint e;
      e.truth = {p.at("x").get<double>(), p.at("y").get<double>()};
      e.prediction = {p.at("x_hat").get<double>(), p.at("y_hat").get<double>()};
      e.error_cm = p.at("pe_cm").get<double>();
      e.infer_ms = p.at("infer_ms").get<double>();
      e.member_error_cm = p.at("member_pe_cm").get<std::vector<double>>();
      r.points.push_back(std::move(e));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed evaluation report: ") + e.what());
  }
}

std::string summary_table(std::span<const SummaryRow> rows) {
  std::string out =
      "composition          train(min)  traj MPE(cm)  traj P90(cm)  rand MPE(cm)  rand P90(cm)\n";
  char buf[200];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-20s %10.2f %13.2f %13.2f %13.2f %13.2f\n", r.composition.c_str(),
                  r.training_min, r.traj_mpe, r.traj_p90, r.rand_mpe, r.rand_p90);
    out += buf;
  }
  return out;
}

}  // namespace vlp
