#include "vlp/cli.hpp"

#include <chrono>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "vlp/channel.hpp"
#include "vlp/ensemble.hpp"
#include "vlp/error.hpp"
#include "vlp/eval.hpp"
#include "vlp/fingerprint.hpp"
#include "vlp/neural.hpp"
#include "vlp/random.hpp"
#include "vlp/scene.hpp"
#include "vlp/service.hpp"

namespace fs = std::filesystem;

namespace vlp {

namespace {

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// seed streams
enum : std::uint64_t { kSplitStream = 101, kMemberStream = 202, kClusterStream = 303, kWalkStream = 404, kPointStream = 505 };

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::optional<double> resolution;
  std::optional<int> bounces;
  std::string out_dir = "out";
  std::vector<std::string> argv;
};

SceneConfig resolve_config(const Globals& g) {
  SceneConfig c = g.config_path.empty() ? SceneConfig{} : SceneConfig::load(g.config_path);
  if (g.seed) c.seed = *g.seed;
  if (g.resolution) c.resolution_m = *g.resolution;
  if (g.bounces) c.reflection_order = *g.bounces;
  c.validate();
  return c;
}

std::string file_digest(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

std::string tree_digest(const fs::path& p) {
  if (!fs::is_directory(p)) return file_digest(p);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(p)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::string all;
  for (const auto& f : files) all += fs::relative(f, p).string() + ":" + file_digest(f) + ";";
  return fnv1a_hex(all);
}

class Manifest {
 public:
  Manifest(const Globals& g, const std::string& subcommand, const SceneConfig& cfg) : dir_(g.out_dir) {
    name_ = "manifest_" + subcommand + ".json";
    j_["subcommand"] = subcommand;
    j_["tool_version"] = kToolVersion;
    j_["argv"] = g.argv;
    j_["config"] = cfg.to_json();
    j_["scene_digest"] = cfg.digest();
    j_["seed"] = cfg.seed;
    j_["threads"] = g.threads;
    j_["inputs"] = nlohmann::json::object();
    j_["outputs"] = nlohmann::json::object();
  }
  const std::string& name() const { return name_; }
  nlohmann::json& operator[](const char* key) { return j_[key]; }
  void input(const std::string& key, const fs::path& p) { j_["inputs"][key] = p.string(); }
  void output(const std::string& key, const fs::path& p) { j_["outputs"][key] = p.string(); }
  void write() const {
    fs::create_directories(dir_);
    std::ofstream out(dir_ / name_);
    out << j_.dump(2) << '\n';
    if (!out) throw RuntimeFailure("cannot write manifest in '" + dir_.string() + "'");
  }

 private:
  fs::path dir_;
  std::string name_;
  nlohmann::json j_;
};

ModelSpec spec_for(const std::string& arch) {
  if (arch == "shallow") return ModelSpec::dense_stack({64, 256});
  return ModelSpec::for_architecture(parse_architecture(arch));
}

fs::path model_file(const fs::path& models, Architecture a, int j) {
  return models / (std::string(to_string(a)) + "_" + std::to_string(j) + ".dnn");
}
fs::path timing_file(const fs::path& models, Architecture a) {
  return models / (std::string(to_string(a)) + "_timing.json");
}

// ---- stages shared by the subcommands and reproduce-paper ----

fs::path stage_baseline(const SceneConfig& cfg, const fs::path& out_dir, const std::string& manifest) {
  const Scene empty = build_scene(cfg);
  GainSet g = rss_vector(empty, cfg.reflection_order, 0.0, 0);
  const fs::path path = out_dir / "baseline.csv";
  fs::create_directories(out_dir);
  write_gain_csv(path, g, cfg.digest(), manifest);
  return path;
}

FingerprintDataset stage_sweep(const SceneConfig& cfg, unsigned threads, std::ostream& err) {
  SweepOptions opt;
  opt.bounces = cfg.reflection_order;
  opt.threads = threads;
  std::mutex mu;
  opt.progress = [&](std::size_t done, std::size_t total) {
    if (done % 200 == 0 || done == total) {
      std::lock_guard lock(mu);
      err << "sweep " << done << "/" << total << "\n";
    }
  };
  return sweep_grid(cfg, opt);
}

SplitResult stage_split(FingerprintDataset& ds, std::uint64_t seed, double wall_threshold, std::ostream& err) {
  SplitResult r = stratified_split(ds, SplitRatios{}, wall_threshold, mix_seed(seed, kSplitStream));
  for (const auto& w : r.warnings) err << "warning: " << w << "\n";
  return r;
}

double stage_train(const FingerprintDataset& ds, const ModelSpec& spec, const TrainConfig& tc, std::uint64_t seed,
                   unsigned threads, const fs::path& models, const std::string& manifest, std::ostream& err) {
  MemberTrainOptions opt;
  opt.config = tc;
  opt.seed = mix_seed(seed, kMemberStream);
  opt.threads = threads == 0 ? resolve_threads(0) : threads;
  std::mutex mu;
  opt.on_member = [&](const EnsembleMember& m) {
    std::lock_guard lock(mu);
    err << "trained " << to_string(m.architecture) << " seed " << m.seed << " in " << std::fixed
        << std::setprecision(1) << m.train_seconds << " s, final train MAE " << std::setprecision(4)
        << m.model.train_mae.back() << " m\n";
    err.unsetf(std::ios::floatfield);
  };
  const auto t0 = Clock::now();
  std::vector<ModelSpec> specs{spec};
  auto members = train_members(ds, specs, opt);
  const double wall = seconds_since(t0);
  fs::create_directories(models);
  nlohmann::json timing{{"wall_seconds", wall}, {"member_seconds", nlohmann::json::array()}};
  for (std::size_t j = 0; j < members.size(); ++j) {
    members[j].model.manifest = manifest;
    write_weights(model_file(models, spec.architecture, static_cast<int>(j)), members[j].model);
    timing["member_seconds"].push_back(members[j].train_seconds);
  }
  std::ofstream(timing_file(models, spec.architecture)) << timing.dump(2) << '\n';
  return wall;
}

EnsembleBundle assemble_bundle(const FingerprintDataset& ds, const std::string& composition, const fs::path& models) {
  if (!ds.norm) throw ConfigError("dataset has no split or normalization; run split first");
  EnsembleBundle b;
  b.composition = composition;
  b.norm = *ds.norm;
  b.scene_digest = ds.scene_digest;
  b.room = ds.room;
  for (Architecture a : parse_composition(composition)) {
    const fs::path tf = timing_file(models, a);
    std::ifstream tin(tf);
    if (!tin) throw ParseError("no trained " + std::string(to_string(a)) + " members in '" + models.string() + "'");
    const auto timing = nlohmann::json::parse(tin);
    b.train_seconds += timing.at("wall_seconds").get<double>();
    for (int j = 0; j < kInstancesPerArchitecture; ++j) {
      EnsembleMember m;
      m.architecture = a;
      m.model = read_weights(model_file(models, a, j));
      m.seed = m.model.init_seed;
      m.train_seconds = timing.at("member_seconds").at(static_cast<std::size_t>(j)).get<double>();
      b.members.push_back(std::move(m));
    }
  }
  return b;
}

void stage_cv(EnsembleBundle& b, const FingerprintDataset& ds, int k, std::uint64_t seed) {
  const auto t0 = Clock::now();
  spatial_cv(b, ds, k, mix_seed(seed, kClusterStream));
  b.fit_seconds = seconds_since(t0);
  b.seed = seed;
}

fs::path bundle_dir(const fs::path& out_dir, const std::string& composition) { return out_dir / ("bundle_" + composition); }

EvalReport stage_evaluate(const EnsembleBundle& b, const EmptyRoomBase& base, const std::string& experiment,
                          std::uint64_t seed, unsigned threads) {
  const auto pos = experiment == "trajectory" ? random_walk(mix_seed(seed, kWalkStream))
                                              : random_points(mix_seed(seed, kPointStream));
  EvalReport r = evaluate_run(b, base, pos, base.scene().config.reflection_order, threads, experiment);
  r.timings.training_s = b.train_seconds;
  r.timings.weight_fit_s = b.fit_seconds;
  return r;
}

fs::path write_report(const fs::path& out_dir, const EvalReport& r) {
  const fs::path p = out_dir / ("report_" + r.tag + "_" + r.experiment + ".json");
  std::ofstream out(p);
  out << report_json(r).dump(2) << '\n';
  if (!out) throw RuntimeFailure("cannot write '" + p.string() + "'");
  return p;
}

std::pair<fs::path, fs::path> export_report(const fs::path& out_dir, const EvalReport& r) {
  const std::string stem = r.tag + "_" + r.experiment;
  const fs::path traj = out_dir / (stem + "_trajectory.csv"), heat = out_dir / (stem + "_heatmap.csv");
  write_trajectory_csv(traj, r);
  write_heatmap_csv(heat, r);
  return {traj, heat};
}

void print_report(std::ostream& out, const EvalReport& r) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%s %s: MPE %.2f cm, P90 %.2f cm, weighted member MPE %.2f cm, convexity %s\n",
                r.tag.c_str(), r.experiment.c_str(), r.mpe_cm, r.p90_cm, r.weighted_member_mpe_cm,
                r.convexity_holds ? "ok" : "VIOLATED");
  out << buf;
}

std::atomic<bool> g_serve_stop{false};
extern "C" void on_serve_signal(int) { g_serve_stop = true; }

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Device-free visible light positioning: channel simulation, fingerprinting, ensembles, service"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  for (int i = 0; i < argc; ++i) g.argv.emplace_back(argv[i]);
  std::uint64_t seed_value = 0;
  double resolution_value = 0;
  int bounces_value = 0;
  app.add_option("--config", g.config_path, "Scene config JSON")->envname("VLP_CONFIG");
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  auto* res_opt = app.add_option("--resolution", resolution_value, "Surface segment size in meters")->check(CLI::PositiveNumber);
  auto* b_opt = app.add_option("--bounces", bounces_value, "Reflection order K")->check(CLI::Range(0, 10));
  app.add_option("--out-dir", g.out_dir, "Output directory");

  auto* validate = app.add_subcommand("scene-validate", "Check the config and print the scene summary");
  auto* baseline = app.add_subcommand("baseline", "Empty-room gains and RSS");
  auto* sweep = app.add_subcommand("sweep", "Occupant sweep over the grid");
  auto* split = app.add_subcommand("split", "Stratified train/val/test split and normalization");
  auto* train_cmd = app.add_subcommand("train", "Train three instances of one architecture");
  auto* cv = app.add_subcommand("cv-weights", "Spatial cross-validated ensemble weights");
  auto* evaluate = app.add_subcommand("evaluate", "Trajectory and random-location experiments");
  auto* export_cmd = app.add_subcommand("export", "Trajectory and heatmap CSVs from reports");
  auto* serve = app.add_subcommand("serve", "Online positioning service");
  auto* repro = app.add_subcommand("reproduce-paper", "Full pipeline for the three ensemble compositions");

  std::string dataset_in, dataset_out, arch = "mlp", composition = "mlp", bundle_path, baseline_path, host = "127.0.0.1";
  std::string compositions = "mlp,mlp+unet,mlp+cnn+unet";
  std::vector<int> k_sweep;
  std::vector<std::string> reports;
  double wall_threshold = 0.5;
  int k = 3, epochs = 500, port = 7878;
  bool trajectory = false, random100 = false;
  std::optional<std::uint64_t> eval_seed;

  split->add_option("--dataset", dataset_in, "Unsplit dataset (default <out>/dataset.csv)");
  split->add_option("--output", dataset_out, "Split dataset (default <out>/dataset_split.csv)");
  split->add_option("--wall-threshold", wall_threshold, "Near-wall distance in meters");
  train_cmd->add_option("--dataset", dataset_in, "Split dataset (default <out>/dataset_split.csv)");
  train_cmd->add_option("--arch", arch, "mlp, cnn, unet or shallow")->check(CLI::IsMember({"mlp", "cnn", "unet", "shallow"}));
  train_cmd->add_option("--epochs", epochs, "Training epochs")->check(CLI::PositiveNumber);
  cv->add_option("--dataset", dataset_in, "Split dataset (default <out>/dataset_split.csv)");
  cv->add_option("--composition", composition, "Architectures joined by '+', e.g. mlp+cnn+unet");
  cv->add_option("-k,--k", k, "Number of spatial folds")->check(CLI::Range(2, 50));
  cv->add_option("--k-sweep", k_sweep, "Also report fold MPE and time for these k values")->delimiter(',');
  evaluate->add_option("--bundle", bundle_path, "Bundle directory")->required();
  evaluate->add_flag("--trajectory", trajectory, "25-step random walk");
  evaluate->add_flag("--random100", random100, "100 random locations");
  evaluate->add_option("--eval-seed", eval_seed, "Seed for the evaluation positions (default: --seed)");
  export_cmd->add_option("--report", reports, "Report JSON files")->required()->check(CLI::ExistingFile);
  serve->add_option("--bundle", bundle_path, "Bundle directory")->required();
  serve->add_option("--baseline", baseline_path, "Baseline gain CSV (enables rss_mw requests)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "TCP port (0 = any free port)")->check(CLI::Range(0, 65535));
  repro->add_option("--epochs", epochs, "Training epochs per member")->check(CLI::PositiveNumber);
  repro->add_option("--compositions", compositions, "Comma-separated compositions");
  repro->add_option("--dataset", dataset_in, "Reuse an existing split dataset instead of sweeping");
  repro->add_option("-k,--k", k, "Number of spatial folds")->check(CLI::Range(2, 50));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << "\n" << app.help();
    return 1;
  }
  if (*seed_opt) g.seed = seed_value;
  if (*res_opt) g.resolution = resolution_value;
  if (*b_opt) g.bounces = bounces_value;
  const fs::path od = g.out_dir;
  const auto default_split = [&] { return dataset_in.empty() ? od / "dataset_split.csv" : fs::path(dataset_in); };

  try {
    const SceneConfig cfg = resolve_config(g);
    fs::create_directories(od);

    if (validate->parsed()) {
      Manifest m(g, "scene-validate", cfg);
      const Scene s = build_scene(cfg);
      out << "scene digest     " << s.digest() << "\n"
          << "static segments  " << s.static_segments.size() << "\n"
          << "lambertian order " << lambertian_order(cfg.half_power_angle_deg) << "\n"
          << "detectors        " << s.detectors.size() << "\n";
      m["static_segments"] = s.static_segments.size();
      m.write();
    } else if (baseline->parsed()) {
      Manifest m(g, "baseline", cfg);
      const auto p = stage_baseline(cfg, od, m.name());
      m.output("baseline", p);
      m.write();
      const auto gf = read_gain_csv(p);
      for (std::size_t i = 0; i < gf.gains.rss_mw.size(); ++i) out << "pd " << i << " rss_mw " << gf.gains.rss_mw[i] << "\n";
    } else if (sweep->parsed()) {
      Manifest m(g, "sweep", cfg);
      const auto t0 = Clock::now();
      FingerprintDataset ds = stage_sweep(cfg, g.threads, err);
      ds.manifest = m.name();
      const fs::path p = od / "dataset.csv";
      write_dataset(p, ds);
      m.output("dataset", p);
      m["seconds"] = seconds_since(t0);
      m.write();
      out << "wrote " << ds.rows.size() << " rows to " << p.string() << "\n";
    } else if (split->parsed()) {
      Manifest m(g, "split", cfg);
      const fs::path in = dataset_in.empty() ? od / "dataset.csv" : fs::path(dataset_in);
      const fs::path dst = dataset_out.empty() ? od / "dataset_split.csv" : fs::path(dataset_out);
      FingerprintDataset ds = read_dataset(in, cfg.digest());
      const auto r = stage_split(ds, cfg.seed, wall_threshold, err);
      ds.manifest = m.name();
      write_dataset(dst, ds);
      m.input("dataset", in);
      m.output("dataset", dst);
      m["near_wall"] = r.near_wall;
      m["interior"] = r.interior;
      m.write();
      out << "train " << ds.rows_with(SplitLabel::train).size() << ", val " << ds.rows_with(SplitLabel::val).size()
          << ", test " << ds.rows_with(SplitLabel::test).size() << "\n";
    } else if (train_cmd->parsed()) {
      Manifest m(g, "train", cfg);
      const fs::path in = default_split();
      const FingerprintDataset ds = read_dataset(in, cfg.digest());
      TrainConfig tc;
      tc.epochs = epochs;
      const double wall = stage_train(ds, spec_for(arch), tc, cfg.seed, g.threads, od / "models", m.name(), err);
      m.input("dataset", in);
      m.output("models", od / "models");
      m["architecture"] = arch;
      m["epochs"] = epochs;
      m["seconds"] = wall;
      m.write();
      out << "trained 3 " << arch << " members in " << wall << " s\n";
    } else if (cv->parsed()) {
      Manifest m(g, "cv-weights", cfg);
      const fs::path in = default_split();
      const FingerprintDataset ds = read_dataset(in, cfg.digest());
      if (!k_sweep.empty()) {
        std::ofstream ks(od / "k_sweep.csv");
        ks << "k,mean_fold_mpe_cm,seconds\n";
        for (int kk : k_sweep) {
          EnsembleBundle b = assemble_bundle(ds, composition, od / "models");
          stage_cv(b, ds, kk, cfg.seed);
          double mean = 0;
          for (const auto& f : b.folds) mean += f.mpe_m;
          mean = 100.0 * mean / static_cast<double>(b.folds.size());
          ks << kk << "," << mean << "," << b.fit_seconds << "\n";
          out << "k=" << kk << " mean fold MPE " << mean << " cm, " << b.fit_seconds << " s\n";
        }
        m.output("k_sweep", od / "k_sweep.csv");
      }
      EnsembleBundle b = assemble_bundle(ds, composition, od / "models");
      stage_cv(b, ds, k, cfg.seed);
      b.manifest = m.name();
      const fs::path dir = bundle_dir(od, composition);
      save_bundle(dir, b);
      m.input("dataset", in);
      m.output("bundle", dir);
      m.write();
      out << "weights";
      for (double w : b.weights) out << " " << w;
      out << "\n";
    } else if (evaluate->parsed()) {
      Manifest m(g, "evaluate", cfg);
      const EnsembleBundle b = load_bundle(bundle_path);
      const EmptyRoomBase base(build_scene(cfg));
      if (!trajectory && !random100) trajectory = random100 = true;
      const std::uint64_t s = eval_seed.value_or(cfg.seed);
      m["eval_seed"] = s;
      m.input("bundle", bundle_path);
      for (const char* exp : {"trajectory", "random100"}) {
        if ((std::string(exp) == "trajectory" && !trajectory) || (std::string(exp) == "random100" && !random100)) continue;
        const EvalReport r = stage_evaluate(b, base, exp, s, g.threads);
        m.output(exp, write_report(od, r));
        print_report(out, r);
      }
      m.write();
    } else if (export_cmd->parsed()) {
      Manifest m(g, "export", cfg);
      for (const auto& rp : reports) {
        std::ifstream in(rp);
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw ParseError("'" + rp + "' is not valid JSON: " + e.what());
        }
        const auto [traj, heat] = export_report(od, report_from_json(j));
        m.input(rp, rp);
        m.output(traj.filename().string(), traj);
        m.output(heat.filename().string(), heat);
        out << "wrote " << traj.string() << " and " << heat.string() << "\n";
      }
      m.write();
    } else if (serve->parsed()) {
      Manifest m(g, "serve", cfg);
      std::optional<fs::path> bp;
      if (!baseline_path.empty()) bp = baseline_path;
      const ServiceState state = load_service_state(bundle_path, bp);
      std::map<std::string, std::string> before;
      before[bundle_path] = tree_digest(bundle_path);
      if (bp) before[baseline_path] = tree_digest(*bp);
      Server server(state, host, static_cast<std::uint16_t>(port));
      g_serve_stop = false;
      auto old_int = std::signal(SIGINT, on_serve_signal);
      auto old_term = std::signal(SIGTERM, on_serve_signal);
      out << "listening on " << host << ":" << server.port() << std::endl;
      server.run(&g_serve_stop);
      std::signal(SIGINT, old_int);
      std::signal(SIGTERM, old_term);
      bool intact = true;
      for (const auto& [path, digest] : before) intact = intact && tree_digest(path) == digest;
      m["artifact_digests"] = before;
      m["artifacts_intact"] = intact;
      m.write();
      out << "stopped; artifacts " << (intact ? "unchanged" : "CHANGED") << std::endl;
      if (!intact) return 3;
    } else if (repro->parsed()) {
      Manifest m(g, "reproduce-paper", cfg);
      const auto total0 = Clock::now();
      m.output("baseline", stage_baseline(cfg, od, m.name()));
      FingerprintDataset ds;
      double dataset_s = 0;
      if (dataset_in.empty()) {
        const auto t0 = Clock::now();
        ds = stage_sweep(cfg, g.threads, err);
        dataset_s = seconds_since(t0);
        ds.manifest = m.name();
        write_dataset(od / "dataset.csv", ds);
        stage_split(ds, cfg.seed, 0.5, err);
        write_dataset(od / "dataset_split.csv", ds);
        m.output("dataset", od / "dataset_split.csv");
      } else {
        ds = read_dataset(dataset_in, cfg.digest());
        if (!ds.norm) throw ConfigError("dataset '" + dataset_in + "' has not been split");
        m.input("dataset", dataset_in);
      }
      TrainConfig tc;
      tc.epochs = epochs;
      std::vector<std::string> comps;
      std::stringstream cs(compositions);
      for (std::string c; std::getline(cs, c, ',');) comps.push_back(c);
      std::vector<Architecture> needed;
      for (const auto& c : comps) {
        for (auto a : parse_composition(c)) {
          if (std::find(needed.begin(), needed.end(), a) == needed.end()) needed.push_back(a);
        }
      }
      for (auto a : needed) {
        err << "training " << to_string(a) << " members (" << epochs << " epochs)\n";
        stage_train(ds, ModelSpec::for_architecture(a), tc, cfg.seed, g.threads, od / "models", m.name(), err);
      }
      const EmptyRoomBase base(build_scene(cfg));
      std::vector<SummaryRow> rows;
      nlohmann::json summary = nlohmann::json::array();
      for (const auto& c : comps) {
        EnsembleBundle b = assemble_bundle(ds, c, od / "models");
        stage_cv(b, ds, k, cfg.seed);
        b.manifest = m.name();
        save_bundle(bundle_dir(od, c), b);
        SummaryRow row{c, b.train_seconds / 60.0, 0, 0, 0, 0};
        for (const char* exp : {"trajectory", "random100"}) {
          EvalReport r = stage_evaluate(b, base, exp, cfg.seed, g.threads);
          r.timings.dataset_s = dataset_s;
          write_report(od, r);
          export_report(od, r);
          print_report(out, r);
          (std::string(exp) == "trajectory" ? row.traj_mpe : row.rand_mpe) = r.mpe_cm;
          (std::string(exp) == "trajectory" ? row.traj_p90 : row.rand_p90) = r.p90_cm;
        }
        rows.push_back(row);
        summary.push_back({{"composition", c}, {"training_min", row.training_min}, {"trajectory_mpe_cm", row.traj_mpe},
                           {"trajectory_p90_cm", row.traj_p90}, {"random100_mpe_cm", row.rand_mpe},
                           {"random100_p90_cm", row.rand_p90}, {"weights", b.weights}});
      }
      const std::string table = summary_table(rows);
      out << "\n" << table;
      std::ofstream(od / "summary.txt") << table << "hardware: " << hardware_descriptor() << "\n";
      std::ofstream(od / "summary.json") << nlohmann::json{{"rows", summary}, {"hardware", hardware_descriptor()},
                                                            {"dataset_seconds", dataset_s},
                                                            {"total_seconds", seconds_since(total0)}}
                                                .dump(2)
                                         << '\n';
      m.output("summary", od / "summary.txt");
      m.write();
    }
    return 0;
  } catch (const RuntimeFailure& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace vlp
