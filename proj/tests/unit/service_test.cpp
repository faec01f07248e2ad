#include <chrono>
#include <filesystem>
#include <thread>

#include <gtest/gtest.h>

#include "../support/line_client.hpp"
#include "vlp/channel.hpp"
#include "vlp/error.hpp"
#include "vlp/service.hpp"

using namespace vlp;
using testing_support::LineClient;

namespace {

// Three linear members: output = bias + W * z.
ServiceState make_state() {
  ServiceState s;
  auto& b = s.bundle;
  b.composition = "mlp";
  b.scene_digest = "scene-x";
  b.norm.std.fill(1e-3);
  for (int i = 0; i < 3; ++i) {
    EnsembleMember m;
    m.model = build_model(ModelSpec::dense_stack({}), static_cast<std::uint64_t>(i));
    m.model.weight[0] *= 0.1;
    m.model.bias[0] << 2.0 + 0.1 * i, 2.5;
    b.members.push_back(m);
  }
  b.weights = {0.5, 0.25, 0.25};
  DetectorVector base;
  base.fill(3e-3);
  s.baseline_rss_mw = base;
  return s;
}

const char* kNine = "[0,0,0,0,0,0,0,0,0]";

}  // namespace

TEST(Handle, RssEqualToBaselineGivesZeroFeatureOutput) {
  const auto s = make_state();
  const std::string req = R"({"id":"a","rss_mw":[0.003,0.003,0.003,0.003,0.003,0.003,0.003,0.003,0.003]})";
  const auto r1 = nlohmann::json::parse(handle_request_line(s, req));
  const auto r2 = nlohmann::json::parse(handle_request_line(s, std::string(R"({"id":"a","drss_mw":)") + kNine + "}"));
  EXPECT_EQ(r1["id"], "a");
  EXPECT_EQ(r1["x_m"], r2["x_m"]);
  EXPECT_EQ(r1["y_m"], r2["y_m"]);
  DetectorVector zero{};
  const auto p = ensemble_predict(s.bundle, zero);
  EXPECT_EQ(r1["x_m"].get<double>(), p[0]);
  EXPECT_TRUE(r1.contains("latency_ms"));
}

TEST(Handle, FieldOrderMatchesWireFormat) {
  const auto s = make_state();
  const auto line = handle_request_line(s, std::string(R"({"id":"q","drss_mw":)") + kNine + "}");
  EXPECT_EQ(line.rfind(R"({"id":"q","x_m":)", 0), 0u);
  EXPECT_LT(line.find("\"y_m\""), line.find("\"latency_ms\""));
}

TEST(Handle, ErrorCodes) {
  auto s = make_state();
  const auto code = [&](const std::string& line) {
    const auto j = nlohmann::json::parse(handle_request_line(s, line));
    return j.contains("error") ? j["error"]["code"].get<std::string>() : std::string("OK");
  };
  EXPECT_EQ(code(R"({"id":"1","drss_mw":[0,0,0,0,0,0,0,0]})"), "BAD_ARITY");
  EXPECT_EQ(code(R"({"id":"1","drss_mw":[0,0,0,0,0,0,0,0,"x"]})"), "BAD_VALUE");
  EXPECT_EQ(code(R"({"id":"1","drss_mw":[0,0,0,0,0,0,0,0,0],"extra":1})"), "BAD_VALUE");
  EXPECT_EQ(code(R"({"id":"1","drss_mw":[0,0,0,0,0,0,0,0,0],"rss_mw":[0,0,0,0,0,0,0,0,0]})"), "BAD_VALUE");
  EXPECT_EQ(code(R"({"drss_mw":[0,0,0,0,0,0,0,0,0]})"), "BAD_VALUE");
  EXPECT_EQ(code("{not json"), "PARSE");
  EXPECT_EQ(code("[1,2]"), "PARSE");
  EXPECT_EQ(code(R"({"id":"1","drss_mw":[0,0,0,0,0,0,0,0,1e999]})"), "PARSE");
  EXPECT_EQ(nlohmann::json::parse(handle_request_line(s, R"({"id":"z","drss_mw":[1]})"))["id"], "z");
  s.baseline_rss_mw.reset();
  EXPECT_EQ(code(R"({"id":"1","rss_mw":[0,0,0,0,0,0,0,0,0]})"), "NO_BASELINE");
  EXPECT_EQ(code(R"({"id":"1","drss_mw":[0,0,0,0,0,0,0,0,0]})"), "OK");
}

TEST(Server, OrderedStreamsConcurrentConnectionsAndShutdown) {
  const auto s = make_state();
  Server server(s, "127.0.0.1", 0);
  std::thread loop([&] { server.run(); });
  {
    LineClient a(server.port()), b(server.port());
    for (int i = 0; i < 100; ++i) a.send(R"({"id":")" + std::to_string(i) + R"(","drss_mw":)" + kNine + "}\n");
    b.send("garbage\n");
    EXPECT_EQ(nlohmann::json::parse(b.read_line())["error"]["code"], "PARSE");
    for (int i = 0; i < 100; ++i) EXPECT_EQ(nlohmann::json::parse(a.read_line())["id"], std::to_string(i));
    // connection still usable after a parse error
    EXPECT_EQ(nlohmann::json::parse(b.request(std::string(R"({"id":"b","drss_mw":)") + kNine + "}"))["id"], "b");

    const auto t0 = std::chrono::steady_clock::now();
    a.request(std::string(R"({"id":"t","drss_mw":)") + kNine + "}");
    const std::chrono::duration<double, std::milli> took = std::chrono::steady_clock::now() - t0;
    EXPECT_LT(took.count(), 50.0);

    // in-flight lines are answered across a stop
    a.send(std::string(R"({"id":"last","drss_mw":)") + kNine + "}\n");
    server.stop();
    EXPECT_EQ(nlohmann::json::parse(a.read_line())["id"], "last");
  }
  loop.join();
}

TEST(Server, DigestMismatchRefusesToStart) {
  auto s = make_state();
  const auto dir = std::filesystem::temp_directory_path() / "vlp_service_bundle";
  std::filesystem::remove_all(dir);
  save_bundle(dir, s.bundle);
  GainSet g;
  g.los.fill(0);
  g.gains.fill(0);
  g.rss_mw = *s.baseline_rss_mw;
  write_gain_csv(dir / "baseline.csv", g, "scene-x");
  const auto ok = load_service_state(dir, dir / "baseline.csv");
  EXPECT_EQ(*ok.baseline_rss_mw, *s.baseline_rss_mw);
  write_gain_csv(dir / "other.csv", g, "scene-y");
  EXPECT_THROW(load_service_state(dir, dir / "other.csv"), InvalidationError);
  EXPECT_THROW(Server(s, "127.0.0.1.5", 0), ConfigError);
  std::filesystem::remove_all(dir);
}
