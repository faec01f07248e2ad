#include "vlp/service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>

#include "vlp/channel.hpp"
#include "vlp/error.hpp"

namespace vlp {

namespace {

constexpr std::size_t kMaxLine = 1 << 16;

std::string error_line(const std::string& id, const char* code, const std::string& message) {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["error"] = {{"code", code}, {"message", message}};
  return j.dump();
}

bool send_all(int fd, const std::string& data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

}  // namespace

ServiceState load_service_state(const std::filesystem::path& bundle_dir,
                                const std::optional<std::filesystem::path>& baseline_path) {
  ServiceState s;
  s.bundle = load_bundle(bundle_dir);
  if (baseline_path) {
    const GainFile g = read_gain_csv(*baseline_path);
    if (g.gains.rss_mw.size() != kDetectorCount) throw ParseError("baseline must hold 9 detectors");
    if (g.scene_digest != s.bundle.scene_digest) {
      throw InvalidationError("baseline scene " + g.scene_digest + " does not match bundle scene " +
                              s.bundle.scene_digest);
    }
    DetectorVector b{};
    std::copy(g.gains.rss_mw.begin(), g.gains.rss_mw.end(), b.begin());
    s.baseline_rss_mw = b;
    s.baseline_digest = g.scene_digest;
  }
  return s;
}

std::string handle_request_line(const ServiceState& state, std::string_view line) {
  const auto t0 = std::chrono::steady_clock::now();
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    return error_line("", "PARSE", std::string("request is not valid JSON: ") + e.what());
  }
  if (!req.is_object()) return error_line("", "PARSE", "request must be a JSON object");
  std::string id;
  if (req.contains("id")) {
    if (!req["id"].is_string()) return error_line("", "BAD_VALUE", "id must be a string");
    id = req["id"].get<std::string>();
  } else {
    return error_line("", "BAD_VALUE", "missing id");
  }
  for (const auto& [key, _] : req.items()) {
    if (key != "id" && key != "rss_mw" && key != "drss_mw") return error_line(id, "BAD_VALUE", "unknown field '" + key + "'");
  }
  const bool has_rss = req.contains("rss_mw"), has_drss = req.contains("drss_mw");
  if (has_rss == has_drss) return error_line(id, "BAD_VALUE", "exactly one of rss_mw or drss_mw is required");
  const auto& arr = has_rss ? req["rss_mw"] : req["drss_mw"];
  if (!arr.is_array()) return error_line(id, "BAD_VALUE", "feature vector must be an array");
  if (arr.size() != kDetectorCount) {
    return error_line(id, "BAD_ARITY", "expected 9 values, got " + std::to_string(arr.size()));
  }
  DetectorVector v{};
  for (std::size_t i = 0; i < kDetectorCount; ++i) {
    if (!arr[i].is_number()) return error_line(id, "BAD_VALUE", "element " + std::to_string(i) + " is not a number");
    v[i] = arr[i].get<double>();
    if (!std::isfinite(v[i])) return error_line(id, "BAD_VALUE", "element " + std::to_string(i) + " is not finite");
  }
  if (has_rss) {
    if (!state.baseline_rss_mw) return error_line(id, "NO_BASELINE", "rss_mw needs a loaded baseline");
    v = delta_rss(v, *state.baseline_rss_mw);
  }
  Point2 p;
  try {
    p = ensemble_predict(state.bundle, v);
  } catch (const Error& e) {
    return error_line(id, "BAD_VALUE", e.what());
  }
  nlohmann::ordered_json out;
  out["id"] = id;
  out["x_m"] = p[0];
  out["y_m"] = p[1];
  out["latency_ms"] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out.dump();
}

Server::Server(const ServiceState& state, const std::string& host, std::uint16_t port) : state_(state) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw RuntimeFailure(std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw ConfigError("bad bind address '" + host + "'");
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw RuntimeFailure("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Server::~Server() {
  stop_ = true;
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void Server::run(const std::atomic<bool>* external_stop) {
  const auto stopping = [&] { return stop_.load() || (external_stop && external_stop->load()); };
  while (!stopping()) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    const int r = ::poll(&pfd, 1, 50);
    if (r <= 0 || !(pfd.revents & POLLIN)) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(mu_);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
  stop_ = true;
  std::lock_guard lock(mu_);
  for (auto& t : workers_) t.join();
  workers_.clear();
}

void Server::serve_connection(int fd) {
  std::string buf;
  char chunk[4096];
  bool open = true;
  while (open) {
    pollfd pfd{fd, POLLIN, 0};
    const int r = ::poll(&pfd, 1, 50);
    if (r < 0 && errno != EINTR) break;
    if (r > 0) {
      const ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) open = false;
      else buf.append(chunk, static_cast<std::size_t>(n));
    }
    std::size_t nl;
    while ((nl = buf.find('\n')) != std::string::npos) {
      std::string line = buf.substr(0, nl);
      buf.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      if (!send_all(fd, handle_request_line(state_, line) + "\n")) {
        open = false;
        break;
      }
    }
    if (buf.size() > kMaxLine) {
      send_all(fd, error_line("", "PARSE", "request line too long") + "\n");
      buf.clear();
    }
    // on stop, keep answering until the connection has been idle for one poll interval
    if (stop_ && r == 0) break;
  }
  ::close(fd);
}

}  // namespace vlp
