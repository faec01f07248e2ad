#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "vlp/ensemble.hpp"

namespace vlp {

struct ServiceState {
  EnsembleBundle bundle;
  std::optional<DetectorVector> baseline_rss_mw;
  std::string baseline_digest;
};

/// Loads the bundle and (optionally) a baseline gain file; throws InvalidationError when the two
/// were produced for different scenes.
ServiceState load_service_state(const std::filesystem::path& bundle_dir,
                                const std::optional<std::filesystem::path>& baseline_path);

/// One request line in, one response line out (without the trailing newline).
std::string handle_request_line(const ServiceState& state, std::string_view line);

/// Newline-delimited JSON over TCP, one thread per connection.
class Server {
 public:
  /// Binds and listens; port 0 picks a free port. Throws RuntimeFailure on bind errors.
  Server(const ServiceState& state, const std::string& host, std::uint16_t port);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  std::uint16_t port() const { return port_; }
  /// Accepts until stop() is called or `external_stop` becomes true; then lets every connection
  /// answer the lines it already received and returns.
  void run(const std::atomic<bool>* external_stop = nullptr);
  void stop() { stop_ = true; }

 private:
  void serve_connection(int fd);

  const ServiceState& state_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stop_{false};
  std::mutex mu_;
  std::vector<std::thread> workers_;
};

}  // namespace vlp
