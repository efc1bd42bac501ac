#pragma once

#include "sbo/oracle.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace sbo {

/// Owning TCP socket exchanging newline-terminated frames.
class LineSocket {
 public:
  LineSocket() = default;
  explicit LineSocket(int fd);
  ~LineSocket();
  LineSocket(LineSocket&& other) noexcept;
  LineSocket& operator=(LineSocket&& other) noexcept;
  LineSocket(const LineSocket&) = delete;
  LineSocket& operator=(const LineSocket&) = delete;

  static LineSocket connect(const std::string& host, std::uint16_t port,
                            std::chrono::milliseconds timeout);

  /// Sends `line` followed by '\n'. TransportError on failure.
  void send_line(const std::string& line);
  /// Reads up to the next '\n' (excluded). TransportError on timeout or EOF.
  std::string read_line(std::chrono::milliseconds timeout);
  /// As read_line, but returns nullopt on timeout.
  std::optional<std::string> try_read_line(std::chrono::milliseconds timeout);
  [[nodiscard]] bool valid() const { return fd_ >= 0; }
  void close();

 private:
  int fd_ = -1;
  std::string buffer_;
};

struct RemoteAddress {
  std::string host;
  std::uint16_t port = 0;
};

/// Parses "host:port" (optionally prefixed with "tcp:").
RemoteAddress parse_address(const std::string& address);

/// Client side of the newline-delimited JSON oracle protocol.
class RemoteClassifier final : public Classifier {
 public:
  static constexpr std::chrono::milliseconds kDefaultTimeout{10000};

  RemoteClassifier(const RemoteAddress& address,
                   std::chrono::milliseconds timeout = kDefaultTimeout);

  [[nodiscard]] Shape input_shape() const override { return shape_; }
  [[nodiscard]] int num_classes() const override { return classes_; }
  [[nodiscard]] bool supports_soft() const override { return soft_; }
  [[nodiscard]] bool supports_hard() const { return hard_; }
  Label predict(const ImageTensor& image) override;
  Vector logits(const ImageTensor& image) override;

 private:
  std::string request(const char* mode, const ImageTensor& image, std::int64_t& id);

  LineSocket socket_;
  std::chrono::milliseconds timeout_;
  Shape shape_;
  int classes_ = 0;
  bool hard_ = false;
  bool soft_ = false;
  std::int64_t next_id_ = 1;
  std::mutex mutex_;
};

/// Connects and performs the handshake.
std::unique_ptr<RemoteClassifier> remote_oracle_connect(
    const std::string& address,
    std::chrono::milliseconds timeout = RemoteClassifier::kDefaultTimeout);

/// Hosts a classifier behind the wire protocol, one thread per connection.
/// Model access is serialized.
class OracleServer {
 public:
  explicit OracleServer(std::unique_ptr<Classifier> model, std::string host = "127.0.0.1",
                        std::uint16_t port = 0);
  ~OracleServer();
  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  /// Binds and starts accepting in a background thread.
  void start();
  /// Blocks until stop() is called from another thread.
  void wait();
  void stop();
  [[nodiscard]] std::uint16_t port() const { return port_; }
  /// Number of query frames answered.
  [[nodiscard]] std::int64_t queries_served() const { return served_.load(); }

  /// Computes the reply for one frame; exposed for tests.
  std::string handle_frame(const std::string& frame, bool& handshake_done);

 private:
  void accept_loop();
  void serve_connection(int fd);

  std::unique_ptr<Classifier> model_;
  std::mutex model_mutex_;
  std::string host_;
  std::uint16_t port_;
  int listen_fd_ = -1;
  std::atomic<bool> running_{false};
  std::atomic<std::int64_t> served_{0};
  std::thread acceptor_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

}  // namespace sbo
