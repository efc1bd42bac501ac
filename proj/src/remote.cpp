#include "sbo/remote.hpp"

#include "sbo/error.hpp"

#include <json.hpp>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace sbo {
namespace {

using json = nlohmann::json;

constexpr std::size_t kMaxFrame = 64u << 20;

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

json image_json(const ImageTensor& image) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < image.data.size(); ++i) arr.push_back(image.data[i]);
  return arr;
}

json parse_frame(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed frame: ") + e.what());
  }
}

}  // namespace

LineSocket::LineSocket(int fd) : fd_(fd) {}

LineSocket::~LineSocket() { close(); }

LineSocket::LineSocket(LineSocket&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), buffer_(std::move(other.buffer_)) {}

LineSocket& LineSocket::operator=(LineSocket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    buffer_ = std::move(other.buffer_);
  }
  return *this;
}

void LineSocket::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
  buffer_.clear();
}

LineSocket LineSocket::connect(const std::string& host, std::uint16_t port,
                               std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_s = std::to_string(port);
  if (const int rc = ::getaddrinfo(host.c_str(), port_s.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  std::string last_error = "no addresses";
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) {
      last_error = errno_text("socket");
      continue;
    }
    LineSocket sock(fd);
    const int flags = ::fcntl(fd, F_GETFL, 0);
    ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
    int rc = ::connect(fd, ai->ai_addr, ai->ai_addrlen);
    if (rc < 0 && errno == EINPROGRESS) {
      pollfd p{fd, POLLOUT, 0};
      rc = ::poll(&p, 1, static_cast<int>(timeout.count()));
      if (rc == 0) {
        last_error = "connect timed out";
        continue;
      }
      int err = 0;
      socklen_t len = sizeof(err);
      ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
      if (rc < 0 || err != 0) {
        last_error = std::string("connect: ") + std::strerror(err != 0 ? err : errno);
        continue;
      }
    } else if (rc < 0) {
      last_error = errno_text("connect");
      continue;
    }
    ::fcntl(fd, F_SETFL, flags);
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    ::freeaddrinfo(res);
    return sock;
  }
  ::freeaddrinfo(res);
  throw TransportError("cannot connect to " + host + ":" + port_s + " (" + last_error + ")");
}

void LineSocket::send_line(const std::string& line) {
  if (fd_ < 0) throw TransportError("send on closed socket");
  std::string frame = line;
  frame.push_back('\n');
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<std::string> LineSocket::try_read_line(std::chrono::milliseconds timeout) {
  if (fd_ < 0) throw TransportError("read on closed socket");
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    if (const auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return line;
    }
    if (buffer_.size() > kMaxFrame) throw ProtocolError("frame exceeds maximum length");
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    pollfd p{fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw TransportError(errno_text("poll"));
    }
    if (rc == 0) return std::nullopt;
    char buf[65536];
    const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
    if (n == 0) throw TransportError("connection closed by peer");
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError(errno_text("recv"));
    }
    buffer_.append(buf, static_cast<std::size_t>(n));
  }
}

std::string LineSocket::read_line(std::chrono::milliseconds timeout) {
  auto line = try_read_line(timeout);
  if (!line) throw TransportError("timed out waiting for reply");
  return *line;
}

RemoteAddress parse_address(const std::string& address) {
  std::string a = address;
  if (a.rfind("tcp:", 0) == 0) a = a.substr(4);
  const auto colon = a.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == a.size()) {
    throw InvalidArgument("address must be host:port, got '" + address + "'");
  }
  int port = 0;
  try {
    port = std::stoi(a.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidArgument("bad port in address '" + address + "'");
  }
  if (port < 1 || port > 65535) throw InvalidArgument("port out of range in '" + address + "'");
  return {a.substr(0, colon), static_cast<std::uint16_t>(port)};
}

RemoteClassifier::RemoteClassifier(const RemoteAddress& address, std::chrono::milliseconds timeout)
    : socket_(LineSocket::connect(address.host, address.port, timeout)), timeout_(timeout) {
  socket_.send_line(json{{"hello", 1}}.dump());
  const json reply = parse_frame(socket_.read_line(timeout_));
  if (!reply.is_object() || reply.contains("error")) {
    throw ProtocolError("handshake rejected: " + reply.dump());
  }
  try {
    for (const auto& m : reply.at("modes")) {
      const auto mode = m.get<std::string>();
      if (mode == "hard") hard_ = true;
      else if (mode == "soft") soft_ = true;
    }
    classes_ = reply.at("classes").get<int>();
    const auto& shp = reply.at("shape");
    if (!shp.is_array() || shp.size() != 3) throw ProtocolError("handshake shape must be [C,H,W]");
    shape_ = {shp[0].get<int>(), shp[1].get<int>(), shp[2].get<int>()};
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed handshake: ") + e.what());
  }
  if (!hard_) throw ProtocolError("server does not advertise hard-label mode");
  if (classes_ < 2 || shape_.channels < 1 || shape_.height < 1 || shape_.width < 1) {
    throw ProtocolError("handshake advertises an invalid model");
  }
}

std::string RemoteClassifier::request(const char* mode, const ImageTensor& image, std::int64_t& id) {
  if (!(image.shape == shape_)) throw InvalidArgument("remote oracle: image shape mismatch");
  id = next_id_++;
  const json req{{"id", id}, {"mode", mode}, {"image", image_json(image)}};
  socket_.send_line(req.dump());
  return socket_.read_line(timeout_);
}

namespace {

json checked_reply(const std::string& line, std::int64_t id) {
  const json reply = parse_frame(line);
  if (!reply.is_object()) throw ProtocolError("reply is not an object");
  if (!reply.contains("id") || !reply["id"].is_number_integer()) {
    throw ProtocolError("reply without integer id" +
                        (reply.contains("error") ? ": " + reply["error"].dump() : std::string()));
  }
  if (reply["id"].get<std::int64_t>() != id) {
    throw ProtocolError("reply id " + reply["id"].dump() + " does not match request id " +
                        std::to_string(id));
  }
  if (reply.contains("error")) throw ProtocolError("server error: " + reply["error"].dump());
  return reply;
}

}  // namespace

Label RemoteClassifier::predict(const ImageTensor& image) {
  std::lock_guard lock(mutex_);
  std::int64_t id = 0;
  const std::string line = request("hard", image, id);
  const json reply = checked_reply(line, id);
  if (!reply.contains("label") || !reply["label"].is_number_integer()) {
    throw ProtocolError("hard reply without integer label");
  }
  const auto label = reply["label"].get<std::int64_t>();
  if (label < 0 || label >= classes_) throw ProtocolError("label out of range");
  return static_cast<Label>(label);
}

Vector RemoteClassifier::logits(const ImageTensor& image) {
  if (!soft_) throw CapabilityError("remote oracle does not advertise soft-label mode");
  std::lock_guard lock(mutex_);
  std::int64_t id = 0;
  const std::string line = request("soft", image, id);
  const json reply = checked_reply(line, id);
  if (!reply.contains("logits") || !reply["logits"].is_array()) {
    throw ProtocolError("soft reply without logits array");
  }
  const auto& arr = reply["logits"];
  if (static_cast<int>(arr.size()) != classes_) throw ProtocolError("logit count mismatch");
  Vector out(classes_);
  for (int k = 0; k < classes_; ++k) {
    if (!arr[k].is_number()) throw ProtocolError("non-numeric logit");
    out[k] = arr[k].get<double>();
  }
  return out;
}

std::unique_ptr<RemoteClassifier> remote_oracle_connect(const std::string& address,
                                                        std::chrono::milliseconds timeout) {
  return std::make_unique<RemoteClassifier>(parse_address(address), timeout);
}

OracleServer::OracleServer(std::unique_ptr<Classifier> model, std::string host, std::uint16_t port)
    : model_(std::move(model)), host_(std::move(host)), port_(port) {
  if (!model_) throw InvalidArgument("OracleServer: null model");
}

OracleServer::~OracleServer() { stop(); }

void OracleServer::start() {
  if (running_) return;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_s = std::to_string(port_);
  if (const int rc = ::getaddrinfo(host_.c_str(), port_s.c_str(), &hints, &res); rc != 0) {
    throw TransportError("cannot resolve " + host_ + ": " + ::gai_strerror(rc));
  }
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    throw TransportError(errno_text("socket"));
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd, res->ai_addr, res->ai_addrlen) < 0 || ::listen(fd, 64) < 0) {
    const std::string err = errno_text("bind/listen");
    ::freeaddrinfo(res);
    ::close(fd);
    throw TransportError(err);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void OracleServer::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

void OracleServer::stop() {
  const bool was_running = running_.exchange(false);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  (void)was_running;
}

void OracleServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int rc = ::poll(&p, 1, 100);
    if (rc <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(workers_mutex_);
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void OracleServer::serve_connection(int fd) {
  LineSocket sock(fd);
  bool handshake_done = false;
  try {
    while (running_) {
      auto line = sock.try_read_line(std::chrono::milliseconds(200));
      if (!line) continue;
      sock.send_line(handle_frame(*line, handshake_done));
    }
  } catch (const Error&) {
    // Peer went away or sent an oversize frame; drop the connection.
  }
  std::lock_guard lock(workers_mutex_);
  std::erase(client_fds_, fd);
  sock.close();
}

std::string OracleServer::handle_frame(const std::string& frame, bool& handshake_done) {
  json req;
  try {
    req = json::parse(frame);
  } catch (const json::exception&) {
    return json{{"error", "malformed frame"}}.dump();
  }
  if (!req.is_object()) return json{{"error", "frame must be an object"}}.dump();

  if (!handshake_done) {
    if (!req.contains("hello")) return json{{"error", "expected hello"}}.dump();
    handshake_done = true;
    std::lock_guard lock(model_mutex_);
    json modes = json::array({"hard"});
    if (model_->supports_soft()) modes.push_back("soft");
    const Shape s = model_->input_shape();
    return json{{"modes", modes},
                {"classes", model_->num_classes()},
                {"shape", {s.channels, s.height, s.width}}}
        .dump();
  }

  json reply = json::object();
  if (req.contains("id")) reply["id"] = req["id"];
  if (!req.contains("id") || !req["id"].is_number_integer()) {
    reply["error"] = "missing integer id";
    return reply.dump();
  }
  const std::string mode = req.value("mode", std::string{});
  if (mode != "hard" && mode != "soft") {
    reply["error"] = "mode must be hard or soft";
    return reply.dump();
  }
  std::lock_guard lock(model_mutex_);
  const Shape s = model_->input_shape();
  if (!req.contains("image") || !req["image"].is_array() ||
      static_cast<std::int64_t>(req["image"].size()) != s.size()) {
    reply["error"] = "image must be a flat array of C*H*W numbers";
    return reply.dump();
  }
  Vector data(s.size());
  const auto& arr = req["image"];
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    if (!arr[static_cast<std::size_t>(i)].is_number()) {
      reply["error"] = "non-numeric pixel";
      return reply.dump();
    }
    data[i] = arr[static_cast<std::size_t>(i)].get<double>();
  }
  const ImageTensor image(s, std::move(data));
  try {
    if (mode == "hard") {
      reply["label"] = model_->predict(image);
    } else {
      const Vector z = model_->logits(image);
      reply["logits"] = std::vector<double>(z.data(), z.data() + z.size());
    }
  } catch (const Error& e) {
    reply["error"] = e.what();
    return reply.dump();
  }
  ++served_;
  return reply.dump();
}

}  // namespace sbo
