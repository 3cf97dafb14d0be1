#ifndef MPSE_TRANSPORT_HPP
#define MPSE_TRANSPORT_HPP

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "mpse/wire.hpp"

namespace mpse {

struct TimeoutError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int kRoundTimeoutMs = 5000;

inline std::string party_role(int id) { return "party-" + std::to_string(id); }
inline const char* cloud_role() { return "cloud"; }
inline const char* security_role() { return "security"; }

/// Message destinations are a function of the kind alone; this is what
/// keeps the role boundaries structural (a party cannot address the
/// security module directly, broadcasts reach every party).
inline std::vector<std::string> route_destinations(MessageKind kind, int party_count) {
  switch (kind) {
    case MessageKind::PartyUpload:
    case MessageKind::ScalarUpload:
    case MessageKind::PartyProduct:
      return {cloud_role()};
    case MessageKind::AggregateToSecurity:
      return {security_role()};
    case MessageKind::Broadcast:
    case MessageKind::ScalarBroadcast:
    case MessageKind::CloudFeedback: {
      std::vector<std::string> out;
      for (int i = 1; i <= party_count; ++i) out.push_back(party_role(i));
      return out;
    }
  }
  throw WireError("route_destinations: unknown kind");
}

class MessageQueue {
 public:
  void push(RoundMessage msg) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      queue_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  std::optional<RoundMessage> pop(int timeout_ms) {
    std::unique_lock<std::mutex> lock(mu_);
    if (!cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                      [&] { return !queue_.empty(); }))
      return std::nullopt;
    RoundMessage msg = std::move(queue_.front());
    queue_.pop_front();
    return msg;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<RoundMessage> queue_;
};

/// In-process message network: one queue per role, kind-based routing.
class InprocNetwork {
 public:
  explicit InprocNetwork(int party_count) : party_count_(party_count) {
    queues_[cloud_role()] = std::make_unique<MessageQueue>();
    queues_[security_role()] = std::make_unique<MessageQueue>();
    for (int i = 1; i <= party_count; ++i) queues_[party_role(i)] = std::make_unique<MessageQueue>();
  }

  void send(const RoundMessage& msg) {
    for (const auto& dest : route_destinations(msg.kind, party_count_)) queues_.at(dest)->push(msg);
  }

  RoundMessage recv(const std::string& role, int timeout_ms = kRoundTimeoutMs) {
    auto msg = queues_.at(role)->pop(timeout_ms);
    if (!msg) throw TimeoutError("recv timeout for role " + role);
    return *msg;
  }

 private:
  int party_count_;
  std::map<std::string, std::unique_ptr<MessageQueue>> queues_;
};

// --- loopback TCP hub ---

namespace detail {

inline void write_all(int fd, const std::uint8_t* data, std::size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n <= 0) throw WireError("socket write failed");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
}

inline bool read_all(int fd, std::uint8_t* data, std::size_t len, int timeout_ms) {
  while (len > 0) {
    pollfd pfd{fd, POLLIN, 0};
    int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0) throw TimeoutError("socket read timeout");
    if (pr < 0) throw WireError("poll failed");
    ssize_t n = ::recv(fd, data, len, 0);
    if (n == 0) return false;  // peer closed
    if (n < 0) throw WireError("socket read failed");
    data += n;
    len -= static_cast<std::size_t>(n);
  }
  return true;
}

inline void write_frame(int fd, const std::string& body, std::mutex& mu) {
  std::vector<std::uint8_t> frame;
  frame.reserve(4 + body.size());
  auto len = static_cast<std::uint32_t>(body.size());
  frame.push_back(static_cast<std::uint8_t>(len >> 24));
  frame.push_back(static_cast<std::uint8_t>(len >> 16));
  frame.push_back(static_cast<std::uint8_t>(len >> 8));
  frame.push_back(static_cast<std::uint8_t>(len));
  frame.insert(frame.end(), body.begin(), body.end());
  std::lock_guard<std::mutex> lock(mu);
  write_all(fd, frame.data(), frame.size());
}

inline std::optional<std::string> read_frame(int fd, int timeout_ms) {
  std::uint8_t hdr[4];
  if (!read_all(fd, hdr, 4, timeout_ms)) return std::nullopt;
  std::uint32_t len = (static_cast<std::uint32_t>(hdr[0]) << 24) |
                      (static_cast<std::uint32_t>(hdr[1]) << 16) |
                      (static_cast<std::uint32_t>(hdr[2]) << 8) | hdr[3];
  std::string body(len, '\0');
  if (len > 0 && !read_all(fd, reinterpret_cast<std::uint8_t*>(body.data()), len, timeout_ms))
    throw WireError("truncated frame");
  return body;
}

}  // namespace detail

/// Central router listening on 127.0.0.1. Each role connects, announces
/// itself with a hello frame, then exchanges length-prefixed messages
/// that the hub forwards according to route_destinations.
class SocketHub {
 public:
  explicit SocketHub(int party_count) : party_count_(party_count) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw WireError("socket() failed");
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw WireError("bind failed");
    socklen_t alen = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &alen);
    port_ = ntohs(addr.sin_port);
    if (::listen(listen_fd_, party_count + 8) != 0) throw WireError("listen failed");
    accept_thread_ = std::thread([this] { accept_loop(); });
  }

  ~SocketHub() { stop(); }

  int port() const { return port_; }
  int expected_roles() const { return party_count_ + 2; }

  // blocks until every role has connected and announced itself
  void wait_ready(int timeout_ms = kRoundTimeoutMs) {
    std::unique_lock<std::mutex> lock(mu_);
    if (!ready_cv_.wait_for(lock, std::chrono::milliseconds(timeout_ms), [&] {
          return static_cast<int>(fds_.size()) == expected_roles();
        }))
      throw TimeoutError("hub: not all roles connected");
  }

  void stop() {
    if (stopped_.exchange(true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto& [role, fd] : fds_) ::shutdown(fd, SHUT_RDWR);
    }
    ready_cv_.notify_all();
    if (accept_thread_.joinable()) accept_thread_.join();
    for (auto& t : reader_threads_)
      if (t.joinable()) t.join();
    std::lock_guard<std::mutex> lock(mu_);
    for (auto& [role, fd] : fds_) ::close(fd);
    fds_.clear();
  }

 private:
  void accept_loop() {
    while (!stopped_) {
      int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) break;
      std::lock_guard<std::mutex> lock(mu_);
      reader_threads_.emplace_back([this, fd] { serve(fd); });
    }
  }

  void serve(int fd) {
    std::string role;
    try {
      auto hello = detail::read_frame(fd, kRoundTimeoutMs);
      if (!hello) return;
      nlohmann::json j = nlohmann::json::parse(*hello);
      role = j.at("hello").get<std::string>();
      {
        std::lock_guard<std::mutex> lock(mu_);
        fds_[role] = fd;
      }
      ready_cv_.notify_all();
      // forward frames until the peer disconnects; bodies are routed
      // opaquely except for the kind field needed for addressing
      while (!stopped_) {
        auto body = detail::read_frame(fd, kRoundTimeoutMs * 4);
        if (!body) break;
        MessageKind kind =
            kind_from_name(nlohmann::json::parse(*body).at("kind").get<std::string>());
        for (const auto& dest : route_destinations(kind, party_count_)) forward(dest, *body);
      }
    } catch (const std::exception&) {
      // connection-level failure: drop the peer; receivers observe a timeout
    }
  }

  void forward(const std::string& dest, const std::string& body) {
    int fd = -1;
    {
      // a sender may race ahead of a slower role's hello; hold the
      // frame until the destination registers instead of dropping it
      std::unique_lock<std::mutex> lock(mu_);
      if (!ready_cv_.wait_for(lock, std::chrono::milliseconds(kRoundTimeoutMs),
                              [&] { return fds_.count(dest) != 0 || stopped_; }))
        throw TimeoutError("hub: destination not connected: " + dest);
      auto it = fds_.find(dest);
      if (it == fds_.end()) throw WireError("hub: destination gone: " + dest);
      fd = it->second;
    }
    detail::write_frame(fd, body, write_mu_);
  }

  int party_count_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopped_{false};
  std::mutex mu_;
  std::mutex write_mu_;
  std::condition_variable ready_cv_;
  std::map<std::string, int> fds_;
  std::thread accept_thread_;
  std::vector<std::thread> reader_threads_;
};

/// One role's connection to the hub.
class SocketEndpoint {
 public:
  SocketEndpoint(int port, const std::string& role) : role_(role) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw WireError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw WireError("connect failed");
    nlohmann::json hello{{"hello", role}};
    detail::write_frame(fd_, hello.dump(), write_mu_);
  }

  ~SocketEndpoint() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
    }
  }

  SocketEndpoint(const SocketEndpoint&) = delete;
  SocketEndpoint& operator=(const SocketEndpoint&) = delete;

  void send(const RoundMessage& msg) {
    nlohmann::json j{{"kind", kind_name(msg.kind)},
                     {"k", msg.k},
                     {"sender", msg.sender},
                     {"payload", msg.payload}};
    detail::write_frame(fd_, j.dump(), write_mu_);
  }

  RoundMessage recv(int timeout_ms = kRoundTimeoutMs) {
    auto body = detail::read_frame(fd_, timeout_ms);
    if (!body) throw WireError("peer closed connection for role " + role_);
    return decode_message_body(*body);
  }

 private:
  std::string role_;
  int fd_ = -1;
  std::mutex write_mu_;
};

}  // namespace mpse

#endif  // MPSE_TRANSPORT_HPP
