#pragma once

// Message links. Both transports move encoded frames, so the in-process path
// exercises the same codec as TCP.

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <utility>

#include "errors.hpp"
#include "protocol.hpp"

namespace dynamix {

using Duration = std::chrono::milliseconds;

class Link {
 public:
  virtual ~Link() = default;
  virtual void send(const Message& m) = 0;
  // Throws TimeoutError when nothing arrives in time, TransportError when the peer is gone.
  virtual Message recv(Duration timeout) = 0;
  virtual void close() = 0;
  virtual std::string describe() const = 0;
};

namespace detail {

// One direction of an in-process pipe.
class FrameQueue {
 public:
  void push(std::string frame) {
    {
      std::lock_guard lock(mu_);
      if (closed_) throw TransportError("in-process link closed");
      frames_.push_back(std::move(frame));
    }
    cv_.notify_one();
  }

  std::string pop(Duration timeout) {
    std::unique_lock lock(mu_);
    if (!cv_.wait_for(lock, timeout, [&] { return !frames_.empty() || closed_; }))
      throw TimeoutError("in-process link: receive timed out");
    if (frames_.empty()) throw TransportError("in-process link closed by peer");
    std::string f = std::move(frames_.front());
    frames_.pop_front();
    return f;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<std::string> frames_;
  bool closed_ = false;
};

}  // namespace detail

class InProcLink final : public Link {
 public:
  InProcLink(std::shared_ptr<detail::FrameQueue> out, std::shared_ptr<detail::FrameQueue> in, std::string name)
      : out_(std::move(out)), in_(std::move(in)), name_(std::move(name)) {}
  ~InProcLink() override { close(); }

  void send(const Message& m) override { out_->push(encode_frame(m)); }
  Message recv(Duration timeout) override { return decode_frame(in_->pop(timeout)); }
  void close() override {
    out_->close();
    in_->close();
  }
  std::string describe() const override { return name_; }

 private:
  std::shared_ptr<detail::FrameQueue> out_;
  std::shared_ptr<detail::FrameQueue> in_;
  std::string name_;
};

// Returns {arbitrator end, worker end}.
inline std::pair<std::unique_ptr<Link>, std::unique_ptr<Link>> make_inproc_pair(const std::string& name = "inproc") {
  auto a_to_w = std::make_shared<detail::FrameQueue>();
  auto w_to_a = std::make_shared<detail::FrameQueue>();
  return {std::make_unique<InProcLink>(a_to_w, w_to_a, name + ":arbitrator"),
          std::make_unique<InProcLink>(w_to_a, a_to_w, name + ":worker")};
}

// ---- TCP ------------------------------------------------------------------

struct Endpoint {
  std::string host = "127.0.0.1";
  int port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

inline Endpoint parse_endpoint(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw ConfigError("address must be HOST:PORT, got '" + addr + "'");
  Endpoint e;
  e.host = addr.substr(0, colon);
  if (e.host.empty()) e.host = "127.0.0.1";
  try {
    std::size_t used = 0;
    e.port = std::stoi(addr.substr(colon + 1), &used);
    if (used != addr.size() - colon - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigError("bad port in address '" + addr + "'");
  }
  if (e.port < 0 || e.port > 65535) throw ConfigError("port out of range in '" + addr + "'");
  return e;
}

namespace detail {

inline std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

inline sockaddr_in resolve_ipv4(const Endpoint& e) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(static_cast<std::uint16_t>(e.port));
  if (inet_pton(AF_INET, e.host.c_str(), &sa.sin_addr) == 1) return sa;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(e.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw TransportError("cannot resolve host '" + e.host + "'");
  sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return sa;
}

// Waits for `events` on fd until the deadline. False on timeout.
inline bool wait_fd(int fd, short events, std::chrono::steady_clock::time_point deadline) {
  for (;;) {
    const auto left = std::chrono::duration_cast<Duration>(deadline - std::chrono::steady_clock::now()).count();
    if (left <= 0) return false;
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(std::min<long long>(left, 1 << 30)));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) throw TransportError(errno_text("poll"));
  }
}

}  // namespace detail

class TcpLink final : public Link {
 public:
  explicit TcpLink(int fd, std::string peer) : fd_(fd), peer_(std::move(peer)) {
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  }
  ~TcpLink() override { close(); }
  TcpLink(const TcpLink&) = delete;
  TcpLink& operator=(const TcpLink&) = delete;

  void send(const Message& m) override {
    const std::string frame = encode_frame(m);
    std::lock_guard lock(send_mu_);
    std::size_t sent = 0;
    while (sent < frame.size()) {
      const ssize_t n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(detail::errno_text(("send to " + peer_).c_str()));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  Message recv(Duration timeout) override {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
      if (auto m = decoder_.next()) return std::move(*m);
      if (fd_ < 0) throw TransportError("link to " + peer_ + " is closed");
      if (!detail::wait_fd(fd_, POLLIN, deadline)) throw TimeoutError("receive from " + peer_ + " timed out");
      char buf[65536];
      const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n == 0) throw TransportError("peer " + peer_ + " closed the connection");
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw TransportError(detail::errno_text(("recv from " + peer_).c_str()));
      }
      decoder_.feed(std::string_view(buf, static_cast<std::size_t>(n)));
    }
  }

  void close() override {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

  std::string describe() const override { return "tcp:" + peer_; }

 private:
  int fd_;
  std::string peer_;
  FrameDecoder decoder_;
  std::mutex send_mu_;
};

class TcpListener {
 public:
  explicit TcpListener(const Endpoint& at) {
    fd_ = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd_ < 0) throw TransportError(detail::errno_text("socket"));
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in sa = detail::resolve_ipv4(at);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0) {
      const std::string err = detail::errno_text(("bind " + at.str()).c_str());
      ::close(fd_);
      throw TransportError(err);
    }
    if (::listen(fd_, 64) != 0) {
      ::close(fd_);
      throw TransportError(detail::errno_text("listen"));
    }
    socklen_t len = sizeof sa;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&sa), &len);
    bound_ = at;
    bound_.port = ntohs(sa.sin_port);
  }
  ~TcpListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  const Endpoint& endpoint() const { return bound_; }

  std::unique_ptr<Link> accept(Duration timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    if (!detail::wait_fd(fd_, POLLIN, deadline)) throw TimeoutError("accept on " + bound_.str() + " timed out");
    sockaddr_in peer{};
    socklen_t len = sizeof peer;
    const int fd = ::accept4(fd_, reinterpret_cast<sockaddr*>(&peer), &len, SOCK_CLOEXEC);
    if (fd < 0) throw TransportError(detail::errno_text("accept"));
    char host[INET_ADDRSTRLEN] = {};
    ::inet_ntop(AF_INET, &peer.sin_addr, host, sizeof host);
    return std::make_unique<TcpLink>(fd, std::string(host) + ":" + std::to_string(ntohs(peer.sin_port)));
  }

 private:
  int fd_ = -1;
  Endpoint bound_;
};

// Retries refused connections until the timeout, so workers may start before the listener.
inline std::unique_ptr<Link> tcp_connect(const Endpoint& to, Duration timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  const sockaddr_in sa = detail::resolve_ipv4(to);
  for (;;) {
    const int fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw TransportError(detail::errno_text("socket"));
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof sa) == 0)
      return std::make_unique<TcpLink>(fd, to.str());
    const int err = errno;
    ::close(fd);
    if (std::chrono::steady_clock::now() >= deadline)
      throw TimeoutError("connect to " + to.str() + " failed: " + std::strerror(err));
    std::this_thread::sleep_for(Duration(20));
  }
}

}  // namespace dynamix
