#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <openssl/evp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cerrno>
#include <cstring>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sketchlink/session.hpp"

// WebSocket (RFC 6455) server carrying one JSON envelope per text message.

namespace sketchlink::ws {

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum Opcode : std::uint8_t { Continuation = 0x0, Text = 0x1, Binary = 0x2, Close = 0x8, Ping = 0x9, Pong = 0xA };

struct Frame {
  bool fin = true;
  std::uint8_t opcode = Text;
  std::string payload;
};

inline constexpr std::size_t kMaxMessage = 64u << 20;

/// Sec-WebSocket-Accept for a client key.
inline std::string accept_key(std::string_view key) {
  const std::string s = std::string(key) + "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int n = 0;
  if (EVP_Digest(s.data(), s.size(), md, &n, EVP_sha1(), nullptr) != 1) throw ProtocolError("sha1 failed");
  unsigned char out[4 * ((EVP_MAX_MD_SIZE + 2) / 3) + 1];
  const int len = EVP_EncodeBlock(out, md, static_cast<int>(n));
  return {reinterpret_cast<const char*>(out), static_cast<std::size_t>(len)};
}

inline std::string encode_frame(std::uint8_t opcode, std::string_view payload,
                                std::optional<std::array<std::uint8_t, 4>> mask = std::nullopt, bool fin = true) {
  std::string f;
  f.push_back(static_cast<char>((fin ? 0x80 : 0x00) | opcode));
  const std::uint8_t mbit = mask ? 0x80 : 0x00;
  const std::uint64_t n = payload.size();
  if (n < 126) {
    f.push_back(static_cast<char>(mbit | n));
  } else if (n <= 0xFFFF) {
    f.push_back(static_cast<char>(mbit | 126));
    for (int i = 1; i >= 0; --i) f.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  } else {
    f.push_back(static_cast<char>(mbit | 127));
    for (int i = 7; i >= 0; --i) f.push_back(static_cast<char>((n >> (8 * i)) & 0xFF));
  }
  if (mask) {
    f.append(reinterpret_cast<const char*>(mask->data()), 4);
    for (std::size_t i = 0; i < n; ++i) f.push_back(static_cast<char>(payload[i] ^ (*mask)[i % 4]));
  } else {
    f.append(payload);
  }
  return f;
}

/// Removes one complete frame from the front of `buf`. Returns nullopt when
/// more bytes are needed.
inline std::optional<Frame> decode_frame(std::string& buf, bool require_mask = true) {
  if (buf.size() < 2) return std::nullopt;
  const auto b0 = static_cast<std::uint8_t>(buf[0]);
  const auto b1 = static_cast<std::uint8_t>(buf[1]);
  if (b0 & 0x70) throw ProtocolError("reserved bits set");
  Frame fr;
  fr.fin = b0 & 0x80;
  fr.opcode = b0 & 0x0F;
  const bool masked = b1 & 0x80;
  if (require_mask && !masked) throw ProtocolError("client frames must be masked");
  std::uint64_t n = b1 & 0x7F;
  std::size_t pos = 2;
  if (n >= 126) {
    const std::size_t width = n == 126 ? 2 : 8;
    if (buf.size() < pos + width) return std::nullopt;
    n = 0;
    for (std::size_t i = 0; i < width; ++i) n = (n << 8) | static_cast<std::uint8_t>(buf[pos + i]);
    pos += width;
  }
  if (fr.opcode >= Close && (n > 125 || !fr.fin)) throw ProtocolError("bad control frame");
  if (n > kMaxMessage) throw ProtocolError("frame too large");
  std::array<std::uint8_t, 4> key{};
  if (masked) {
    if (buf.size() < pos + 4) return std::nullopt;
    for (int i = 0; i < 4; ++i) key[i] = static_cast<std::uint8_t>(buf[pos + i]);
    pos += 4;
  }
  if (buf.size() < pos + n) return std::nullopt;
  fr.payload = buf.substr(pos, n);
  if (masked)
    for (std::size_t i = 0; i < n; ++i) fr.payload[i] = static_cast<char>(fr.payload[i] ^ key[i % 4]);
  buf.erase(0, pos + n);
  return fr;
}

namespace detail {

inline std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

inline std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

}  // namespace detail

/// Parses an HTTP upgrade request. Returns the 101 response, or throws.
inline std::string handshake_response(std::string_view request) {
  if (request.substr(0, 4) != "GET ") throw ProtocolError("expected a GET request");
  std::map<std::string, std::string> headers;
  std::size_t pos = request.find("\r\n");
  while (pos != std::string_view::npos) {
    const std::size_t next = request.find("\r\n", pos + 2);
    const std::string_view line = request.substr(pos + 2, next == std::string_view::npos ? next : next - pos - 2);
    const std::size_t colon = line.find(':');
    if (colon != std::string_view::npos)
      headers[detail::lower(detail::trim(line.substr(0, colon)))] = detail::trim(line.substr(colon + 1));
    pos = next;
  }
  if (detail::lower(headers["upgrade"]) != "websocket") throw ProtocolError("not a websocket upgrade");
  const std::string key = headers["sec-websocket-key"];
  if (key.empty()) throw ProtocolError("missing Sec-WebSocket-Key");
  return "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Accept: " +
         accept_key(key) + "\r\n\r\n";
}

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8765;
  double ping_interval = 10.0;    // seconds between heartbeat pings
  double timeout = 30.0;          // drop a connection silent for this long
  double steps_per_second = 360.0;  // wall-clock pacing of runs
  SessionOptions session;
};

/// Reads {"listen": {"host", "port"}, "max_event_rate", "steps_per_second"}.
inline ServerConfig server_config_from_json(const json& j, ServerConfig cfg = {}) {
  if (!j.is_object()) throw InvalidArgument("config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "listen" && it.key() != "max_event_rate" && it.key() != "steps_per_second")
      throw InvalidArgument("unknown config key '" + it.key() + "'");
  if (j.contains("listen")) {
    const json& l = j.at("listen");
    if (!l.is_object()) throw InvalidArgument("listen must be an object");
    if (l.contains("host")) {
      if (!l.at("host").is_string()) throw InvalidArgument("listen.host must be a string");
      cfg.host = l.at("host").get<std::string>();
    }
    if (l.contains("port")) {
      if (!l.at("port").is_number_integer() || l.at("port").get<long long>() < 0 || l.at("port").get<long long>() > 65535)
        throw InvalidArgument("listen.port must be 0..65535");
      cfg.port = l.at("port").get<int>();
    }
  }
  auto positive = [&](const char* k, double& v, bool allow_zero) {
    if (!j.contains(k)) return;
    if (!j.at(k).is_number()) throw InvalidArgument(std::string(k) + " must be a number");
    v = j.at(k).get<double>();
    if (!(allow_zero ? v >= 0.0 : v > 0.0)) throw InvalidArgument(std::string(k) + " out of range");
  };
  positive("max_event_rate", cfg.session.max_event_rate, true);
  positive("steps_per_second", cfg.steps_per_second, false);
  return cfg;
}

/// "host:port", "[v6]:port" or ":port".
inline void apply_listen(ServerConfig& cfg, std::string_view spec) {
  const std::size_t colon = spec.rfind(':');
  if (colon == std::string_view::npos) throw InvalidArgument("--listen expects HOST:PORT");
  std::string host(spec.substr(0, colon));
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  const std::string port(spec.substr(colon + 1));
  int p = -1;
  try {
    std::size_t used = 0;
    p = std::stoi(port, &used);
    if (used != port.size()) p = -1;
  } catch (const std::exception&) {
  }
  if (p < 0 || p > 65535) throw InvalidArgument("bad port '" + port + "'");
  if (!host.empty()) cfg.host = host;
  cfg.port = p;
}

class Server {
 public:
  Server(ServerConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log), sessions_(cfg_.session) {}
  ~Server() { close_all(); }
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and listens. Throws IoError when the endpoint is unavailable.
  void listen() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    hints.ai_flags = AI_PASSIVE | AI_NUMERICSERV;
    addrinfo* res = nullptr;
    const std::string port = std::to_string(cfg_.port);
    if (int rc = getaddrinfo(cfg_.host.c_str(), port.c_str(), &hints, &res); rc != 0)
      throw IoError("cannot resolve " + cfg_.host + ": " + gai_strerror(rc));
    std::string why = "no address";
    for (addrinfo* a = res; a; a = a->ai_next) {
      const int fd = ::socket(a->ai_family, a->ai_socktype | SOCK_NONBLOCK | SOCK_CLOEXEC, a->ai_protocol);
      if (fd < 0) {
        why = std::strerror(errno);
        continue;
      }
      const int one = 1;
      ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
      if (::bind(fd, a->ai_addr, a->ai_addrlen) == 0 && ::listen(fd, 16) == 0) {
        listen_fd_ = fd;
        break;
      }
      why = std::strerror(errno);
      ::close(fd);
    }
    freeaddrinfo(res);
    if (listen_fd_ < 0) throw IoError("cannot bind " + cfg_.host + ":" + port + ": " + why);
    sockaddr_storage ss{};
    socklen_t len = sizeof ss;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&ss), &len);
    bound_port_ = ntohs(ss.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port
                                                 : reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
    log_ << "listening on ws://" << cfg_.host << ":" << bound_port_ << std::endl;
  }

  int port() const { return bound_port_; }
  SessionManager& sessions() { return sessions_; }
  std::size_t connections() const { return conns_.size(); }

  /// Serves until `stop` becomes true, then halts runs at a step boundary,
  /// flushes pending events, logs unsaved sessions and closes. Returns 0.
  int serve(const std::atomic<bool>& stop) {
    while (!stop.load()) poll_once();
    shutdown();
    return 0;
  }

  /// One loop iteration: waits for I/O (briefly while runs are active),
  /// then advances runs by the steps due since the last pump.
  void poll_once() {
    const bool running = sessions_.running();
    const int wait_ms = running ? std::max(1, static_cast<int>(1000.0 / cfg_.steps_per_second)) : 100;
    std::vector<pollfd> fds;
    fds.push_back({listen_fd_, POLLIN, 0});
    for (auto& [id, c] : conns_) fds.push_back({c.fd, static_cast<short>(POLLIN | (c.out.empty() ? 0 : POLLOUT)), 0});
    const int rc = ::poll(fds.data(), fds.size(), wait_ms);
    const double now = clock();
    if (rc > 0) {
      if (fds[0].revents & POLLIN) accept_all(now);
      std::size_t i = 1;
      for (auto it = conns_.begin(); it != conns_.end() && i < fds.size(); ++it, ++i) {
        if (fds[i].fd != it->second.fd) continue;
        if (fds[i].revents & (POLLIN | POLLHUP | POLLERR)) read_from(it->second, now);
        if (fds[i].revents & POLLOUT) flush(it->second);
      }
    }
    if (sessions_.running()) {
      if (!running) last_pump_ = now;
      const double due = (now - last_pump_) * cfg_.steps_per_second;
      const auto steps = static_cast<std::size_t>(std::clamp(due, 0.0, 1000.0));
      if (steps > 0) {
        last_pump_ = now;
        route(sessions_.pump(steps));
      }
    }
    heartbeat(now);
    reap();
  }

  void shutdown() {
    route(sessions_.stop_all());
    for (const auto& sid : sessions_.unsaved()) log_ << "warning: session " << sid << " has unsaved changes" << std::endl;
    for (auto& [id, c] : conns_) {
      c.out += encode_frame(Close, std::string("\x03\xe9", 2));  // 1001 going away
      ::fcntl(c.fd, F_SETFL, ::fcntl(c.fd, F_GETFL) & ~O_NONBLOCK);
      timeval tv{1, 0};
      ::setsockopt(c.fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
      flush(c);
    }
    close_all();
    log_ << "server stopped" << std::endl;
  }

 private:
  struct Conn {
    int fd = -1;
    std::string in, out;
    bool upgraded = false;
    bool closing = false;
    std::string message;
    bool in_message = false;
    double last_seen = 0.0;
    double last_ping = 0.0;
  };

  double clock() const { return cfg_.session.clock(); }

  void accept_all(double now) {
    for (;;) {
      const int fd = ::accept4(listen_fd_, nullptr, nullptr, SOCK_NONBLOCK | SOCK_CLOEXEC);
      if (fd < 0) return;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      Conn c;
      c.fd = fd;
      c.last_seen = c.last_ping = now;
      conns_.emplace(next_conn_++, std::move(c));
    }
  }

  void read_from(Conn& c, double now) {
    char buf[65536];
    for (;;) {
      const ssize_t n = ::recv(c.fd, buf, sizeof buf, 0);
      if (n > 0) {
        c.in.append(buf, static_cast<std::size_t>(n));
        c.last_seen = now;
        if (c.in.size() > kMaxMessage + 16) return fail(c, 1009);
        continue;
      }
      if (n == 0 || (errno != EAGAIN && errno != EWOULDBLOCK && errno != EINTR)) {
        c.closing = true;
        c.out.clear();
      }
      break;
    }
    try {
      if (!c.upgraded) {
        const std::size_t end = c.in.find("\r\n\r\n");
        if (end == std::string::npos) {
          if (c.in.size() > 16384) throw ProtocolError("request header too large");
          return;
        }
        c.out += handshake_response(std::string_view(c.in).substr(0, end + 4));
        c.in.erase(0, end + 4);
        c.upgraded = true;
      }
      while (!c.closing) {
        auto fr = decode_frame(c.in);
        if (!fr) break;
        on_frame(c, *fr);
      }
    } catch (const ProtocolError& e) {
      if (!c.upgraded) {
        c.out += "HTTP/1.1 400 Bad Request\r\nContent-Length: 0\r\n\r\n";
        c.closing = true;
      } else {
        fail(c, 1002);
      }
    }
    flush(c);
  }

  void on_frame(Conn& c, const Frame& fr) {
    switch (fr.opcode) {
      case Ping: c.out += encode_frame(Pong, fr.payload); return;
      case Pong: return;
      case Close:
        c.out += encode_frame(Close, fr.payload.substr(0, 2));
        c.closing = true;
        return;
      case Binary: return fail(c, 1003);
      case Text:
        if (c.in_message) throw ProtocolError("new message inside a fragmented one");
        c.message = fr.payload;
        c.in_message = !fr.fin;
        break;
      case Continuation:
        if (!c.in_message) throw ProtocolError("unexpected continuation");
        c.message += fr.payload;
        c.in_message = !fr.fin;
        break;
      default: throw ProtocolError("unknown opcode");
    }
    if (c.in_message) return;
    const std::size_t self = id_of(c);
    std::vector<json> events = sessions_.handle_text(c.message);
    c.message.clear();
    for (const auto& e : events)
      if (e.contains("session") && e.at("session").is_string() && e.value("type", "") != "error")
        owner_[e.at("session").get<std::string>()] = self;
    for (const auto& e : events) c.out += encode_frame(Text, e.dump());
  }

  std::size_t id_of(const Conn& c) const {
    for (const auto& [id, x] : conns_)
      if (&x == &c) return id;
    return 0;
  }

  void route(const std::vector<json>& events) {
    for (const auto& e : events) {
      auto o = owner_.find(e.value("session", ""));
      if (o == owner_.end()) continue;
      auto c = conns_.find(o->second);
      if (c == conns_.end() || c->second.closing) continue;
      c->second.out += encode_frame(Text, e.dump());
      flush(c->second);
    }
  }

  void fail(Conn& c, std::uint16_t code) {
    const char reason[2] = {static_cast<char>(code >> 8), static_cast<char>(code & 0xFF)};
    c.out += encode_frame(Close, std::string_view(reason, 2));
    c.closing = true;
  }

  void flush(Conn& c) {
    while (!c.out.empty()) {
      const ssize_t n = ::send(c.fd, c.out.data(), c.out.size(), MSG_NOSIGNAL);
      if (n <= 0) {
        if (n < 0 && (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR)) return;
        c.out.clear();
        c.closing = true;
        return;
      }
      c.out.erase(0, static_cast<std::size_t>(n));
    }
  }

  void heartbeat(double now) {
    for (auto& [id, c] : conns_) {
      if (!c.upgraded || c.closing) continue;
      if (now - c.last_seen > cfg_.timeout) {
        log_ << "connection " << id << " timed out" << std::endl;
        fail(c, 1001);
        flush(c);
        continue;
      }
      if (now - c.last_ping >= cfg_.ping_interval) {
        c.last_ping = now;
        c.out += encode_frame(Ping, "");
        flush(c);
      }
    }
  }

  void reap() {
    for (auto it = conns_.begin(); it != conns_.end();) {
      if (it->second.closing && it->second.out.empty()) {
        ::close(it->second.fd);
        it = conns_.erase(it);
      } else {
        ++it;
      }
    }
  }

  void close_all() {
    for (auto& [id, c] : conns_) ::close(c.fd);
    conns_.clear();
    if (listen_fd_ >= 0) ::close(listen_fd_);
    listen_fd_ = -1;
  }

  ServerConfig cfg_;
  std::ostream& log_;
  SessionManager sessions_;
  int listen_fd_ = -1;
  int bound_port_ = 0;
  std::map<std::size_t, Conn> conns_;
  std::size_t next_conn_ = 1;
  std::map<std::string, std::size_t> owner_;  // session -> connection that last addressed it
  double last_pump_ = 0.0;
};

}  // namespace sketchlink::ws
