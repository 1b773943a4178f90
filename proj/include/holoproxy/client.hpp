// Copyright 2026 The HoloProxy Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <netdb.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "holoproxy/error.hpp"
#include "holoproxy/reducer.hpp"
#include "holoproxy/wire.hpp"

namespace holoproxy {

/// Blocking client for the raw framed protocol.
class TcpClient {
 public:
  TcpClient(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &found) != 0 || !found) {
      throw Error(ErrorCode::Io, "cannot resolve " + host);
    }
    for (auto* ai = found; ai; ai = ai->ai_next) {
      fd_ = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd_ < 0) continue;
      if (::connect(fd_, ai->ai_addr, ai->ai_addrlen) == 0) break;
      ::close(fd_);
      fd_ = -1;
    }
    ::freeaddrinfo(found);
    if (fd_ < 0) throw Error(ErrorCode::Io, "cannot connect to " + host + ":" + std::to_string(port));
  }

  TcpClient(const TcpClient&) = delete;
  TcpClient& operator=(const TcpClient&) = delete;
  TcpClient(TcpClient&& o) noexcept : fd_(std::exchange(o.fd_, -1)), pending_(std::move(o.pending_)) {}
  ~TcpClient() {
    if (fd_ >= 0) ::close(fd_);
  }

  void send_raw(std::string_view bytes) {
    while (!bytes.empty()) {
      const auto n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
      if (n <= 0) throw Error(ErrorCode::Io, "send failed");
      bytes.remove_prefix(static_cast<std::size_t>(n));
    }
  }

  void send(const Envelope& env) { send_raw(encode(env)); }

  /// Next complete frame, or none on timeout or when the server closed the connection.
  std::optional<std::string> receive_frame(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
      if (auto nl = pending_.find('\n'); nl != std::string::npos) {
        std::string frame = pending_.substr(0, nl + 1);
        pending_.erase(0, nl + 1);
        return frame;
      }
      if (eof_) return std::nullopt;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd pfd{fd_, POLLIN, 0};
      if (::poll(&pfd, 1, static_cast<int>(left.count())) <= 0) continue;
      char buf[4096];
      const auto n = ::recv(fd_, buf, sizeof(buf), 0);
      if (n <= 0) {
        eof_ = true;
        continue;
      }
      pending_.append(buf, static_cast<std::size_t>(n));
    }
  }

  std::optional<Envelope> receive(std::chrono::milliseconds timeout) {
    auto frame = receive_frame(timeout);
    if (!frame) return std::nullopt;
    return decode(*frame);
  }

  bool closed() const { return eof_ && pending_.empty(); }

 private:
  int fd_ = -1;
  std::string pending_;
  bool eof_ = false;
};

/// A connected protocol participant: numbers its own envelopes, mirrors the session in a
/// Replica and keeps everything it received.
class SessionClient {
 public:
  SessionClient(const std::string& host, std::uint16_t port, std::string session_id, std::string client_id)
      : tcp_(host, port), session_id_(std::move(session_id)), client_id_(std::move(client_id)) {}

  std::uint64_t send(Payload payload) {
    tcp_.send(Envelope{kProtocolVersion, session_id_, client_id_, ++seq_, std::move(payload)});
    return seq_;
  }

  /// Resends an already-used sequence number (a retransmission).
  void resend(std::uint64_t seq, Payload payload) {
    tcp_.send(Envelope{kProtocolVersion, session_id_, client_id_, seq, std::move(payload)});
  }

  std::uint64_t hello(Role role, std::set<Capability> caps = {}) { return send(Hello{role, std::move(caps)}); }

  /// Reads one envelope into the replica/inbox. Returns it, or none on timeout/close.
  std::optional<Envelope> pump_one(std::chrono::milliseconds timeout) {
    auto env = tcp_.receive(timeout);
    if (!env) return std::nullopt;
    replica_.apply(*env);
    inbox_.push_back(*env);
    return env;
  }

  /// Reads until `pred` holds for a received envelope. False on timeout.
  template <typename Pred>
  bool pump_until(Pred pred, std::chrono::milliseconds timeout = std::chrono::milliseconds(3000)) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (std::chrono::steady_clock::now() < deadline) {
      auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      auto env = pump_one(left);
      if (!env) {
        if (tcp_.closed()) return false;
        continue;
      }
      if (pred(*env)) return true;
    }
    return false;
  }

  bool wait_ack(std::uint64_t seq, std::chrono::milliseconds timeout = std::chrono::milliseconds(3000)) {
    return pump_until([seq](const Envelope& e) { return e.is<Ack>() && e.as<Ack>().seq == seq; }, timeout);
  }

  /// Drains whatever arrives within `quiet` of the previous envelope.
  void drain(std::chrono::milliseconds quiet = std::chrono::milliseconds(100)) {
    while (pump_one(quiet)) {
    }
  }

  const Replica& replica() const { return replica_; }
  const std::vector<Envelope>& inbox() const { return inbox_; }
  TcpClient& transport() { return tcp_; }
  const std::string& client_id() const { return client_id_; }

 private:
  TcpClient tcp_;
  std::string session_id_;
  std::string client_id_;
  std::uint64_t seq_ = 0;
  Replica replica_;
  std::vector<Envelope> inbox_;
};

}  // namespace holoproxy
