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

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "holoproxy/anchor.hpp"
#include "holoproxy/error.hpp"
#include "holoproxy/session.hpp"
#include "holoproxy/wire.hpp"

namespace holoproxy {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  /// 0 picks an ephemeral port; see Server::port().
  std::uint16_t port = 0;
  std::optional<std::filesystem::path> log_dir;
  std::chrono::milliseconds heartbeat_interval{5000};
  std::chrono::milliseconds silence_timeout{15000};
  /// Standard deviation (meters) of jitter added to incoming proxy poses.
  double pose_noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Static assets served over HTTP on the same port.
  std::optional<std::filesystem::path> ui_dir;
};

/// Session hub. Accepts raw framed-protocol TCP connections and, on the same port, HTTP
/// requests: `GET /ws` upgrades to a WebSocket carrying the same frames (one frame per text
/// message), other paths serve static files from ui_dir.
///
/// All networking runs on one I/O thread; every session's reducer is driven from it, so
/// reductions for a session are serialized. Public methods may be called from any thread.
class Server {
 public:
  explicit Server(ServerOptions options)
      : options_(std::move(options)), acceptor_(io_), heartbeat_(io_), jitter_seed_(options_.seed) {}

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() { stop(); }

  /// Registers a session over `cube`; logs to `<log_dir>/<session_id>.log` when a log
  /// directory is configured.
  std::string create_session(DataCube cube, ScreenConfig screen) {
    std::lock_guard lock(mu_);
    const std::string id = "s" + cube_digest(cube).substr(0, 8) + "-" + std::to_string(++session_counter_);
    std::optional<std::filesystem::path> log_path;
    if (options_.log_dir) {
      std::filesystem::create_directories(*options_.log_dir);
      log_path = *options_.log_dir / (id + ".log");
    }
    auto slot = std::make_unique<Slot>(Session(id, std::move(cube), std::move(screen), log_path),
                                       PoseJitter(options_.pose_noise_sigma, jitter_seed_ + session_counter_));
    sessions_.emplace(id, std::move(slot));
    return id;
  }

  void start() {
    namespace net = boost::asio;
    const auto address = net::ip::make_address(options_.bind_address);
    net::ip::tcp::endpoint endpoint(address, options_.port);
    boost::system::error_code ec;
    acceptor_.open(endpoint.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(endpoint, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw Error(ErrorCode::Io, "cannot listen on " + options_.bind_address + ":" +
                                           std::to_string(options_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();
    do_accept();
    schedule_heartbeat();
    thread_ = std::thread([this] { io_.run(); });
  }

  std::uint16_t port() const { return port_; }

  /// Closes every connection, writes each session's closing digest and joins the I/O thread.
  void stop() {
    if (stopped_.exchange(true)) return;
    if (thread_.joinable()) {
      boost::asio::post(io_, [this] {
        boost::system::error_code ec;
        acceptor_.close(ec);
        heartbeat_.cancel();
        std::lock_guard lock(mu_);
        for (auto& [id, slot] : sessions_) {
          for (auto& [cid, conn] : slot->connections) conn->close();
        }
      });
      // Let queued closes run, then stop.
      boost::asio::post(io_, [this] { io_.stop(); });
      thread_.join();
    }
    std::lock_guard lock(mu_);
    for (auto& [id, slot] : sessions_) slot->session.close();
  }

  std::string digest(const std::string& session_id) {
    std::lock_guard lock(mu_);
    return slot(session_id).session.digest();
  }

  std::uint64_t applied_count(const std::string& session_id) {
    std::lock_guard lock(mu_);
    return slot(session_id).session.applied_count();
  }

  std::size_t client_count(const std::string& session_id) {
    std::lock_guard lock(mu_);
    return slot(session_id).session.clients().size();
  }

  std::optional<std::filesystem::path> log_path(const std::string& session_id) {
    std::lock_guard lock(mu_);
    return slot(session_id).session.log_path();
  }

 private:
  using tcp = boost::asio::ip::tcp;

  class Connection : public std::enable_shared_from_this<Connection> {
   public:
    explicit Connection(Server& server) : server_(server), last_seen_(std::chrono::steady_clock::now()) {}
    virtual ~Connection() = default;

    virtual void start() = 0;
    virtual void close() = 0;

    void send(std::string frame) {
      if (closed_) return;
      outbox_.push_back(std::move(frame));
      if (!writing_) write_next();
    }

    void close_after_flush() {
      closing_ = true;
      if (!writing_) close();
    }

    std::string client_id;
    std::string session_id;
    bool joined = false;
    std::chrono::steady_clock::time_point last_seen() const { return last_seen_; }

   protected:
    virtual void async_write_frame(const std::string& frame, std::function<void(bool)> done) = 0;

    void deliver(std::string frame) {
      last_seen_ = std::chrono::steady_clock::now();
      server_.on_frame(this->shared_from_this(), std::move(frame));
    }

    void finished() {
      if (gone_) return;
      gone_ = true;
      closed_ = true;
      server_.on_disconnect(this->shared_from_this());
    }

    bool closed_ = false;

   private:
    void write_next() {
      if (outbox_.empty()) {
        writing_ = false;
        if (closing_) close();
        return;
      }
      writing_ = true;
      current_ = std::move(outbox_.front());
      outbox_.pop_front();
      async_write_frame(current_, [self = this->shared_from_this()](bool ok) {
        if (!ok) {
          self->outbox_.clear();
          self->writing_ = false;
          self->close();
          return;
        }
        self->write_next();
      });
    }

    Server& server_;
    std::chrono::steady_clock::time_point last_seen_;
    std::deque<std::string> outbox_;
    std::string current_;
    bool writing_ = false;
    bool closing_ = false;
    bool gone_ = false;
  };

  /// Newline-delimited frames over a plain TCP stream.
  class TcpConnection : public Connection {
   public:
    TcpConnection(Server& server, tcp::socket socket, std::string prefix)
        : Connection(server), socket_(std::move(socket)), pending_(std::move(prefix)) {}

    void start() override {
      drain();
      if (!closed_) read_more();
    }

    void close() override {
      if (closed_) return;
      closed_ = true;
      boost::system::error_code ec;
      socket_.shutdown(tcp::socket::shutdown_both, ec);
      socket_.close(ec);
    }

   protected:
    void async_write_frame(const std::string& frame, std::function<void(bool)> done) override {
      boost::asio::async_write(socket_, boost::asio::buffer(frame),
                               [done = std::move(done)](boost::system::error_code ec, std::size_t) { done(!ec); });
    }

   private:
    void read_more() {
      socket_.async_read_some(boost::asio::buffer(chunk_),
                              [self = std::static_pointer_cast<TcpConnection>(shared_from_this())](
                                  boost::system::error_code ec, std::size_t n) {
                                if (ec) {
                                  self->close();
                                  self->finished();
                                  return;
                                }
                                self->pending_.append(self->chunk_.data(), n);
                                self->drain();
                                if (!self->closed_) self->read_more();
                                else self->finished();
                              });
    }

    void drain() {
      std::size_t nl;
      while (!closed_ && (nl = pending_.find('\n')) != std::string::npos) {
        std::string frame = pending_.substr(0, nl + 1);
        pending_.erase(0, nl + 1);
        deliver(std::move(frame));
      }
    }

    tcp::socket socket_;
    std::string pending_;
    std::array<char, 4096> chunk_{};
  };

  /// Same frames, one per WebSocket text message. A missing trailing newline is supplied.
  class WsConnection : public Connection {
   public:
    WsConnection(Server& server, tcp::socket socket) : Connection(server), ws_(std::move(socket)) {}

    void accept(boost::beast::http::request<boost::beast::http::string_body> req) {
      ws_.text(true);
      ws_.async_accept(req, [self = std::static_pointer_cast<WsConnection>(shared_from_this())](
                                boost::system::error_code ec) {
        if (ec) {
          self->closed_ = true;
          return;
        }
        self->start();
      });
    }

    void start() override { read_more(); }

    void close() override {
      if (closed_) return;
      closed_ = true;
      ws_.async_close(boost::beast::websocket::close_code::normal,
                      [self = shared_from_this()](boost::system::error_code) {});
    }

   protected:
    void async_write_frame(const std::string& frame, std::function<void(bool)> done) override {
      ws_.async_write(boost::asio::buffer(frame),
                      [done = std::move(done)](boost::system::error_code ec, std::size_t) { done(!ec); });
    }

   private:
    void read_more() {
      ws_.async_read(buffer_, [self = std::static_pointer_cast<WsConnection>(shared_from_this())](
                                  boost::system::error_code ec, std::size_t) {
        if (ec) {
          self->closed_ = true;
          self->finished();
          return;
        }
        std::string frame = boost::beast::buffers_to_string(self->buffer_.data());
        self->buffer_.consume(self->buffer_.size());
        if (frame.empty() || frame.back() != '\n') frame.push_back('\n');
        self->deliver(std::move(frame));
        if (!self->closed_) self->read_more();
        else self->finished();
      });
    }

    boost::beast::websocket::stream<tcp::socket> ws_;
    boost::beast::flat_buffer buffer_;
  };

  /// Reads the first bytes of a connection to tell HTTP from the raw framed protocol.
  class Detector : public std::enable_shared_from_this<Detector> {
   public:
    Detector(Server& server, tcp::socket socket) : server_(server), socket_(std::move(socket)) {}

    void run() {
      socket_.async_read_some(boost::asio::buffer(chunk_), [self = shared_from_this()](
                                                                boost::system::error_code ec, std::size_t n) {
        if (ec) return;
        self->seen_.append(self->chunk_.data(), n);
        self->decide();
      });
    }

   private:
    void decide() {
      static constexpr std::string_view kGet = "GET ";
      const auto k = std::min(seen_.size(), kGet.size());
      if (seen_.compare(0, k, kGet.substr(0, k)) != 0) {
        auto conn = std::make_shared<TcpConnection>(server_, std::move(socket_), std::move(seen_));
        conn->start();
        return;
      }
      if (seen_.size() < kGet.size()) {
        run();
        return;
      }
      auto buffer = std::make_shared<boost::beast::flat_buffer>();
      auto n = boost::asio::buffer_copy(buffer->prepare(seen_.size()), boost::asio::buffer(seen_));
      buffer->commit(n);
      auto req = std::make_shared<boost::beast::http::request<boost::beast::http::string_body>>();
      boost::beast::http::async_read(
          socket_, *buffer, *req,
          [self = shared_from_this(), buffer, req](boost::system::error_code ec, std::size_t) {
            if (ec) return;
            self->server_.on_http(std::move(self->socket_), std::move(*req));
          });
    }

    Server& server_;
    tcp::socket socket_;
    std::array<char, 512> chunk_{};
    std::string seen_;
  };

  struct Slot {
    Slot(Session s, PoseJitter j) : session(std::move(s)), jitter(std::move(j)) {}
    Session session;
    PoseJitter jitter;
    std::map<std::string, std::shared_ptr<Connection>> connections;
  };

  Slot& slot(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session '" + id + "'");
    return *it->second;
  }

  void do_accept() {
    acceptor_.async_accept([this](boost::system::error_code ec, tcp::socket socket) {
      if (ec) return;
      boost::system::error_code ignored;
      socket.set_option(tcp::no_delay(true), ignored);
      std::make_shared<Detector>(*this, std::move(socket))->run();
      do_accept();
    });
  }

  void schedule_heartbeat() {
    heartbeat_.expires_after(options_.heartbeat_interval);
    heartbeat_.async_wait([this](boost::system::error_code ec) {
      if (ec) return;
      const auto now = std::chrono::steady_clock::now();
      std::lock_guard lock(mu_);
      for (auto& [id, s] : sessions_) {
        for (auto& [cid, conn] : s->connections) {
          if (now - conn->last_seen() > options_.silence_timeout) {
            conn->close();
          } else {
            conn->send(encode(s->session.heartbeat()));
          }
        }
      }
      schedule_heartbeat();
    });
  }

  static std::string error_frame(const std::string& session_id, ErrorCode code, std::uint64_t ref_seq,
                                 const std::string& message) {
    return encode(Envelope{kProtocolVersion, valid_token(session_id) ? session_id : std::string("none"),
                           std::string(kServerClientId), 0, ErrorReply{code, ref_seq, message}});
  }

  void reject(const std::shared_ptr<Connection>& conn, ErrorCode code, std::uint64_t ref_seq,
              const std::string& message) {
    conn->send(error_frame(conn->session_id, code, ref_seq, message));
    conn->close_after_flush();
  }

  void on_frame(const std::shared_ptr<Connection>& conn, std::string frame) {
    std::lock_guard lock(mu_);
    Envelope env;
    try {
      env = decode(frame);
    } catch (const Error& e) {
      reject(conn, e.code(), 0, e.detail());
      return;
    }
    if (!conn->joined) {
      if (!env.is<Hello>()) {
        reject(conn, ErrorCode::ProtocolViolation, env.seq, "first message must be hello");
        return;
      }
      auto it = sessions_.find(env.session_id);
      if (it == sessions_.end()) {
        reject(conn, ErrorCode::UnknownSession, env.seq, "no session '" + env.session_id + "'");
        return;
      }
      auto& s = *it->second;
      conn->session_id = env.session_id;
      conn->client_id = env.client_id;
      conn->joined = true;
      if (auto old = s.connections.find(env.client_id); old != s.connections.end() && old->second != conn) {
        old->second->close();
      }
      s.connections[env.client_id] = conn;
      route(s, s.session.join(env));
      return;
    }
    if (env.session_id != conn->session_id || env.client_id != conn->client_id) {
      reject(conn, ErrorCode::ProtocolViolation, env.seq, "envelope does not match the connection's hello");
      return;
    }
    if (env.is<Hello>()) {
      reject(conn, ErrorCode::ProtocolViolation, env.seq, "hello repeated");
      return;
    }
    auto& s = slot(conn->session_id);
    if (env.is<PoseUpdate>() && s.jitter.sigma() > 0) {
      env.payload = PoseUpdate{s.jitter.apply(env.as<PoseUpdate>().pose)};
    }
    route(s, s.session.submit(env));
  }

  void route(Slot& s, const std::vector<Delivery>& deliveries) {
    for (const auto& d : deliveries) {
      if (auto it = s.connections.find(d.client_id); it != s.connections.end()) {
        it->second->send(encode(d.envelope));
      }
    }
  }

  void on_disconnect(const std::shared_ptr<Connection>& conn) {
    std::lock_guard lock(mu_);
    if (!conn->joined) return;
    auto it = sessions_.find(conn->session_id);
    if (it == sessions_.end()) return;
    auto& s = *it->second;
    if (auto c = s.connections.find(conn->client_id); c != s.connections.end() && c->second == conn) {
      s.connections.erase(c);
      s.session.leave(conn->client_id);
    }
  }

  void on_http(tcp::socket socket, boost::beast::http::request<boost::beast::http::string_body> req) {
    namespace http = boost::beast::http;
    if (boost::beast::websocket::is_upgrade(req)) {
      auto conn = std::make_shared<WsConnection>(*this, std::move(socket));
      conn->accept(std::move(req));
      return;
    }
    auto res = std::make_shared<http::response<http::string_body>>(static_file(req));
    auto sock = std::make_shared<tcp::socket>(std::move(socket));
    http::async_write(*sock, *res, [sock, res](boost::system::error_code, std::size_t) {
      boost::system::error_code ec;
      sock->shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  boost::beast::http::response<boost::beast::http::string_body> static_file(
      const boost::beast::http::request<boost::beast::http::string_body>& req) const {
    namespace http = boost::beast::http;
    http::response<http::string_body> res{http::status::not_found, req.version()};
    res.set(http::field::content_type, "text/plain");
    res.keep_alive(false);
    std::string target(req.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target == "/") target = "/index.html";
    if (req.method() != http::verb::get || !options_.ui_dir || target.find("..") != std::string::npos) {
      res.body() = "not found\n";
      res.prepare_payload();
      return res;
    }
    std::ifstream in(*options_.ui_dir / target.substr(1), std::ios::binary);
    if (!in) {
      res.body() = "not found\n";
      res.prepare_payload();
      return res;
    }
    std::ostringstream body;
    body << in.rdbuf();
    res.result(http::status::ok);
    res.set(http::field::content_type, mime_type(target));
    res.body() = body.str();
    res.prepare_payload();
    return res;
  }

  static const char* mime_type(std::string_view path) {
    auto ends = [&](std::string_view ext) {
      return path.size() >= ext.size() && path.substr(path.size() - ext.size()) == ext;
    };
    if (ends(".html")) return "text/html";
    if (ends(".js")) return "application/javascript";
    if (ends(".css")) return "text/css";
    if (ends(".json")) return "application/json";
    if (ends(".svg")) return "image/svg+xml";
    return "application/octet-stream";
  }

  ServerOptions options_;
  boost::asio::io_context io_;
  tcp::acceptor acceptor_;
  boost::asio::steady_timer heartbeat_;
  std::thread thread_;
  std::atomic<bool> stopped_{false};
  std::uint16_t port_ = 0;
  std::uint64_t jitter_seed_;
  std::uint64_t session_counter_ = 0;
  std::mutex mu_;
  std::map<std::string, std::unique_ptr<Slot>> sessions_;
};

}  // namespace holoproxy
