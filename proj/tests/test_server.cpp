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

#include <gtest/gtest.h>

#include <boost/asio/connect.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include "holoproxy/client.hpp"
#include "holoproxy/server.hpp"
#include "test_util.hpp"

using namespace holoproxy;
using namespace std::chrono_literals;
using holoproxy::testing::grid_cube;
using holoproxy::testing::scratch_dir;

namespace {

const ScreenConfig kScreen = ScreenConfig::landscape(1000, 500);

DataCube cube34() { return grid_cube(3, 4, {5, 1, 9, 2, 8, 3, 7, 4, 6, 0, 11, 10}); }

struct Running {
  explicit Running(ServerOptions opts = {}) : server(std::move(opts)) {
    id = server.create_session(cube34(), kScreen);
    server.start();
  }
  SessionClient join(const std::string& client, Role role) {
    SessionClient c("127.0.0.1", server.port(), id, client);
    c.hello(role);
    EXPECT_TRUE(c.pump_until([](const Envelope& e) { return e.is<FullSnapshot>(); }));
    return c;
  }
  TapScreen tap(CellId cell) const { return {cell_center_px(cell, layout, kScreen)}; }

  Server server;
  std::string id;
  ChartLayout layout = layout_chart(cube34());
};

template <typename T>
int count(const std::vector<Envelope>& inbox) {
  return static_cast<int>(std::count_if(inbox.begin(), inbox.end(), [](const Envelope& e) { return e.is<T>(); }));
}

bool wait_for(const std::function<bool()>& pred, std::chrono::milliseconds limit = 3000ms) {
  const auto end = std::chrono::steady_clock::now() + limit;
  while (std::chrono::steady_clock::now() < end) {
    if (pred()) return true;
    std::this_thread::sleep_for(5ms);
  }
  return pred();
}

std::pair<int, std::string> http_get(std::uint16_t port, const std::string& target) {
  namespace beast = boost::beast;
  namespace http = beast::http;
  boost::asio::io_context io;
  boost::asio::ip::tcp::socket sock(io);
  sock.connect({boost::asio::ip::make_address("127.0.0.1"), port});
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, "localhost");
  http::write(sock, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(sock, buf, res);
  return {res.result_int(), res.body()};
}

}  // namespace

TEST(Server, SessionIdsAndInitialDigests) {
  Server server({});
  const auto a = server.create_session(cube34(), kScreen);
  const auto b = server.create_session(cube34(), kScreen);
  EXPECT_NE(a, b);
  EXPECT_TRUE(valid_token(a));
  EXPECT_EQ(server.digest(a), server.digest(b));
  EXPECT_EQ(server.digest(a), digest(initial_state(cube34())));
}

TEST(Server, ProxyTapReachesRendererAndPulsesProxy) {
  Running r;
  auto phone = r.join("phone", Role::proxy);
  auto hmd = r.join("hmd", Role::renderer);
  const auto seq = phone.send(r.tap({2, 1}));
  ASSERT_TRUE(phone.pump_until([](const Envelope& e) { return e.is<HapticPulse>(); }));
  ASSERT_TRUE(hmd.pump_until([](const Envelope& e) { return e.is<StateDelta>(); }));
  const auto& inbox = phone.inbox();
  const auto ack = std::find_if(inbox.begin(), inbox.end(), [](const Envelope& e) { return e.is<Ack>(); });
  ASSERT_NE(ack, inbox.end());
  EXPECT_EQ(ack->as<Ack>().seq, seq);
  EXPECT_EQ(count<StateDelta>(inbox), 1);
  EXPECT_EQ(count<HapticPulse>(hmd.inbox()), 0);
  EXPECT_EQ(hmd.replica().digest(), r.server.digest(r.id));
  EXPECT_EQ(phone.replica().digest(), r.server.digest(r.id));
  EXPECT_TRUE(hmd.replica().state().selection.contains({2, 1}));
}

TEST(Server, LateJoinerSnapshotMatchesServer) {
  Running r;
  auto phone = r.join("phone", Role::proxy);
  for (std::uint32_t i = 0; i < 50; ++i) {
    Payload p = i % 5 == 0 ? Payload{ProjectRequest{Axis::year, i % 4}}
                : i % 5 == 1 ? Payload{PoseUpdate{Pose::translation(i * 0.01, 0, 0)}}
                             : Payload{r.tap({i % 3, (i / 3) % 4})};
    ASSERT_TRUE(phone.wait_ack(phone.send(p)));
  }
  EXPECT_EQ(r.server.applied_count(r.id), 50u);
  auto late = r.join("late", Role::observer);
  EXPECT_EQ(late.replica().digest(), r.server.digest(r.id));
  phone.drain(50ms);
  EXPECT_EQ(phone.replica().digest(), r.server.digest(r.id));
}

TEST(Server, FirstMessageMustBeHello) {
  Running r;
  TcpClient raw("127.0.0.1", r.server.port());
  raw.send(Envelope{kProtocolVersion, r.id, "x", 1, SummarizeRequest{}});
  auto reply = raw.receive(2000ms);
  ASSERT_TRUE(reply);
  EXPECT_EQ(reply->as<ErrorReply>().code, ErrorCode::ProtocolViolation);
  EXPECT_FALSE(raw.receive(2000ms));
  EXPECT_TRUE(raw.closed());
  EXPECT_EQ(r.server.applied_count(r.id), 0u);
}

TEST(Server, GarbageAndUnknownSessionAreRejected) {
  Running r;
  {
    TcpClient raw("127.0.0.1", r.server.port());
    raw.send_raw("{not json}\n");
    auto reply = raw.receive(2000ms);
    ASSERT_TRUE(reply);
    EXPECT_EQ(reply->as<ErrorReply>().code, ErrorCode::MalformedFrame);
    EXPECT_FALSE(raw.receive(2000ms));
  }
  {
    TcpClient raw("127.0.0.1", r.server.port());
    raw.send(Envelope{kProtocolVersion, "nope", "x", 1, Hello{}});
    auto reply = raw.receive(2000ms);
    ASSERT_TRUE(reply);
    EXPECT_EQ(reply->as<ErrorReply>().code, ErrorCode::UnknownSession);
  }
}

TEST(Server, ReducerErrorsStayWithTheSender) {
  Running r;
  auto phone = r.join("phone", Role::proxy);
  auto hmd = r.join("hmd", Role::renderer);
  phone.send(AxisTap{Axis::year, 99});
  ASSERT_TRUE(phone.pump_until([](const Envelope& e) { return e.is<ErrorReply>(); }));
  EXPECT_EQ(phone.inbox().back().as<ErrorReply>().code, ErrorCode::OutOfBoundsIndex);
  hmd.drain(100ms);
  EXPECT_EQ(count<ErrorReply>(hmd.inbox()), 0);
  EXPECT_EQ(count<StateDelta>(hmd.inbox()), 0);
  // The connection stays usable.
  EXPECT_TRUE(phone.wait_ack(phone.send(AxisTap{Axis::year, 1})));
}

TEST(Server, DisconnectDeregistersButSessionPersists) {
  Running r;
  {
    auto phone = r.join("phone", Role::proxy);
    ASSERT_TRUE(phone.wait_ack(phone.send(r.tap({0, 0}))));
    EXPECT_EQ(r.server.client_count(r.id), 1u);
  }
  EXPECT_TRUE(wait_for([&] { return r.server.client_count(r.id) == 0; }));
  auto again = r.join("phone2", Role::proxy);
  EXPECT_TRUE(again.replica().state().selection.contains({0, 0}));
}

TEST(Server, AllClientsSeeDeltasInTheSameOrder) {
  Running r;
  auto a = r.join("a", Role::proxy);
  auto b = r.join("b", Role::proxy);
  auto watcher1 = r.join("w1", Role::renderer);
  auto watcher2 = r.join("w2", Role::observer);
  for (std::uint32_t i = 0; i < 20; ++i) {
    a.send(r.tap({i % 3, i % 4}));
    b.send(AxisTap{Axis::location, i % 3});
  }
  auto revisions = [](const SessionClient& c) {
    std::vector<std::uint64_t> v;
    for (const auto& e : c.inbox()) {
      if (e.is<StateDelta>()) v.push_back(e.as<StateDelta>().revision);
    }
    return v;
  };
  for (auto* c : {&a, &b, &watcher1, &watcher2}) c->drain(200ms);
  const auto want = revisions(watcher1);
  EXPECT_EQ(want.size(), 40u);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(want[i], i + 1);
  for (auto* c : {&a, &b, &watcher2}) {
    EXPECT_EQ(revisions(*c), want);
    EXPECT_EQ(c->replica().digest(), r.server.digest(r.id));
  }
}

TEST(Server, SilentClientsAreDroppedAfterTimeout) {
  ServerOptions opts;
  opts.heartbeat_interval = 50ms;
  opts.silence_timeout = 300ms;
  Running r(opts);
  auto phone = r.join("phone", Role::proxy);
  EXPECT_TRUE(phone.pump_until([](const Envelope& e) { return e.is<Heartbeat>(); }, 1000ms));
  EXPECT_FALSE(phone.pump_until([](const Envelope&) { return false; }, 3000ms));
  EXPECT_TRUE(phone.transport().closed());
  EXPECT_TRUE(wait_for([&] { return r.server.client_count(r.id) == 0; }));
}

TEST(Server, ChattyClientsStayConnected) {
  ServerOptions opts;
  opts.heartbeat_interval = 50ms;
  opts.silence_timeout = 300ms;
  Running r(opts);
  auto phone = r.join("phone", Role::proxy);
  for (int i = 0; i < 10; ++i) {
    phone.send(Heartbeat{});
    phone.pump_until([](const Envelope&) { return false; }, 100ms);
  }
  EXPECT_FALSE(phone.transport().closed());
  EXPECT_EQ(r.server.client_count(r.id), 1u);
}

TEST(Server, WebSocketCarriesTheSameFrames) {
  namespace beast = boost::beast;
  namespace ws = beast::websocket;
  Running r;
  auto phone = r.join("phone", Role::proxy);

  boost::asio::io_context io;
  ws::stream<boost::asio::ip::tcp::socket> sock(io);
  sock.next_layer().connect({boost::asio::ip::make_address("127.0.0.1"), r.server.port()});
  sock.handshake("localhost", "/ws");
  sock.text(true);
  auto read = [&] {
    beast::flat_buffer buf;
    sock.read(buf);
    return decode(beast::buffers_to_string(buf.data()));
  };
  // Browsers may omit the trailing newline.
  auto hello = encode(Envelope{kProtocolVersion, r.id, "browser", 1, Hello{Role::renderer, {}}});
  hello.pop_back();
  sock.write(boost::asio::buffer(hello));
  const auto snap = read();
  ASSERT_TRUE(snap.is<FullSnapshot>());
  Replica replica;
  replica.apply(snap);

  ASSERT_TRUE(phone.wait_ack(phone.send(r.tap({1, 3}))));
  const auto delta = read();
  ASSERT_TRUE(delta.is<StateDelta>());
  replica.apply(delta);
  EXPECT_EQ(replica.digest(), r.server.digest(r.id));

  sock.write(boost::asio::buffer(encode(Envelope{kProtocolVersion, r.id, "browser", 2, ProjectRequest{Axis::year, 0}})));
  Envelope e = read();
  while (!e.is<Ack>()) e = read();
  EXPECT_EQ(e.as<Ack>().seq, 2u);
  sock.close(ws::close_code::normal);
}

TEST(Server, WebSocketHandshakeRejectsNonHello) {
  namespace beast = boost::beast;
  namespace ws = beast::websocket;
  Running r;
  boost::asio::io_context io;
  ws::stream<boost::asio::ip::tcp::socket> sock(io);
  sock.next_layer().connect({boost::asio::ip::make_address("127.0.0.1"), r.server.port()});
  sock.handshake("localhost", "/ws");
  sock.write(boost::asio::buffer(encode(Envelope{kProtocolVersion, r.id, "browser", 1, SummarizeRequest{}})));
  beast::flat_buffer buf;
  sock.read(buf);
  EXPECT_EQ(decode(beast::buffers_to_string(buf.data())).as<ErrorReply>().code, ErrorCode::ProtocolViolation);
  beast::flat_buffer more;
  boost::system::error_code ec;
  sock.read(more, ec);
  EXPECT_TRUE(ec);
}

TEST(Server, ServesStaticUi) {
  const auto ui = scratch_dir("ui");
  std::ofstream(ui / "index.html") << "<html>proxy</html>";
  std::ofstream(ui / "app.js") << "console.log(1)";
  ServerOptions opts;
  opts.ui_dir = ui;
  Running r(opts);
  EXPECT_EQ(http_get(r.server.port(), "/"), std::make_pair(200, std::string("<html>proxy</html>")));
  EXPECT_EQ(http_get(r.server.port(), "/app.js").second, "console.log(1)");
  EXPECT_EQ(http_get(r.server.port(), "/missing.css").first, 404);
  EXPECT_EQ(http_get(r.server.port(), "/../secret").first, 404);

  Running bare;
  EXPECT_EQ(http_get(bare.server.port(), "/").first, 404);
}

TEST(Server, PoseNoiseIsVisibleInTheLog) {
  auto run = [](double sigma, const std::filesystem::path& dir) {
    ServerOptions opts;
    opts.log_dir = dir;
    opts.pose_noise_sigma = sigma;
    opts.seed = 5;
    Running r(opts);
    auto phone = r.join("phone", Role::proxy);
    for (int i = 0; i < 200; ++i) EXPECT_TRUE(phone.wait_ack(phone.send(PoseUpdate{Pose::translation(0.1, 0.2, 0.3)})));
    const auto path = *r.server.log_path(r.id);
    r.server.stop();
    return path;
  };
  auto xs_of = [](const std::filesystem::path& path) {
    std::vector<double> xs;
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.rfind("@close", 0) == 0) break;
      const auto env = decode(line.substr(line.find(' ') + 1) + "\n");
      xs.push_back(env.as<PoseUpdate>().pose.position.x);
    }
    return xs;
  };
  const auto noisy = run(0.01, scratch_dir("noise-on"));
  const auto xs = xs_of(noisy);
  ASSERT_EQ(xs.size(), 200u);
  double mean = 0, var = 0;
  for (double x : xs) mean += x / xs.size();
  for (double x : xs) var += (x - mean) * (x - mean) / (xs.size() - 1);
  EXPECT_NEAR(mean, 0.1, 0.004);
  EXPECT_GT(std::sqrt(var), 0.007);
  EXPECT_LT(std::sqrt(var), 0.013);
  // The jittered frames are what was applied, so the log still replays.
  EXPECT_NO_THROW(replay(noisy));

  const auto quiet = xs_of(run(0.0, scratch_dir("noise-off")));
  for (double x : quiet) EXPECT_EQ(x, 0.1);
}

TEST(Server, StopWritesReplayableLog) {
  const auto dir = scratch_dir("server-log");
  ServerOptions opts;
  opts.log_dir = dir;
  Running r(opts);
  auto phone = r.join("phone", Role::proxy);
  for (std::uint32_t i = 0; i < 12; ++i) ASSERT_TRUE(phone.wait_ack(phone.send(r.tap({i % 3, i % 4}))));
  const auto live = r.server.digest(r.id);
  const auto path = *r.server.log_path(r.id);
  r.server.stop();
  const auto replayed = replay(path);
  EXPECT_EQ(replayed.digest, live);
  EXPECT_EQ(replayed.recorded_digest, live);
}
