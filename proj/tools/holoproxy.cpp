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

// holoproxy: serve sessions, ingest datasets, run scenarios, replay logs and drive a
// headless scripted client.
//
// Exit codes: 0 success, 1 assertion or digest failure, 2 usage or I/O error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "holoproxy/client.hpp"
#include "holoproxy/holoproxy.hpp"
#include "holoproxy/server.hpp"

namespace {

using namespace holoproxy;

constexpr int kOk = 0;
constexpr int kFailed = 1;
constexpr int kUsage = 2;

int report_error(const std::exception& e, int code) {
  std::cerr << "holoproxy: " << e.what() << "\n";
  return code;
}

DataCube load_cube_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open dataset " + path);
  return load_dataset(in);
}

// ----------------------------------------------------------------------------- serve

struct ServeArgs {
  std::uint16_t port = 7420;
  std::string bind = "127.0.0.1";
  std::string log_dir = "logs";
  std::string dataset;
  double seed_noise = 0.0;
  std::uint64_t seed = 1;
  std::string ui;
  std::int32_t width = 1000;
  std::int32_t height = 500;
};

int cmd_serve(ServeArgs a) {
  if (const char* env = std::getenv("HOLOPROXY_PORT")) {
    auto p = detail::parse_integer(env);
    if (!p || *p < 0 || *p > 65535) {
      std::cerr << "holoproxy: HOLOPROXY_PORT is not a port number\n";
      return kUsage;
    }
    a.port = static_cast<std::uint16_t>(*p);
  }
  try {
    DataCube cube = a.dataset.empty() ? synthetic_cube(7, 10, a.seed) : load_cube_file(a.dataset);
    ServerOptions opts;
    opts.bind_address = a.bind;
    opts.port = a.port;
    opts.log_dir = a.log_dir;
    opts.pose_noise_sigma = a.seed_noise;
    opts.seed = a.seed;
    if (!a.ui.empty()) opts.ui_dir = a.ui;

    // Signals are taken synchronously on this thread; block them before the I/O thread starts.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    Server server(opts);
    const auto id = server.create_session(std::move(cube), ScreenConfig::landscape(a.width, a.height));
    server.start();
    std::cout << "session " << id << "\n"
              << "listening " << a.bind << ":" << server.port() << "\n"
              << "log " << server.log_path(id)->string() << std::endl;

    int sig = 0;
    sigwait(&signals, &sig);
    server.stop();
    std::cout << "closed " << id << " " << server.digest(id) << std::endl;
    return kOk;
  } catch (const std::exception& e) {
    return report_error(e, kUsage);
  }
}

// ----------------------------------------------------------------------------- ingest

int cmd_ingest(const std::string& path, bool canonical) {
  try {
    const auto cube = load_cube_file(path);
    if (canonical) {
      std::cout << canonical_serialization(cube);
      return kOk;
    }
    const auto shape = cube.shape();
    std::cout << "measure " << cube.measure_name() << "\n"
              << "unit " << cube.measure_unit() << "\n"
              << "locations " << shape.locations << "\n"
              << "years " << shape.years << "\n"
              << "min " << detail::format_double(cube.min_value()) << "\n"
              << "max " << detail::format_double(cube.max_value()) << "\n"
              << "digest " << cube_digest(cube) << "\n";
    return kOk;
  } catch (const std::exception& e) {
    return report_error(e, kUsage);
  }
}

// ----------------------------------------------------------------------------- run

int cmd_run(const std::string& path, std::optional<std::uint64_t> seed, const std::string& format,
            const std::string& out, const std::string& log) {
  ScenarioReport report;
  try {
    const auto scenario = load_scenario(path);
    RunOptions opts;
    opts.seed = seed;
    if (!log.empty()) opts.log_path = log;
    report = run_scenario(scenario, opts);
  } catch (const std::exception& e) {
    return report_error(e, kUsage);
  }
  const auto text = format == "json" ? format_json(report) : format_text(report);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out);
    if (!(f << text)) {
      std::cerr << "holoproxy: cannot write " << out << "\n";
      return kUsage;
    }
  }
  return report.passed ? kOk : kFailed;
}

// ----------------------------------------------------------------------------- replay

int cmd_replay(const std::string& path) {
  if (!std::filesystem::is_regular_file(path)) {
    std::cerr << "holoproxy: Io: no such log " << path << "\n";
    return kUsage;
  }
  try {
    const auto r = replay(path);
    std::cout << "session " << (r.session_id.empty() ? "-" : r.session_id) << "\n"
              << "applied " << r.applied << "\n"
              << "digest " << r.digest << "\n"
              << "recorded " << r.recorded_digest.value_or("-") << "\n";
    return kOk;
  } catch (const Error& e) {
    const bool failed = e.code() == ErrorCode::DigestMismatch || e.code() == ErrorCode::CorruptLog;
    return report_error(e, failed ? kFailed : kUsage);
  } catch (const std::exception& e) {
    return report_error(e, kUsage);
  }
}

// ----------------------------------------------------------------------------- client

// One command per --do: tap X Y | tap-cell L Y | axis location|year I | pose X Y Z [W X Y Z]
// | project location|year I | summarize | clear-projection | wait MS
Payload parse_command(const std::string& cmd, std::chrono::milliseconds& wait) {
  std::istringstream in(cmd);
  std::string verb;
  in >> verb;
  auto axis = [&] {
    std::string s;
    in >> s;
    auto a = axis_from_string(s);
    if (!a) throw Error(ErrorCode::InvalidArgument, "bad axis in '" + cmd + "'");
    return *a;
  };
  auto done = [&](Payload p) {
    if (in.fail()) throw Error(ErrorCode::InvalidArgument, "bad command '" + cmd + "'");
    std::string extra;
    if (in >> extra) throw Error(ErrorCode::InvalidArgument, "trailing input in '" + cmd + "'");
    return p;
  };
  if (verb == "tap") {
    PointPx p;
    in >> p.x >> p.y;
    return done(TapScreen{p});
  }
  if (verb == "axis") {
    const auto a = axis();
    std::uint32_t i = 0;
    in >> i;
    return done(AxisTap{a, i});
  }
  if (verb == "project") {
    const auto a = axis();
    std::uint32_t i = 0;
    in >> i;
    return done(ProjectRequest{a, i});
  }
  if (verb == "pose") {
    Pose p;
    in >> p.position.x >> p.position.y >> p.position.z;
    double w;
    if (in >> w) {
      p.orientation.w = w;
      in >> p.orientation.x >> p.orientation.y >> p.orientation.z;
    } else {
      in.clear();
    }
    return done(PoseUpdate{p});
  }
  if (verb == "summarize") return done(SummarizeRequest{});
  if (verb == "clear-projection") return done(ClearProjection{});
  if (verb == "wait") {
    long ms = 0;
    in >> ms;
    done(Heartbeat{});
    wait = std::chrono::milliseconds(ms);
    return Heartbeat{};
  }
  throw Error(ErrorCode::InvalidArgument, "unknown command '" + cmd + "'");
}

struct ClientArgs {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7420;
  std::string session;
  std::string id = "cli";
  std::string role = "proxy";
  std::vector<std::string> commands;
  bool verbose = false;
};

int cmd_client(ClientArgs a) {
  if (const char* env = std::getenv("HOLOPROXY_PORT")) {
    if (auto p = detail::parse_integer(env); p && *p > 0 && *p <= 65535) a.port = static_cast<std::uint16_t>(*p);
  }
  const auto role = role_from_string(a.role);
  if (!role) {
    std::cerr << "holoproxy: unknown role " << a.role << "\n";
    return kUsage;
  }
  try {
    SessionClient client(a.host, a.port, a.session, a.id);
    auto log_frame = [&](const Envelope& e) {
      if (a.verbose) std::cout << "< " << encode(e);
    };
    client.hello(*role, {});
    if (!client.pump_until([&](const Envelope& e) {
          log_frame(e);
          if (e.is<ErrorReply>()) throw Error(e.as<ErrorReply>().code, e.as<ErrorReply>().message);
          return e.is<FullSnapshot>();
        })) {
      std::cerr << "holoproxy: Timeout: no snapshot from server\n";
      return kUsage;
    }
    int errors = 0;
    for (const auto& cmd : a.commands) {
      std::chrono::milliseconds wait{0};
      auto payload = parse_command(cmd, wait);
      if (wait.count() > 0) {
        client.pump_until([&](const Envelope& e) { log_frame(e); return false; }, wait);
        continue;
      }
      const auto seq = client.send(std::move(payload));
      const bool acked = client.pump_until(
          [&](const Envelope& e) {
            log_frame(e);
            if (e.is<ErrorReply>() && e.as<ErrorReply>().ref_seq == seq) {
              std::cerr << "error " << to_string(e.as<ErrorReply>().code) << ": " << e.as<ErrorReply>().message
                        << "\n";
              ++errors;
              return true;
            }
            return e.is<Ack>() && e.as<Ack>().seq == seq;
          });
      if (!acked) {
        std::cerr << "holoproxy: Timeout: no reply to '" << cmd << "'\n";
        return kUsage;
      }
    }
    client.drain(std::chrono::milliseconds(200));
    std::cout << "digest " << client.replica().digest() << "\n";
    return errors == 0 ? kOk : kFailed;
  } catch (const std::exception& e) {
    return report_error(e, kUsage);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HoloProxy session server, scenario runner and tools"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "holoproxy 0.1.0");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Serve one session over a dataset");
  s->add_option("--port", serve.port, "TCP port (HOLOPROXY_PORT overrides)");
  s->add_option("--bind", serve.bind, "Bind address");
  s->add_option("--log-dir", serve.log_dir, "Directory for session logs");
  s->add_option("--dataset", serve.dataset, "CSV with location,year,value (default: seeded synthetic cube)");
  s->add_option("--seed-noise", serve.seed_noise, "Std. deviation in meters of pose jitter")->check(CLI::NonNegativeNumber);
  s->add_option("--seed", serve.seed, "Seed for jitter and the synthetic cube");
  s->add_option("--ui", serve.ui, "Directory of static UI assets served over HTTP")->check(CLI::ExistingDirectory);
  s->add_option("--width", serve.width, "Proxy screen width in px");
  s->add_option("--height", serve.height, "Proxy screen height in px");

  std::string ingest_path;
  bool canonical = false;
  auto* i = app.add_subcommand("ingest", "Validate a dataset and print its shape and digest");
  i->add_option("csv", ingest_path)->required();
  i->add_flag("--canonical", canonical, "Print the canonical serialization instead");

  std::string run_path, run_format = "text", run_out, run_log;
  std::optional<std::uint64_t> run_seed;
  auto* r = app.add_subcommand("run", "Run a scenario file");
  r->add_option("scenario", run_path)->required();
  r->add_option("--seed", run_seed, "Override the scenario seed");
  r->add_option("--format", run_format)->check(CLI::IsMember({"text", "json"}));
  r->add_option("--out", run_out, "Write the report here instead of stdout");
  r->add_option("--log", run_log, "Write the session log here");

  std::string replay_path;
  auto* p = app.add_subcommand("replay", "Replay a session log and check its closing digest");
  p->add_option("log", replay_path)->required();

  ClientArgs client;
  auto* c = app.add_subcommand("client", "Join a session and send scripted commands");
  c->add_option("--host", client.host);
  c->add_option("--port", client.port, "Server port (HOLOPROXY_PORT overrides)");
  c->add_option("--session", client.session)->required();
  c->add_option("--id", client.id, "Client id");
  c->add_option("--role", client.role)->check(CLI::IsMember({"proxy", "renderer", "observer"}));
  c->add_option("--do", client.commands, "Command to send; repeatable");
  c->add_flag("-v,--verbose", client.verbose, "Print received frames");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  if (s->parsed()) return cmd_serve(serve);
  if (i->parsed()) return cmd_ingest(ingest_path, canonical);
  if (r->parsed()) return cmd_run(run_path, run_seed, run_format, run_out, run_log);
  if (p->parsed()) return cmd_replay(replay_path);
  if (c->parsed()) return cmd_client(client);
  return kUsage;
}
