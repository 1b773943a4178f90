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

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "holoproxy/error.hpp"
#include "holoproxy/interaction.hpp"
#include "holoproxy/model.hpp"
#include "holoproxy/reducer.hpp"
#include "holoproxy/wire.hpp"

namespace holoproxy {

struct ClientInfo {
  std::string id;
  Role role = Role::proxy;
  std::set<Capability> capabilities;
};

/// An outbound envelope resolved to one connected client.
struct Delivery {
  std::string client_id;
  Envelope envelope;
};

namespace detail {

inline ojson screen_to_json(const ScreenConfig& s) {
  auto rect = [](const PixelRect& r) { return ojson::array({r.x, r.y, r.width, r.height}); };
  ojson j;
  j["width"] = s.width_px;
  j["height"] = s.height_px;
  j["selection"] = rect(s.selection_area);
  j["exploration"] = rect(s.exploration_area);
  return j;
}

inline ScreenConfig screen_from_json(const nlohmann::json& j) {
  auto rect = [](const nlohmann::json& r) {
    if (!r.is_array() || r.size() != 4) throw Error(ErrorCode::CorruptLog, "screen rect");
    return PixelRect{r[0].get<std::int32_t>(), r[1].get<std::int32_t>(), r[2].get<std::int32_t>(),
                     r[3].get<std::int32_t>()};
  };
  ScreenConfig s{j.at("width").get<std::int32_t>(), j.at("height").get<std::int32_t>(),
                 rect(j.at("selection")), rect(j.at("exploration"))};
  s.validate();
  return s;
}

inline ojson cube_to_json(const DataCube& c) {
  ojson j;
  j["measure"] = c.measure_name();
  j["unit"] = c.measure_unit();
  j["locations"] = c.locations();
  j["years"] = c.years();
  j["values"] = c.values();
  return j;
}

inline DataCube cube_from_json(const nlohmann::json& j) {
  return DataCube::create(j.at("locations").get<std::vector<std::string>>(),
                          j.at("years").get<std::vector<std::string>>(),
                          j.at("values").get<std::vector<double>>(), j.at("measure").get<std::string>(),
                          j.at("unit").get<std::string>());
}

}  // namespace detail

inline constexpr std::string_view kLogMagic = "@holoproxy-log 1 ";
inline constexpr std::string_view kLogClose = "@close ";

/// Append-only session log: a header line carrying the session's cube and screen, one
/// `<index> <frame>` line per applied envelope (index from 1), and `@close <digest>` when
/// the session shut down cleanly.
class SessionLog {
 public:
  static SessionLog create(const std::filesystem::path& path, const std::string& session_id,
                           const DataCube& cube, const ScreenConfig& screen) {
    SessionLog log;
    log.out_.open(path, std::ios::binary | std::ios::trunc);
    if (!log.out_) throw Error(ErrorCode::Io, "cannot create log " + path.string());
    ojson header;
    header["session"] = session_id;
    header["screen"] = detail::screen_to_json(screen);
    header["cube"] = detail::cube_to_json(cube);
    log.out_ << kLogMagic << header.dump() << '\n';
    log.out_.flush();
    return log;
  }

  static SessionLog append_to(const std::filesystem::path& path) {
    SessionLog log;
    log.out_.open(path, std::ios::binary | std::ios::app);
    if (!log.out_) throw Error(ErrorCode::Io, "cannot reopen log " + path.string());
    return log;
  }

  void append(std::uint64_t index, const std::string& frame) {
    out_ << index << ' ' << frame;  // frame carries its own '\n'
    out_.flush();
  }

  void close(const std::string& digest) {
    out_ << kLogClose << digest << '\n';
    out_.flush();
    out_.close();
  }

 private:
  std::ofstream out_;
};

/// Single-writer owner of one session's state. Not thread-safe: callers serialize access.
class Session {
 public:
  Session(std::string id, DataCube cube, ScreenConfig screen,
          std::optional<std::filesystem::path> log_path = std::nullopt)
      : id_(std::move(id)),
        cube_(std::move(cube)),
        layout_(layout_chart(cube_)),
        screen_(std::move(screen)),
        state_(initial_state(cube_)) {
    screen_.validate();
    if (log_path) {
      log_path_ = *log_path;
      log_ = SessionLog::create(*log_path, id_, cube_, screen_);
    }
  }

  /// Rebuilds a session from its log (for example after a crash) and keeps appending to it.
  static Session recover(const std::filesystem::path& log_path);

  const std::string& id() const { return id_; }
  const DataCube& cube() const { return cube_; }
  const ChartLayout& layout() const { return layout_; }
  const ScreenConfig& screen() const { return screen_; }
  const SessionState& state() const { return state_; }
  std::string digest() const { return holoproxy::digest(state_); }
  std::uint64_t applied_count() const { return applied_; }
  const std::map<std::string, ClientInfo>& clients() const { return clients_; }
  const std::optional<std::filesystem::path>& log_path() const { return log_path_; }

  /// Registers (or re-registers) the sender of a Hello and returns its FullSnapshot.
  std::vector<Delivery> join(const Envelope& hello) {
    if (!hello.is<Hello>()) throw Error(ErrorCode::ProtocolViolation, "first message must be hello");
    if (hello.session_id != id_) throw Error(ErrorCode::UnknownSession, "no session '" + hello.session_id + "'");
    const auto& h = hello.as<Hello>();
    clients_[hello.client_id] = {hello.client_id, h.role, h.capabilities};
    return {{hello.client_id, stamp(Envelope{kProtocolVersion, id_, std::string(kServerClientId), 0,
                                             FullSnapshot{state_}})}};
  }

  void leave(const std::string& client_id) { clients_.erase(client_id); }

  /// Reduces, logs and routes one client envelope.
  std::vector<Delivery> submit(const Envelope& env) {
    if (env.session_id != id_) throw Error(ErrorCode::UnknownSession, "no session '" + env.session_id + "'");
    if (env.is<Hello>() || env.is<Heartbeat>()) return {};
    ++applied_;
    if (log_) log_->append(applied_, encode(env));
    auto result = reduce(state_, env, SessionContext{cube_, layout_, screen_});
    state_ = std::move(result.state);
    std::vector<Delivery> deliveries;
    for (auto& o : result.outbound) {
      Envelope stamped = stamp(std::move(o.envelope));
      switch (o.to.kind) {
        case Recipient::Kind::sender:
          deliveries.push_back({o.to.client_id, std::move(stamped)});
          break;
        case Recipient::Kind::everyone:
          for (const auto& [cid, info] : clients_) deliveries.push_back({cid, stamped});
          break;
        case Recipient::Kind::role:
          for (const auto& [cid, info] : clients_) {
            if (info.role == o.to.role) deliveries.push_back({cid, stamped});
          }
          break;
      }
    }
    return deliveries;
  }

  Envelope heartbeat() { return stamp(Envelope{kProtocolVersion, id_, std::string(kServerClientId), 0, Heartbeat{}}); }

  /// Writes the closing digest; further submits are not logged.
  void close() {
    if (log_) {
      log_->close(digest());
      log_.reset();
    }
  }

 private:
  Envelope stamp(Envelope env) {
    env.seq = ++outbound_seq_;
    return env;
  }

  std::string id_;
  DataCube cube_;
  ChartLayout layout_;
  ScreenConfig screen_;
  SessionState state_;
  std::uint64_t applied_ = 0;
  std::uint64_t outbound_seq_ = 0;
  std::map<std::string, ClientInfo> clients_;
  std::optional<std::filesystem::path> log_path_;
  std::optional<SessionLog> log_;
};

struct ReplayResult {
  std::string session_id;
  std::string digest;
  std::uint64_t applied = 0;
  /// Digest from the `@close` line, when the log was closed cleanly.
  std::optional<std::string> recorded_digest;
};

namespace detail {

struct ParsedLog {
  std::string session_id;
  std::optional<DataCube> cube;
  std::optional<ScreenConfig> screen;
  std::vector<Envelope> envelopes;
  std::optional<std::string> recorded_digest;
};

inline ParsedLog parse_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open log " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  ParsedLog log;
  if (text.empty()) return log;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto corrupt = [&](const std::string& what) {
    throw Error(ErrorCode::CorruptLog, "line " + std::to_string(line_no) + ": " + what);
  };
  while (pos < text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) corrupt("truncated final frame");
    std::string_view line(text.data() + pos, nl - pos);
    std::string_view with_newline(text.data() + pos, nl - pos + 1);
    pos = nl + 1;
    if (line_no == 1) {
      if (line.substr(0, kLogMagic.size()) != kLogMagic) corrupt("missing log header");
      try {
        auto header = nlohmann::json::parse(line.substr(kLogMagic.size()));
        log.session_id = header.at("session").get<std::string>();
        log.screen = screen_from_json(header.at("screen"));
        log.cube = cube_from_json(header.at("cube"));
      } catch (const std::exception& e) {
        corrupt(std::string("bad header: ") + e.what());
      }
      continue;
    }
    if (log.recorded_digest) corrupt("content after @close");
    if (line.substr(0, kLogClose.size()) == kLogClose) {
      log.recorded_digest = std::string(line.substr(kLogClose.size()));
      continue;
    }
    const auto space = line.find(' ');
    if (space == std::string_view::npos) corrupt("missing application index");
    auto index = parse_integer(line.substr(0, space));
    if (!index || *index != static_cast<long long>(log.envelopes.size() + 1)) corrupt("application index out of order");
    try {
      log.envelopes.push_back(decode(with_newline.substr(space + 1)));
    } catch (const Error& e) {
      corrupt(std::string("undecodable frame: ") + e.what());
    }
  }
  return log;
}

}  // namespace detail

/// Re-applies every logged envelope from the initial state. Throws CorruptLog for a frame
/// that does not decode (including a truncated last line) and DigestMismatch when the result
/// disagrees with the recorded closing digest. An empty file yields the digest of an empty
/// state.
inline ReplayResult replay(const std::filesystem::path& path) {
  auto log = detail::parse_log(path);
  ReplayResult result;
  if (!log.cube) {
    result.digest = digest(SessionState{});
    return result;
  }
  Session session(log.session_id, *log.cube, *log.screen);
  for (const auto& env : log.envelopes) {
    if (env.session_id != log.session_id) {
      throw Error(ErrorCode::CorruptLog, "frame for foreign session '" + env.session_id + "'");
    }
    session.submit(env);
  }
  result.session_id = log.session_id;
  result.digest = session.digest();
  result.applied = session.applied_count();
  result.recorded_digest = log.recorded_digest;
  if (log.recorded_digest && *log.recorded_digest != result.digest) {
    throw Error(ErrorCode::DigestMismatch,
                "replayed " + result.digest + " but log recorded " + *log.recorded_digest);
  }
  return result;
}

inline Session Session::recover(const std::filesystem::path& log_path) {
  auto log = detail::parse_log(log_path);
  if (!log.cube) throw Error(ErrorCode::CorruptLog, "log has no header");
  if (log.recorded_digest) throw Error(ErrorCode::CorruptLog, "log was closed; nothing to recover");
  Session session(log.session_id, *log.cube, *log.screen);
  for (const auto& env : log.envelopes) session.submit(env);
  session.log_path_ = log_path;
  session.log_ = SessionLog::append_to(log_path);
  return session;
}

}  // namespace holoproxy
