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

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "holoproxy/anchor.hpp"
#include "holoproxy/error.hpp"
#include "holoproxy/interaction.hpp"
#include "holoproxy/model.hpp"
#include "holoproxy/sha256.hpp"

namespace holoproxy {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::string_view kServerClientId = "server";

enum class Role { proxy, renderer, observer };

enum class Capability { precise_input, vibrotactile, high_res_display, spatial_display, stereo };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::proxy: return "proxy";
    case Role::renderer: return "renderer";
    case Role::observer: return "observer";
  }
  return "";
}

constexpr std::string_view to_string(Capability c) {
  switch (c) {
    case Capability::precise_input: return "precise_input";
    case Capability::vibrotactile: return "vibrotactile";
    case Capability::high_res_display: return "high_res_display";
    case Capability::spatial_display: return "spatial_display";
    case Capability::stereo: return "stereo";
  }
  return "";
}

inline std::optional<Role> role_from_string(std::string_view s) {
  for (auto r : {Role::proxy, Role::renderer, Role::observer}) {
    if (to_string(r) == s) return r;
  }
  return std::nullopt;
}

inline std::optional<Capability> capability_from_string(std::string_view s) {
  for (auto c : {Capability::precise_input, Capability::vibrotactile, Capability::high_res_display,
                 Capability::spatial_display, Capability::stereo}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

/// Client and session ids: 1-64 chars of [A-Za-z0-9._:@-].
inline bool valid_token(std::string_view s) {
  if (s.empty() || s.size() > 64) return false;
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '_' || c == ':' || c == '@' || c == '-';
    if (!ok) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Session state

/// LWW key of the current proxy pose. (0, "") is below every real update.
struct PoseWriter {
  std::uint64_t seq = 0;
  std::string client_id;
  friend auto operator<=>(const PoseWriter&, const PoseWriter&) = default;
};

/// Authoritative shared state of one session. Replicas rebuild it from a FullSnapshot
/// followed by StateDeltas.
struct SessionState {
  std::string cube_digest;
  std::uint64_t revision = 0;
  SelectionState selection;
  Pose proxy_pose;
  PoseWriter pose_writer;
  std::optional<Projection2D> projection;
  std::optional<SummaryStats> summary;
  /// Highest seq applied per client.
  std::map<std::string, std::uint64_t> watermarks;

  std::uint64_t watermark(const std::string& client_id) const {
    auto it = watermarks.find(client_id);
    return it == watermarks.end() ? 0 : it->second;
  }

  friend bool operator==(const SessionState&, const SessionState&) = default;
};

inline SessionState initial_state(const DataCube& cube) {
  SessionState s;
  s.cube_digest = cube_digest(cube);
  return s;
}

// ---------------------------------------------------------------------------
// Payloads

struct Hello {
  Role role = Role::proxy;
  std::set<Capability> capabilities;
  friend bool operator==(const Hello&, const Hello&) = default;
};
struct TapScreen {
  PointPx point;
  friend bool operator==(const TapScreen&, const TapScreen&) = default;
};
struct AxisTap {
  Axis axis = Axis::location;
  std::uint32_t index = 0;
  friend bool operator==(const AxisTap&, const AxisTap&) = default;
};
struct PoseUpdate {
  Pose pose;
  friend bool operator==(const PoseUpdate&, const PoseUpdate&) = default;
};
struct ProjectRequest {
  Axis axis = Axis::location;
  std::uint32_t index = 0;
  friend bool operator==(const ProjectRequest&, const ProjectRequest&) = default;
};
struct SummarizeRequest {
  friend bool operator==(const SummarizeRequest&, const SummarizeRequest&) = default;
};
struct ClearProjection {
  friend bool operator==(const ClearProjection&, const ClearProjection&) = default;
};
struct HapticPulse {
  HapticCommand command;
  friend bool operator==(const HapticPulse&, const HapticPulse&) = default;
};

namespace change {
struct Select {
  std::vector<CellId> cells;
  friend bool operator==(const Select&, const Select&) = default;
};
struct Deselect {
  std::vector<CellId> cells;
  friend bool operator==(const Deselect&, const Deselect&) = default;
};
struct SetPose {
  Pose pose;
  PoseWriter writer;
  friend bool operator==(const SetPose&, const SetPose&) = default;
};
struct SetProjection {
  Projection2D projection;
  friend bool operator==(const SetProjection&, const SetProjection&) = default;
};
struct ClearProjection {
  friend bool operator==(const ClearProjection&, const ClearProjection&) = default;
};
struct SetSummary {
  SummaryStats summary;
  friend bool operator==(const SetSummary&, const SetSummary&) = default;
};
struct SetWatermark {
  std::string client_id;
  std::uint64_t seq = 0;
  friend bool operator==(const SetWatermark&, const SetWatermark&) = default;
};
}  // namespace change

using Change = std::variant<change::Select, change::Deselect, change::SetPose, change::SetProjection,
                            change::ClearProjection, change::SetSummary, change::SetWatermark>;

/// Changes that take a replica from `revision - 1` to `revision`.
struct StateDelta {
  std::uint64_t revision = 0;
  std::vector<Change> changes;
  friend bool operator==(const StateDelta&, const StateDelta&) = default;
};
struct FullSnapshot {
  SessionState state;
  friend bool operator==(const FullSnapshot&, const FullSnapshot&) = default;
};
struct Ack {
  std::uint64_t seq = 0;
  friend bool operator==(const Ack&, const Ack&) = default;
};
struct ErrorReply {
  ErrorCode code = ErrorCode::ProtocolViolation;
  std::uint64_t ref_seq = 0;
  std::string message;
  friend bool operator==(const ErrorReply&, const ErrorReply&) = default;
};
struct Heartbeat {
  friend bool operator==(const Heartbeat&, const Heartbeat&) = default;
};

using Payload = std::variant<Hello, TapScreen, AxisTap, PoseUpdate, ProjectRequest, SummarizeRequest,
                             ClearProjection, HapticPulse, StateDelta, FullSnapshot, Ack, ErrorReply,
                             Heartbeat>;

template <typename T>
constexpr std::string_view payload_tag() {
  if constexpr (std::is_same_v<T, Hello>) return "hello";
  else if constexpr (std::is_same_v<T, TapScreen>) return "tap_screen";
  else if constexpr (std::is_same_v<T, AxisTap>) return "axis_tap";
  else if constexpr (std::is_same_v<T, PoseUpdate>) return "pose_update";
  else if constexpr (std::is_same_v<T, ProjectRequest>) return "project_request";
  else if constexpr (std::is_same_v<T, SummarizeRequest>) return "summarize_request";
  else if constexpr (std::is_same_v<T, ClearProjection>) return "clear_projection";
  else if constexpr (std::is_same_v<T, HapticPulse>) return "haptic_pulse";
  else if constexpr (std::is_same_v<T, StateDelta>) return "state_delta";
  else if constexpr (std::is_same_v<T, FullSnapshot>) return "full_snapshot";
  else if constexpr (std::is_same_v<T, Ack>) return "ack";
  else if constexpr (std::is_same_v<T, ErrorReply>) return "error";
  else if constexpr (std::is_same_v<T, Heartbeat>) return "heartbeat";
}

inline std::string_view payload_tag(const Payload& p) {
  return std::visit([](const auto& v) { return payload_tag<std::decay_t<decltype(v)>>(); }, p);
}

struct Envelope {
  int protocol_version = kProtocolVersion;
  std::string session_id;
  std::string client_id;
  std::uint64_t seq = 0;
  Payload payload;

  template <typename T>
  bool is() const { return std::holds_alternative<T>(payload); }
  template <typename T>
  const T& as() const { return std::get<T>(payload); }

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

// ---------------------------------------------------------------------------
// Canonical JSON

using ojson = nlohmann::ordered_json;

namespace detail {

[[noreturn]] inline void malformed(const std::string& what) { throw Error(ErrorCode::MalformedFrame, what); }

/// Strict object reader: every key must be consumed exactly once.
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string_view context) : j_(j), context_(context) {
    if (!j.is_object()) malformed(context_ + ": expected object");
  }

  const nlohmann::json& get(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) malformed(context_ + ": missing '" + key + "'");
    ++consumed_;
    return *it;
  }

  void finish() const {
    if (consumed_ != j_.size()) malformed(context_ + ": unexpected fields");
  }

 private:
  const nlohmann::json& j_;
  std::string context_;
  std::size_t consumed_ = 0;
};

inline double read_number(const nlohmann::json& j, std::string_view what) {
  if (!j.is_number()) malformed(std::string(what) + ": expected number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) malformed(std::string(what) + ": not finite");
  return v;
}

inline std::uint64_t read_uint(const nlohmann::json& j, std::string_view what) {
  if (!j.is_number_unsigned()) malformed(std::string(what) + ": expected unsigned integer");
  return j.get<std::uint64_t>();
}

inline std::uint32_t read_u32(const nlohmann::json& j, std::string_view what) {
  const auto v = read_uint(j, what);
  if (v > UINT32_MAX) malformed(std::string(what) + ": out of range");
  return static_cast<std::uint32_t>(v);
}

inline std::string read_string(const nlohmann::json& j, std::string_view what) {
  if (!j.is_string()) malformed(std::string(what) + ": expected string");
  return j.get<std::string>();
}

inline std::string read_token(const nlohmann::json& j, std::string_view what) {
  auto s = read_string(j, what);
  if (!valid_token(s)) malformed(std::string(what) + ": invalid token");
  return s;
}

inline Axis read_axis(const nlohmann::json& j) {
  auto a = axis_from_string(read_string(j, "axis"));
  if (!a) malformed("axis: expected 'location' or 'year'");
  return *a;
}

inline ojson to_json(CellId c) { return ojson::array({c.location, c.year}); }

inline CellId read_cell(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 2) malformed("cell: expected [location, year]");
  return {read_u32(j[0], "cell.location"), read_u32(j[1], "cell.year")};
}

inline ojson to_json(const std::vector<CellId>& cells) {
  ojson a = ojson::array();
  for (const auto& c : cells) a.push_back(to_json(c));
  return a;
}

inline std::vector<CellId> read_cells(const nlohmann::json& j) {
  if (!j.is_array()) malformed("cells: expected array");
  std::vector<CellId> out;
  for (const auto& c : j) out.push_back(read_cell(c));
  return out;
}

inline ojson to_json(const Pose& p) {
  ojson j;
  j["p"] = ojson::array({p.position.x, p.position.y, p.position.z});
  j["q"] = ojson::array({p.orientation.w, p.orientation.x, p.orientation.y, p.orientation.z});
  return j;
}

inline Pose read_pose(const nlohmann::json& j) {
  Fields f(j, "pose");
  const auto& p = f.get("p");
  const auto& q = f.get("q");
  f.finish();
  if (!p.is_array() || p.size() != 3 || !q.is_array() || q.size() != 4) malformed("pose: bad arity");
  Pose pose{{read_number(p[0], "p"), read_number(p[1], "p"), read_number(p[2], "p")},
            {read_number(q[0], "q"), read_number(q[1], "q"), read_number(q[2], "q"), read_number(q[3], "q")}};
  if (!pose.valid()) malformed("pose: orientation is not a unit quaternion");
  return pose;
}

inline ojson to_json(const Projection2D& p) {
  ojson j;
  j["axis"] = to_string(p.series_axis);
  j["index"] = p.fixed_index;
  j["labels"] = p.labels;
  j["values"] = p.values;
  j["range"] = ojson::array({p.value_range.min, p.value_range.max});
  return j;
}

inline Projection2D read_projection(const nlohmann::json& j) {
  Fields f(j, "projection");
  Projection2D p;
  p.series_axis = read_axis(f.get("axis"));
  p.fixed_index = read_u32(f.get("index"), "projection.index");
  const auto& labels = f.get("labels");
  const auto& values = f.get("values");
  const auto& range = f.get("range");
  f.finish();
  if (!labels.is_array() || !values.is_array() || labels.size() != values.size()) {
    malformed("projection: labels and values must be arrays of equal length");
  }
  for (const auto& l : labels) p.labels.push_back(read_string(l, "projection.label"));
  for (const auto& v : values) p.values.push_back(read_number(v, "projection.value"));
  if (!range.is_array() || range.size() != 2) malformed("projection.range: expected [min, max]");
  p.value_range = {read_number(range[0], "range"), read_number(range[1], "range")};
  return p;
}

inline ojson to_json(const SummaryStats& s) {
  ojson j;
  j["count"] = s.count;
  j["min"] = s.min ? ojson(*s.min) : ojson(nullptr);
  j["max"] = s.max ? ojson(*s.max) : ojson(nullptr);
  j["mean"] = s.mean ? ojson(*s.mean) : ojson(nullptr);
  j["sum"] = s.sum;
  return j;
}

inline SummaryStats read_summary(const nlohmann::json& j) {
  Fields f(j, "summary");
  SummaryStats s;
  s.count = read_uint(f.get("count"), "summary.count");
  auto opt = [](const nlohmann::json& v, const char* what) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return read_number(v, what);
  };
  s.min = opt(f.get("min"), "summary.min");
  s.max = opt(f.get("max"), "summary.max");
  s.mean = opt(f.get("mean"), "summary.mean");
  s.sum = read_number(f.get("sum"), "summary.sum");
  f.finish();
  const bool have = s.min && s.max && s.mean;
  const bool none = !s.min && !s.max && !s.mean;
  if ((s.count > 0 && !have) || (s.count == 0 && !none)) malformed("summary: count and extrema disagree");
  return s;
}

inline ojson to_json(const HapticCommand& h) {
  ojson j;
  j["amplitude"] = h.amplitude;
  j["duration_ms"] = h.duration_ms;
  return j;
}

inline HapticCommand read_haptic(const nlohmann::json& j) {
  Fields f(j, "haptic");
  HapticCommand h;
  h.amplitude = read_number(f.get("amplitude"), "amplitude");
  h.duration_ms = read_u32(f.get("duration_ms"), "duration_ms");
  f.finish();
  if (!h.valid()) malformed("haptic: amplitude or duration out of bounds");
  return h;
}

}  // namespace detail

/// JSON for a session state as carried in snapshots; key order is fixed, selection sorted,
/// watermarks sorted by client id.
inline ojson to_json(const SessionState& s) {
  using detail::to_json;
  ojson j;
  j["cube"] = s.cube_digest;
  j["revision"] = s.revision;
  j["selection"] = to_json(std::vector<CellId>(s.selection.selected.begin(), s.selection.selected.end()));
  j["pose"] = to_json(s.proxy_pose);
  j["pose_writer"] = ojson::array({s.pose_writer.seq, s.pose_writer.client_id});
  j["projection"] = s.projection ? to_json(*s.projection) : ojson(nullptr);
  j["summary"] = s.summary ? to_json(*s.summary) : ojson(nullptr);
  ojson marks = ojson::array();
  for (const auto& [client, seq] : s.watermarks) marks.push_back(ojson::array({client, seq}));
  j["watermarks"] = std::move(marks);
  return j;
}

inline SessionState session_state_from_json(const nlohmann::json& j) {
  using namespace detail;
  Fields f(j, "state");
  SessionState s;
  s.cube_digest = read_string(f.get("cube"), "cube");
  s.revision = read_uint(f.get("revision"), "revision");
  for (const auto& c : read_cells(f.get("selection"))) {
    if (!s.selection.selected.insert(c).second) malformed("selection: duplicate cell");
  }
  s.proxy_pose = read_pose(f.get("pose"));
  const auto& writer = f.get("pose_writer");
  if (!writer.is_array() || writer.size() != 2) malformed("pose_writer: expected [seq, client]");
  s.pose_writer.seq = read_uint(writer[0], "pose_writer.seq");
  s.pose_writer.client_id = read_string(writer[1], "pose_writer.client");
  if (const auto& p = f.get("projection"); !p.is_null()) s.projection = read_projection(p);
  if (const auto& sm = f.get("summary"); !sm.is_null()) s.summary = read_summary(sm);
  const auto& marks = f.get("watermarks");
  f.finish();
  if (!marks.is_array()) malformed("watermarks: expected array");
  for (const auto& m : marks) {
    if (!m.is_array() || m.size() != 2) malformed("watermark: expected [client, seq]");
    if (!s.watermarks.emplace(read_token(m[0], "watermark.client"), read_uint(m[1], "watermark.seq")).second) {
      malformed("watermarks: duplicate client");
    }
  }
  return s;
}

/// The bytes digest() hashes: the snapshot JSON without the delivery revision, which counts
/// deltas rather than describing state.
inline std::string canonical_serialization(const SessionState& s) {
  auto j = to_json(s);
  j.erase("revision");
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

/// SHA-256 (hex) of the canonical state serialization.
inline std::string digest(const SessionState& s) { return sha256_hex(canonical_serialization(s)); }

namespace detail {

inline ojson change_to_json(const Change& c) {
  ojson j;
  std::visit(
      [&j](const auto& ch) {
        using T = std::decay_t<decltype(ch)>;
        if constexpr (std::is_same_v<T, change::Select>) {
          j["op"] = "select";
          j["cells"] = to_json(ch.cells);
        } else if constexpr (std::is_same_v<T, change::Deselect>) {
          j["op"] = "deselect";
          j["cells"] = to_json(ch.cells);
        } else if constexpr (std::is_same_v<T, change::SetPose>) {
          j["op"] = "pose";
          j["pose"] = to_json(ch.pose);
          j["writer"] = ojson::array({ch.writer.seq, ch.writer.client_id});
        } else if constexpr (std::is_same_v<T, change::SetProjection>) {
          j["op"] = "projection";
          j["projection"] = to_json(ch.projection);
        } else if constexpr (std::is_same_v<T, change::ClearProjection>) {
          j["op"] = "clear_projection";
        } else if constexpr (std::is_same_v<T, change::SetSummary>) {
          j["op"] = "summary";
          j["summary"] = to_json(ch.summary);
        } else if constexpr (std::is_same_v<T, change::SetWatermark>) {
          j["op"] = "watermark";
          j["client"] = ch.client_id;
          j["seq"] = ch.seq;
        }
      },
      c);
  return j;
}

inline Change change_from_json(const nlohmann::json& j) {
  Fields f(j, "change");
  const auto op = read_string(f.get("op"), "change.op");
  Change out;
  if (op == "select") {
    out = change::Select{read_cells(f.get("cells"))};
  } else if (op == "deselect") {
    out = change::Deselect{read_cells(f.get("cells"))};
  } else if (op == "pose") {
    change::SetPose c;
    c.pose = read_pose(f.get("pose"));
    const auto& w = f.get("writer");
    if (!w.is_array() || w.size() != 2) malformed("writer: expected [seq, client]");
    c.writer = {read_uint(w[0], "writer.seq"), read_token(w[1], "writer.client")};
    out = std::move(c);
  } else if (op == "projection") {
    out = change::SetProjection{read_projection(f.get("projection"))};
  } else if (op == "clear_projection") {
    out = change::ClearProjection{};
  } else if (op == "summary") {
    out = change::SetSummary{read_summary(f.get("summary"))};
  } else if (op == "watermark") {
    change::SetWatermark c;
    c.client_id = read_token(f.get("client"), "watermark.client");
    c.seq = read_uint(f.get("seq"), "watermark.seq");
    out = std::move(c);
  } else {
    malformed("change: unknown op '" + op + "'");
  }
  f.finish();
  return out;
}

inline ojson payload_body(const Payload& payload) {
  ojson b = ojson::object();
  std::visit(
      [&b](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Hello>) {
          b["role"] = to_string(p.role);
          ojson caps = ojson::array();
          for (auto c : p.capabilities) caps.push_back(to_string(c));
          b["capabilities"] = std::move(caps);
        } else if constexpr (std::is_same_v<T, TapScreen>) {
          b["x"] = p.point.x;
          b["y"] = p.point.y;
        } else if constexpr (std::is_same_v<T, AxisTap> || std::is_same_v<T, ProjectRequest>) {
          b["axis"] = to_string(p.axis);
          b["index"] = p.index;
        } else if constexpr (std::is_same_v<T, PoseUpdate>) {
          b["pose"] = to_json(p.pose);
        } else if constexpr (std::is_same_v<T, HapticPulse>) {
          b["haptic"] = to_json(p.command);
        } else if constexpr (std::is_same_v<T, StateDelta>) {
          b["revision"] = p.revision;
          ojson changes = ojson::array();
          for (const auto& c : p.changes) changes.push_back(change_to_json(c));
          b["changes"] = std::move(changes);
        } else if constexpr (std::is_same_v<T, FullSnapshot>) {
          b["state"] = holoproxy::to_json(p.state);
        } else if constexpr (std::is_same_v<T, Ack>) {
          b["seq"] = p.seq;
        } else if constexpr (std::is_same_v<T, ErrorReply>) {
          b["code"] = to_string(p.code);
          b["ref_seq"] = p.ref_seq;
          b["message"] = p.message;
        }
      },
      payload);
  return b;
}

inline Payload payload_from_json(std::string_view tag, const nlohmann::json& body) {
  Fields f(body, std::string(tag));
  Payload out;
  if (tag == "hello") {
    Hello h;
    auto role = role_from_string(read_string(f.get("role"), "role"));
    if (!role) malformed("hello: unknown role");
    h.role = *role;
    const auto& caps = f.get("capabilities");
    if (!caps.is_array()) malformed("hello: capabilities must be an array");
    for (const auto& c : caps) {
      auto cap = capability_from_string(read_string(c, "capability"));
      if (!cap) malformed("hello: unknown capability");
      if (!h.capabilities.insert(*cap).second) malformed("hello: duplicate capability");
    }
    out = std::move(h);
  } else if (tag == "tap_screen") {
    const double x = read_number(f.get("x"), "x");
    const double y = read_number(f.get("y"), "y");
    out = TapScreen{{x, y}};
  } else if (tag == "axis_tap" || tag == "project_request") {
    const Axis axis = read_axis(f.get("axis"));
    const auto index = read_u32(f.get("index"), "index");
    if (tag == "axis_tap") out = AxisTap{axis, index};
    else out = ProjectRequest{axis, index};
  } else if (tag == "pose_update") {
    out = PoseUpdate{read_pose(f.get("pose"))};
  } else if (tag == "summarize_request") {
    out = SummarizeRequest{};
  } else if (tag == "clear_projection") {
    out = ClearProjection{};
  } else if (tag == "haptic_pulse") {
    out = HapticPulse{read_haptic(f.get("haptic"))};
  } else if (tag == "state_delta") {
    StateDelta d;
    d.revision = read_uint(f.get("revision"), "revision");
    const auto& changes = f.get("changes");
    if (!changes.is_array()) malformed("state_delta: changes must be an array");
    for (const auto& c : changes) d.changes.push_back(change_from_json(c));
    out = std::move(d);
  } else if (tag == "full_snapshot") {
    out = FullSnapshot{session_state_from_json(f.get("state"))};
  } else if (tag == "ack") {
    out = Ack{read_uint(f.get("seq"), "ack.seq")};
  } else if (tag == "error") {
    ErrorReply e;
    ErrorCode code{};
    if (!error_code_from_string(read_string(f.get("code"), "code"), code)) malformed("error: unknown code");
    e.code = code;
    e.ref_seq = read_uint(f.get("ref_seq"), "ref_seq");
    e.message = read_string(f.get("message"), "message");
    out = std::move(e);
  } else if (tag == "heartbeat") {
    out = Heartbeat{};
  } else {
    throw Error(ErrorCode::UnknownPayloadTag, "unknown payload type '" + std::string(tag) + "'");
  }
  f.finish();
  return out;
}

}  // namespace detail

/// One frame: compact JSON object with keys v, session, client, seq, type, body (in that
/// order), terminated by a single '\n'.
inline std::string encode(const Envelope& env) {
  ojson j;
  j["v"] = env.protocol_version;
  j["session"] = env.session_id;
  j["client"] = env.client_id;
  j["seq"] = env.seq;
  j["type"] = payload_tag(env.payload);
  j["body"] = detail::payload_body(env.payload);
  std::string frame = j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  frame.push_back('\n');
  return frame;
}

/// Inverse of encode. Throws IncompleteFrame, MalformedFrame, UnsupportedVersion or
/// UnknownPayloadTag.
inline Envelope decode(std::string_view frame) {
  if (frame.empty() || frame.back() != '\n') {
    throw Error(ErrorCode::IncompleteFrame, "frame is not newline-terminated");
  }
  frame.remove_suffix(1);
  if (frame.find('\n') != std::string_view::npos) detail::malformed("embedded newline in frame");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(frame);
  } catch (const nlohmann::json::exception& e) {
    detail::malformed(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) detail::malformed("frame is not an object");
  if (auto v = j.find("v"); v == j.end() || !v->is_number_integer()) {
    detail::malformed("missing protocol version");
  } else if (v->get<std::int64_t>() != kProtocolVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "protocol version " + v->dump() + " not supported");
  }
  detail::Fields f(j, "envelope");
  Envelope env;
  env.protocol_version = f.get("v").get<int>();
  env.session_id = detail::read_token(f.get("session"), "session");
  env.client_id = detail::read_token(f.get("client"), "client");
  env.seq = detail::read_uint(f.get("seq"), "seq");
  const auto tag = detail::read_string(f.get("type"), "type");
  const auto& body = f.get("body");
  f.finish();
  env.payload = detail::payload_from_json(tag, body);
  return env;
}

}  // namespace holoproxy
