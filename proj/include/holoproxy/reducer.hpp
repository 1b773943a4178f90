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

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "holoproxy/interaction.hpp"
#include "holoproxy/model.hpp"
#include "holoproxy/wire.hpp"

namespace holoproxy {

/// Who an outbound envelope is for.
struct Recipient {
  enum class Kind { sender, everyone, role };
  Kind kind = Kind::sender;
  std::string client_id;  // Kind::sender
  Role role = Role::proxy;  // Kind::role

  static Recipient to_sender(std::string id) { return {Kind::sender, std::move(id), Role::proxy}; }
  static Recipient broadcast() { return {Kind::everyone, {}, Role::proxy}; }
  static Recipient all_with_role(Role r) { return {Kind::role, {}, r}; }

  friend bool operator==(const Recipient&, const Recipient&) = default;
};

struct Outbound {
  Recipient to;
  Envelope envelope;
};

struct ReduceResult {
  SessionState state;
  std::vector<Outbound> outbound;
};

/// Everything the reducer reads besides the state. Fixed for the life of a session.
struct SessionContext {
  const DataCube& cube;
  const ChartLayout& layout;
  const ScreenConfig& screen;
};

namespace detail {

inline Envelope server_envelope(const Envelope& in, Payload payload) {
  return {kProtocolVersion, in.session_id, std::string(kServerClientId), 0, std::move(payload)};
}

inline void set_selection(SessionState& state, const SelectionState& next, std::vector<Change>& changes) {
  std::vector<CellId> added, removed;
  std::set_difference(next.selected.begin(), next.selected.end(), state.selection.selected.begin(),
                      state.selection.selected.end(), std::back_inserter(added));
  std::set_difference(state.selection.selected.begin(), state.selection.selected.end(),
                      next.selected.begin(), next.selected.end(), std::back_inserter(removed));
  if (!added.empty()) changes.push_back(change::Select{std::move(added)});
  if (!removed.empty()) changes.push_back(change::Deselect{std::move(removed)});
  state.selection = next;
}

inline void refresh_summary(SessionState& state, const DataCube& cube, std::vector<Change>& changes) {
  if (!state.summary) return;
  auto stats = summarize(cube, state.selection.selected);
  if (stats != *state.summary) {
    state.summary = stats;
    changes.push_back(change::SetSummary{stats});
  }
}

}  // namespace detail

/// Applies one client envelope to the authoritative state.
///
/// Envelopes whose seq is at or below the sender's watermark are acknowledged again and
/// otherwise ignored. Accepted envelopes that change state advance the watermark, bump the
/// revision and broadcast one StateDelta; taps that hit a mark also pulse every proxy.
/// A PoseUpdate that loses last-writer-wins still counts as applied: its delta carries only
/// the watermark. A tap that hits nothing is acknowledged and nothing else.
/// Rejected input produces an ErrorReply to the sender only and leaves the state untouched.
/// Hello and Heartbeat are connection-level and never change state.
inline ReduceResult reduce(const SessionState& state, const Envelope& env, const SessionContext& ctx) {
  using detail::server_envelope;
  ReduceResult result{state, {}};
  auto& out = result.outbound;
  const auto sender = Recipient::to_sender(env.client_id);

  if (env.is<Hello>() || env.is<Heartbeat>() || env.is<Ack>()) return result;
  if (env.is<HapticPulse>() || env.is<StateDelta>() || env.is<FullSnapshot>() || env.is<ErrorReply>()) {
    out.push_back({sender, server_envelope(env, ErrorReply{ErrorCode::ProtocolViolation, env.seq,
                                                           std::string(payload_tag(env.payload)) +
                                                               " is server-to-client only"})});
    return result;
  }
  if (env.seq <= state.watermark(env.client_id)) {
    out.push_back({sender, server_envelope(env, Ack{env.seq})});
    return result;
  }

  SessionState next = state;
  std::vector<Change> changes;
  std::optional<HapticCommand> haptic;
  try {
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, TapScreen>) {
            if (!ctx.screen.contains(p.point)) {
              throw Error(ErrorCode::OutOfScreen, "tap outside the screen");
            }
            if (auto cell = hit_test_mark(p.point, ctx.layout, ctx.screen)) {
              detail::set_selection(next, toggle_select(next.selection, *cell, ctx.cube.shape()), changes);
              detail::refresh_summary(next, ctx.cube, changes);
              const ValueRange range{ctx.cube.min_value(), ctx.cube.max_value()};
              // A constant cube has no range to scale into; every mark sits at the maximum.
              haptic = range.max > range.min
                           ? haptic_encode(ctx.cube.value(*cell), range, HapticMode::absolute)
                           : HapticCommand{HapticCommand::kMaxAmplitude, HapticCommand::kPulseMs};
            }
          } else if constexpr (std::is_same_v<T, AxisTap>) {
            detail::set_selection(next, axis_select(next.selection, ctx.cube.shape(), p.axis, p.index), changes);
            detail::refresh_summary(next, ctx.cube, changes);
          } else if constexpr (std::is_same_v<T, PoseUpdate>) {
            PoseWriter key{env.seq, env.client_id};
            if (next.pose_writer < key) {
              next.proxy_pose = p.pose;
              next.pose_writer = key;
              changes.push_back(change::SetPose{p.pose, key});
            }
          } else if constexpr (std::is_same_v<T, ProjectRequest>) {
            next.projection = project_series(ctx.cube, p.axis, p.index);
            changes.push_back(change::SetProjection{*next.projection});
          } else if constexpr (std::is_same_v<T, SummarizeRequest>) {
            next.summary = summarize(ctx.cube, next.selection.selected);
            changes.push_back(change::SetSummary{*next.summary});
          } else if constexpr (std::is_same_v<T, ClearProjection>) {
            next.projection.reset();
            changes.push_back(change::ClearProjection{});
          }
        },
        env.payload);
  } catch (const Error& e) {
    out.push_back({sender, server_envelope(env, ErrorReply{e.code(), env.seq, e.detail()})});
    return result;
  }

  out.push_back({sender, server_envelope(env, Ack{env.seq})});
  if (changes.empty() && !env.is<PoseUpdate>()) return result;

  next.watermarks[env.client_id] = env.seq;
  changes.push_back(change::SetWatermark{env.client_id, env.seq});
  next.revision = state.revision + 1;
  out.push_back({Recipient::broadcast(), server_envelope(env, StateDelta{next.revision, std::move(changes)})});
  if (haptic) out.push_back({Recipient::all_with_role(Role::proxy), server_envelope(env, HapticPulse{*haptic})});
  result.state = std::move(next);
  return result;
}

inline ReduceResult reduce(const SessionState& state, const Envelope& env, const DataCube& cube,
                           const ChartLayout& layout, const ScreenConfig& screen) {
  return reduce(state, env, SessionContext{cube, layout, screen});
}

/// Applies a delta to a replica. Deltas at or below the replica's revision are ignored.
/// Returns whether the delta was applied.
inline bool apply_delta(SessionState& replica, const StateDelta& delta) {
  if (delta.revision <= replica.revision) return false;
  for (const auto& c : delta.changes) {
    std::visit(
        [&replica](const auto& ch) {
          using T = std::decay_t<decltype(ch)>;
          if constexpr (std::is_same_v<T, change::Select>) {
            replica.selection.selected.insert(ch.cells.begin(), ch.cells.end());
          } else if constexpr (std::is_same_v<T, change::Deselect>) {
            for (const auto& cell : ch.cells) replica.selection.selected.erase(cell);
          } else if constexpr (std::is_same_v<T, change::SetPose>) {
            replica.proxy_pose = ch.pose;
            replica.pose_writer = ch.writer;
          } else if constexpr (std::is_same_v<T, change::SetProjection>) {
            replica.projection = ch.projection;
          } else if constexpr (std::is_same_v<T, change::ClearProjection>) {
            replica.projection.reset();
          } else if constexpr (std::is_same_v<T, change::SetSummary>) {
            replica.summary = ch.summary;
          } else if constexpr (std::is_same_v<T, change::SetWatermark>) {
            replica.watermarks[ch.client_id] = ch.seq;
          }
        },
        c);
  }
  replica.revision = delta.revision;
  return true;
}

/// Client-side mirror of the session: seeded by a FullSnapshot, advanced by StateDeltas.
class Replica {
 public:
  /// Returns true when the envelope changed the replica.
  bool apply(const Envelope& env) {
    if (env.is<FullSnapshot>()) {
      state_ = env.as<FullSnapshot>().state;
      synced_ = true;
      return true;
    }
    if (env.is<StateDelta>() && synced_) return apply_delta(state_, env.as<StateDelta>());
    return false;
  }

  bool synced() const { return synced_; }
  const SessionState& state() const { return state_; }
  std::string digest() const { return holoproxy::digest(state_); }

 private:
  SessionState state_;
  bool synced_ = false;
};

/// Stored projection and summary must equal recomputation from the cube and selection.
inline bool derived_state_coherent(const SessionState& s, const DataCube& cube) {
  if (s.cube_digest != cube_digest(cube)) return false;
  if (s.projection) {
    auto again = project_series(cube, s.projection->series_axis, s.projection->fixed_index);
    SessionState a, b;
    a.projection = std::move(again);
    b.projection = s.projection;
    if (canonical_serialization(a) != canonical_serialization(b)) return false;
  }
  if (s.summary && summarize(cube, s.selection.selected) != *s.summary) return false;
  for (const auto& c : s.selection.selected) {
    if (!cube.shape().contains(c)) return false;
  }
  return s.pose_writer.client_id.empty() || s.pose_writer.seq <= s.watermark(s.pose_writer.client_id);
}

}  // namespace holoproxy
