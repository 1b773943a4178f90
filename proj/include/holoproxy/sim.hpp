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
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "holoproxy/anchor.hpp"
#include "holoproxy/error.hpp"
#include "holoproxy/interaction.hpp"
#include "holoproxy/model.hpp"
#include "holoproxy/oracles.hpp"
#include "holoproxy/reducer.hpp"
#include "holoproxy/session.hpp"
#include "holoproxy/wire.hpp"

namespace holoproxy {

// ---------------------------------------------------------------------------
// Synthetic datasets

enum class DatasetKind { car_mortality, co2_emissions, military_expenditure };

inline std::optional<DatasetKind> dataset_kind_from_string(std::string_view s) {
  if (s == "car_mortality") return DatasetKind::car_mortality;
  if (s == "co2_emissions") return DatasetKind::co2_emissions;
  if (s == "military_expenditure") return DatasetKind::military_expenditure;
  return std::nullopt;
}

constexpr std::string_view to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::car_mortality: return "car_mortality";
    case DatasetKind::co2_emissions: return "co2_emissions";
    case DatasetKind::military_expenditure: return "military_expenditure";
  }
  return "";
}

/// Seeded countries × years cube shaped like the study datasets. Values are uniform within a
/// plausible range for the measure, rounded to two decimals.
inline DataCube synthetic_cube(std::uint32_t locations, std::uint32_t years, std::uint64_t seed,
                               DatasetKind kind = DatasetKind::co2_emissions) {
  static const std::vector<std::string> kCountries = {
      "Australia", "Brazil",  "Canada", "Denmark", "Egypt",  "France", "Germany",
      "Hungary",   "India",   "Japan",  "Kenya",   "Mexico", "Norway", "Peru",
      "Portugal",  "Romania", "Spain",  "Sweden",  "Turkey", "Uruguay"};
  struct Spec {
    const char* name;
    const char* unit;
    double lo, hi;
  };
  const Spec spec = kind == DatasetKind::car_mortality   ? Spec{"car mortality rate", "deaths per 100k", 2.0, 30.0}
                    : kind == DatasetKind::co2_emissions ? Spec{"carbon dioxide emissions", "t per capita", 0.5, 20.0}
                                                         : Spec{"military expenditure", "% of GDP", 0.5, 6.0};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(spec.lo, spec.hi);
  std::vector<std::string> locs, yrs;
  for (std::uint32_t l = 0; l < locations; ++l) {
    locs.push_back(l < kCountries.size() ? kCountries[l] : "Country " + std::to_string(l + 1));
  }
  for (std::uint32_t y = 0; y < years; ++y) yrs.push_back(std::to_string(2000 + y));
  std::vector<double> values;
  for (std::size_t i = 0; i < std::size_t{locations} * years; ++i) {
    values.push_back(std::round(dist(rng) * 100.0) / 100.0);
  }
  return DataCube::create(std::move(locs), std::move(yrs), std::move(values), spec.name, spec.unit);
}

// ---------------------------------------------------------------------------
// Scenarios

/// Per-link delay model. Each client<->server link is FIFO; reordering happens across
/// clients. A message is delayed uniformly in [latency_min_ms, latency_max_ms]; with
/// reorder_probability it is held back by up to reorder_window_ms more. Client-to-server
/// messages are retransmitted with duplicate_probability.
struct NetworkProfile {
  double latency_min_ms = 0.0;
  double latency_max_ms = 0.0;
  double duplicate_probability = 0.0;
  double reorder_probability = 0.0;
  double reorder_window_ms = 0.0;
};

struct CubeSource {
  std::optional<std::filesystem::path> csv;
  std::uint32_t locations = 7;
  std::uint32_t years = 10;
  DatasetKind kind = DatasetKind::co2_emissions;
  std::optional<std::uint64_t> seed;
};

struct ClientSpec {
  std::string id;
  Role role = Role::proxy;
};

struct TaskSpec {
  TaskKind kind = TaskKind::range;
  bool random = false;
  Axis axis = Axis::location;
  std::uint32_t index = 0;
  std::vector<CellId> cells;
  /// Hand-entered answer to check instead of the oracle.
  std::optional<std::vector<CellId>> expected;
};

namespace action {
struct Tap { PointPx point; };
struct TapCell { CellId cell; };
struct AxisTap { Axis axis; std::uint32_t index; };
struct MovePose { Pose pose; };
struct Project { Axis axis; std::uint32_t index; };
struct Summarize {};
struct ClearProjection {};
}  // namespace action

using ActionKind = std::variant<action::Tap, action::TapCell, action::AxisTap, action::MovePose, action::Project,
                                action::Summarize, action::ClearProjection, TaskSpec>;

struct ScriptedAction {
  double at_ms = 0;
  std::string client;
  ActionKind what;
};

struct Expectation {
  enum class Kind { selection_size, selected, not_selected, summary_count, projection, no_projection };
  Kind kind = Kind::selection_size;
  std::uint64_t count = 0;
  CellId cell;
  Axis axis = Axis::location;
  std::uint32_t index = 0;
};

struct Scenario {
  std::string name = "unnamed";
  std::optional<std::uint64_t> seed;
  CubeSource cube;
  ScreenConfig screen = ScreenConfig::landscape(1000, 500);
  NetworkProfile network;
  double timeout_ms = 60000;
  double pose_noise_sigma = 0.0;
  std::vector<ClientSpec> clients;
  std::vector<ScriptedAction> actions;
  std::vector<Expectation> expectations;
};

namespace detail {

class ScenarioParser {
 public:
  ScenarioParser(std::istream& in, std::filesystem::path base_dir) : in_(in), base_(std::move(base_dir)) {}

  Scenario parse() {
    Scenario s;
    std::string raw;
    bool header = false;
    while (std::getline(in_, raw)) {
      ++line_no_;
      if (auto hash = raw.find('#'); hash != std::string::npos) raw.resize(hash);
      std::istringstream ls(raw);
      tokens_.clear();
      for (std::string t; ls >> t;) tokens_.push_back(t);
      pos_ = 0;
      if (tokens_.empty()) continue;
      const auto head = next();
      if (!header) {
        if (head != "holoproxy-scenario" || next() != "1") fail("expected 'holoproxy-scenario 1' header");
        header = true;
      } else if (head == "name") {
        s.name = next();
      } else if (head == "seed") {
        s.seed = next_u64();
      } else if (head == "cube") {
        parse_cube(s.cube);
      } else if (head == "screen") {
        const auto w = static_cast<std::int32_t>(next_u64());
        const auto h = static_cast<std::int32_t>(next_u64());
        try {
          s.screen = ScreenConfig::landscape(w, h);
        } catch (const Error& e) {
          fail(e.detail());
        }
      } else if (head == "network") {
        parse_network(s.network);
      } else if (head == "timeout") {
        s.timeout_ms = next_double();
      } else if (head == "pose-noise") {
        s.pose_noise_sigma = next_double();
      } else if (head == "client") {
        ClientSpec c;
        c.id = next();
        auto role = role_from_string(next());
        if (!role) fail("unknown role");
        c.role = *role;
        s.clients.push_back(c);
      } else if (head == "at") {
        s.actions.push_back(parse_action());
      } else if (head == "expect") {
        s.expectations.push_back(parse_expectation());
      } else {
        fail("unknown directive '" + head + "'");
      }
      if (pos_ != tokens_.size()) fail("trailing tokens");
    }
    if (!header) fail("empty scenario");
    return s;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw Error(ErrorCode::InvalidScenario, "line " + std::to_string(line_no_) + ": " + what);
  }

  bool more() const { return pos_ < tokens_.size(); }
  std::string next() {
    if (!more()) fail("unexpected end of line");
    return tokens_[pos_++];
  }
  bool accept(std::string_view t) {
    if (more() && tokens_[pos_] == t) {
      ++pos_;
      return true;
    }
    return false;
  }
  double next_double() {
    auto v = parse_double(next());
    if (!v || !std::isfinite(*v)) fail("expected a number");
    return *v;
  }
  std::uint64_t next_u64() {
    auto v = parse_integer(next());
    if (!v || *v < 0) fail("expected a non-negative integer");
    return static_cast<std::uint64_t>(*v);
  }
  std::uint32_t next_u32() {
    auto v = next_u64();
    if (v > UINT32_MAX) fail("integer out of range");
    return static_cast<std::uint32_t>(v);
  }
  Axis next_axis() {
    auto a = axis_from_string(next());
    if (!a) fail("expected 'location' or 'year'");
    return *a;
  }
  CellId next_cell() {
    const auto l = next_u32();
    return {l, next_u32()};
  }

  void parse_cube(CubeSource& c) {
    const auto kind = next();
    if (kind == "csv") {
      c.csv = base_ / next();
    } else if (kind == "synthetic") {
      c.csv.reset();
      c.locations = next_u32();
      c.years = next_u32();
      while (more()) {
        if (accept("seed")) {
          c.seed = next_u64();
        } else if (auto k = dataset_kind_from_string(next())) {
          c.kind = *k;
        } else {
          fail("unknown dataset kind");
        }
      }
    } else {
      fail("cube source must be 'csv' or 'synthetic'");
    }
  }

  void parse_network(NetworkProfile& n) {
    while (more()) {
      if (accept("latency")) {
        n.latency_min_ms = next_double();
        n.latency_max_ms = next_double();
      } else if (accept("dup")) {
        n.duplicate_probability = next_double();
      } else if (accept("reorder")) {
        n.reorder_probability = next_double();
        n.reorder_window_ms = next_double();
      } else {
        fail("unknown network option '" + next() + "'");
      }
    }
    if (n.latency_min_ms < 0 || n.latency_max_ms < n.latency_min_ms || n.duplicate_probability < 0 ||
        n.duplicate_probability > 1 || n.reorder_probability < 0 || n.reorder_probability > 1 ||
        n.reorder_window_ms < 0) {
      fail("network parameters out of range");
    }
  }

  ScriptedAction parse_action() {
    ScriptedAction a;
    a.at_ms = next_double();
    if (a.at_ms < 0) fail("negative time");
    a.client = next();
    const auto verb = next();
    if (verb == "tap") {
      const double x = next_double();
      a.what = action::Tap{{x, next_double()}};
    } else if (verb == "tap-cell") {
      a.what = action::TapCell{next_cell()};
    } else if (verb == "axis") {
      const auto axis = next_axis();
      a.what = action::AxisTap{axis, next_u32()};
    } else if (verb == "pose") {
      Pose p;
      p.position = {next_double(), next_double(), next_double()};
      if (more()) {
        p.orientation = {next_double(), next_double(), next_double(), next_double()};
        if (!p.valid()) fail("orientation must be a unit quaternion");
      }
      a.what = action::MovePose{p};
    } else if (verb == "project") {
      const auto axis = next_axis();
      a.what = action::Project{axis, next_u32()};
    } else if (verb == "summarize") {
      a.what = action::Summarize{};
    } else if (verb == "clear-projection") {
      a.what = action::ClearProjection{};
    } else if (verb == "task") {
      a.what = parse_task();
    } else {
      fail("unknown action '" + verb + "'");
    }
    return a;
  }

  TaskSpec parse_task() {
    TaskSpec t;
    const auto kind = next();
    if (kind == "range" || kind == "order") {
      t.kind = kind == "range" ? TaskKind::range : TaskKind::order;
      if (accept("random")) {
        t.random = true;
      } else {
        t.axis = next_axis();
        t.index = next_u32();
      }
    } else if (kind == "compare") {
      t.kind = TaskKind::compare;
      if (accept("random")) {
        t.random = true;
      } else {
        for (int i = 0; i < 3; ++i) t.cells.push_back(next_cell());
      }
    } else {
      fail("unknown task '" + kind + "'");
    }
    if (accept("expect")) {
      std::vector<CellId> cells;
      while (more()) cells.push_back(next_cell());
      t.expected = std::move(cells);
    }
    return t;
  }

  Expectation parse_expectation() {
    Expectation e;
    const auto kind = next();
    if (kind == "selection-size") {
      e.kind = Expectation::Kind::selection_size;
      e.count = next_u64();
    } else if (kind == "selected" || kind == "not-selected") {
      e.kind = kind == "selected" ? Expectation::Kind::selected : Expectation::Kind::not_selected;
      e.cell = next_cell();
    } else if (kind == "summary-count") {
      e.kind = Expectation::Kind::summary_count;
      e.count = next_u64();
    } else if (kind == "projection") {
      e.kind = Expectation::Kind::projection;
      e.axis = next_axis();
      e.index = next_u32();
    } else if (kind == "no-projection") {
      e.kind = Expectation::Kind::no_projection;
    } else {
      fail("unknown expectation '" + kind + "'");
    }
    return e;
  }

  std::istream& in_;
  std::filesystem::path base_;
  std::size_t line_no_ = 0;
  std::vector<std::string> tokens_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses the line-oriented scenario format. Relative csv paths resolve against base_dir.
inline Scenario parse_scenario(std::istream& in, const std::filesystem::path& base_dir = ".") {
  return detail::ScenarioParser(in, base_dir).parse();
}

inline Scenario parse_scenario(std::string_view text, const std::filesystem::path& base_dir = ".") {
  std::istringstream in{std::string(text)};
  return parse_scenario(in, base_dir);
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open scenario " + path.string());
  return parse_scenario(in, path.parent_path());
}

// ---------------------------------------------------------------------------
// Reports

struct AssertionResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct MessageCounts {
  std::uint64_t client_frames = 0;
  std::uint64_t duplicates_injected = 0;
  std::uint64_t server_frames = 0;
  std::uint64_t acks = 0;
  std::uint64_t deltas = 0;
  std::uint64_t haptics = 0;
  std::uint64_t errors = 0;
};

/// Send-to-ack round trip times, bucketed.
struct LatencyHistogram {
  double bucket_ms = 10.0;
  std::vector<std::uint64_t> counts;
  double p50_ms = 0;
  double p99_ms = 0;
  double max_ms = 0;
};

struct ScenarioReport {
  std::string name;
  std::uint64_t seed = 0;
  std::string cube_digest;
  bool passed = false;
  std::optional<std::string> error;
  std::string server_digest;
  std::map<std::string, std::string> client_digests;
  std::vector<AssertionResult> assertions;
  MessageCounts messages;
  LatencyHistogram latency;
  double virtual_end_ms = 0;
  double quiescent_at_ms = 0;
  std::uint64_t applied = 0;
};

namespace detail {

inline std::string cell_text(CellId c) {
  return "(" + std::to_string(c.location) + "," + std::to_string(c.year) + ")";
}

inline std::string cells_text(const std::vector<CellId>& cells) {
  std::string out;
  for (const auto& c : cells) out += (out.empty() ? "" : " ") + cell_text(c);
  return out;
}

inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::min(v.size() - 1, rank == 0 ? 0 : rank - 1)];
}

}  // namespace detail

inline std::string format_text(const ScenarioReport& r) {
  using detail::format_double;
  std::ostringstream o;
  o << "scenario " << r.name << "\n";
  o << "seed " << r.seed << "\n";
  o << "result " << (r.passed ? "PASS" : "FAIL") << "\n";
  if (r.error) o << "error " << *r.error << "\n";
  o << "cube " << r.cube_digest << "\n";
  o << "server_digest " << r.server_digest << "\n";
  for (const auto& [id, d] : r.client_digests) o << "client_digest " << id << " " << d << "\n";
  for (const auto& a : r.assertions) {
    o << "assert " << (a.passed ? "PASS" : "FAIL") << " " << a.name;
    if (!a.detail.empty()) o << " -- " << a.detail;
    o << "\n";
  }
  const auto& m = r.messages;
  o << "messages client_frames=" << m.client_frames << " duplicates=" << m.duplicates_injected
    << " server_frames=" << m.server_frames << " acks=" << m.acks << " deltas=" << m.deltas
    << " haptics=" << m.haptics << " errors=" << m.errors << " applied=" << r.applied << "\n";
  o << "latency_ms p50=" << format_double(r.latency.p50_ms) << " p99=" << format_double(r.latency.p99_ms)
    << " max=" << format_double(r.latency.max_ms) << "\n";
  o << "histogram";
  for (std::size_t i = 0; i < r.latency.counts.size(); ++i) {
    o << " " << format_double(static_cast<double>(i) * r.latency.bucket_ms) << "-"
      << format_double(static_cast<double>(i + 1) * r.latency.bucket_ms) << ":" << r.latency.counts[i];
  }
  o << "\n";
  o << "virtual_end_ms " << format_double(r.virtual_end_ms) << "\n";
  o << "quiescent_at_ms " << format_double(r.quiescent_at_ms) << "\n";
  return o.str();
}

inline std::string format_json(const ScenarioReport& r) {
  nlohmann::ordered_json j;
  j["scenario"] = r.name;
  j["seed"] = r.seed;
  j["passed"] = r.passed;
  j["error"] = r.error ? nlohmann::ordered_json(*r.error) : nlohmann::ordered_json(nullptr);
  j["cube"] = r.cube_digest;
  j["server_digest"] = r.server_digest;
  j["client_digests"] = r.client_digests;
  auto asserts = nlohmann::ordered_json::array();
  for (const auto& a : r.assertions) {
    asserts.push_back({{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  }
  j["assertions"] = std::move(asserts);
  const auto& m = r.messages;
  j["messages"] = {{"client_frames", m.client_frames}, {"duplicates", m.duplicates_injected},
                   {"server_frames", m.server_frames}, {"acks", m.acks},
                   {"deltas", m.deltas},               {"haptics", m.haptics},
                   {"errors", m.errors},               {"applied", r.applied}};
  j["latency_ms"] = {{"bucket", r.latency.bucket_ms}, {"counts", r.latency.counts},
                     {"p50", r.latency.p50_ms},       {"p99", r.latency.p99_ms},
                     {"max", r.latency.max_ms}};
  j["virtual_end_ms"] = r.virtual_end_ms;
  j["quiescent_at_ms"] = r.quiescent_at_ms;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Runner

struct RunOptions {
  std::optional<std::uint64_t> seed;
  /// Session log written during the run, replayable with replay().
  std::optional<std::filesystem::path> log_path;
};

namespace detail {

/// Discrete-event simulation of clients, links and an embedded session. All randomness
/// and the virtual clock come from one seeded scheduler, so a run is a pure function of
/// (scenario, seed).
class ScenarioRun {
 public:
  ScenarioRun(const Scenario& sc, const RunOptions& opts)
      : sc_(sc),
        seed_(opts.seed ? *opts.seed : sc.seed.value_or(1)),
        rng_(seed_),
        jitter_(sc.pose_noise_sigma, seed_ ^ 0x9e3779b97f4a7c15ULL),
        cube_(load_cube()),
        session_("sim-" + std::to_string(seed_), cube_, sc.screen, opts.log_path) {
    validate_and_resolve();
  }

  ScenarioReport run() {
    for (const auto& c : sc_.clients) {
      clients_[c.id].spec = c;
      send(c.id, 0.0, Hello{c.role, default_caps(c.role)}, false);
    }
    for (std::size_t i = 0; i < actions_.size(); ++i) push(actions_[i].at_ms, Event::Kind::action, "", "", i);

    while (!queue_.empty()) {
      Event ev = queue_.top();
      queue_.pop();
      if (ev.time > sc_.timeout_ms) {
        report_.error = "Timeout: events still in flight at " + format_double(ev.time) + " ms";
        break;
      }
      now_ = ev.time;
      switch (ev.kind) {
        case Event::Kind::action: perform(actions_[ev.action]); break;
        case Event::Kind::to_server: server_receive(ev.frame); break;
        case Event::Kind::to_client: client_receive(ev.client, ev.frame); break;
      }
    }
    return finish();
  }

 private:
  struct Event {
    enum class Kind { action, to_server, to_client };
    double time;
    std::uint64_t order;
    Kind kind;
    std::string client;
    std::string frame;
    std::size_t action;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.time != b.time ? a.time > b.time : a.order > b.order;
    }
  };

  struct PendingTask {
    std::size_t action;
    TaskSpec spec;
    bool answered = false;
    std::vector<CellId> answer;
    std::array<HapticCommand, 3> pulses{};
    int pulses_seen = 0;
  };

  struct SimClient {
    ClientSpec spec;
    std::uint64_t seq = 0;
    Replica replica;
    double link_up = 0;    // last scheduled client->server delivery
    double link_down = 0;  // last scheduled server->client delivery
    std::map<std::uint64_t, double> sent_at;
    std::set<std::uint64_t> acked;
    std::deque<std::optional<std::size_t>> pulse_slots;  // pending task per expected pulse
  };

  static std::set<Capability> default_caps(Role role) {
    if (role == Role::proxy) return {Capability::precise_input, Capability::vibrotactile, Capability::high_res_display};
    if (role == Role::renderer) return {Capability::spatial_display, Capability::stereo};
    return {};
  }

  DataCube load_cube() const {
    if (sc_.cube.csv) {
      std::ifstream in(*sc_.cube.csv);
      if (!in) throw Error(ErrorCode::Io, "cannot open dataset " + sc_.cube.csv->string());
      return load_dataset(in);
    }
    return synthetic_cube(sc_.cube.locations, sc_.cube.years, sc_.cube.seed.value_or(seed_), sc_.cube.kind);
  }

  [[noreturn]] static void invalid(std::size_t i, const std::string& what) {
    throw Error(ErrorCode::InvalidScenario, "action " + std::to_string(i + 1) + ": " + what);
  }

  void validate_and_resolve() {
    const auto shape = cube_.shape();
    std::set<std::string> ids;
    std::size_t proxies = 0;
    for (const auto& c : sc_.clients) {
      if (!valid_token(c.id) || c.id == kServerClientId) throw Error(ErrorCode::InvalidScenario, "bad client id '" + c.id + "'");
      if (!ids.insert(c.id).second) throw Error(ErrorCode::InvalidScenario, "duplicate client '" + c.id + "'");
      if (c.role == Role::proxy) ++proxies;
    }
    if (sc_.clients.empty()) throw Error(ErrorCode::InvalidScenario, "no clients");
    actions_ = sc_.actions;
    std::stable_sort(actions_.begin(), actions_.end(),
                     [](const ScriptedAction& a, const ScriptedAction& b) { return a.at_ms < b.at_ms; });
    std::uniform_int_distribution<int> coin(0, 1);
    for (std::size_t i = 0; i < actions_.size(); ++i) {
      auto& a = actions_[i];
      if (!ids.contains(a.client)) invalid(i, "unknown client '" + a.client + "'");
      const auto role = std::find_if(sc_.clients.begin(), sc_.clients.end(),
                                     [&](const ClientSpec& c) { return c.id == a.client; })->role;
      auto check_cell = [&](CellId c) {
        if (!shape.contains(c)) invalid(i, "cell " + cell_text(c) + " outside the cube");
      };
      auto check_index = [&](Axis axis, std::uint32_t index) {
        if (index >= shape.extent(axis)) invalid(i, std::string(to_string(axis)) + " index " + std::to_string(index) + " outside the cube");
      };
      if (auto* t = std::get_if<action::Tap>(&a.what)) {
        if (!sc_.screen.contains(t->point)) invalid(i, "tap outside the screen");
      } else if (auto* t = std::get_if<action::TapCell>(&a.what)) {
        check_cell(t->cell);
      } else if (auto* t = std::get_if<action::AxisTap>(&a.what)) {
        check_index(t->axis, t->index);
      } else if (auto* t = std::get_if<action::Project>(&a.what)) {
        check_index(t->axis, t->index);
      } else if (auto* t = std::get_if<TaskSpec>(&a.what)) {
        if (t->random) {
          if (t->kind == TaskKind::compare) {
            if (shape.cell_count() < 3) invalid(i, "compare needs at least three cells");
            std::set<CellId> picked;
            std::uniform_int_distribution<std::uint32_t> loc(0, shape.locations - 1), yr(0, shape.years - 1);
            t->cells.clear();
            while (t->cells.size() < 3) {
              CellId c{loc(rng_), yr(rng_)};
              if (picked.insert(c).second) t->cells.push_back(c);
            }
          } else {
            t->axis = coin(rng_) ? Axis::year : Axis::location;
            std::uniform_int_distribution<std::uint32_t> idx(0, shape.extent(t->axis) - 1);
            t->index = idx(rng_);
          }
          t->random = false;
        }
        if (t->kind == TaskKind::compare) {
          if (t->cells.size() != 3 || std::set<CellId>(t->cells.begin(), t->cells.end()).size() != 3) {
            invalid(i, "compare needs three distinct cells");
          }
          for (auto c : t->cells) check_cell(c);
          if (role != Role::proxy) invalid(i, "compare tasks read vibration and need a proxy client");
          if (proxies != 1) invalid(i, "compare tasks need exactly one proxy client");
        } else {
          check_index(t->axis, t->index);
        }
      }
    }
  }

  void push(double t, Event::Kind kind, std::string client, std::string frame, std::size_t action = 0) {
    queue_.push(Event{t, order_++, kind, std::move(client), std::move(frame), action});
  }

  double sample_latency() {
    const auto& n = sc_.network;
    double d = n.latency_min_ms;
    if (n.latency_max_ms > n.latency_min_ms) {
      d = std::uniform_real_distribution<double>(n.latency_min_ms, n.latency_max_ms)(rng_);
    }
    if (n.reorder_probability > 0 && std::bernoulli_distribution(n.reorder_probability)(rng_)) {
      d += std::uniform_real_distribution<double>(0.0, std::max(n.reorder_window_ms, 0.0))(rng_);
    }
    latencies_.push_back(d);
    return d;
  }

  double schedule_up(SimClient& c, double t, const std::string& frame) {
    const double at = std::max(t + sample_latency(), c.link_up);
    c.link_up = at;
    push(at, Event::Kind::to_server, c.spec.id, frame);
    ++report_.messages.client_frames;
    return at;
  }

  std::uint64_t send(const std::string& client, double t, Payload payload, bool may_duplicate = true) {
    auto& c = clients_.at(client);
    const Envelope env{kProtocolVersion, session_.id(), client, ++c.seq, std::move(payload)};
    const auto frame = encode(env);
    c.sent_at[env.seq] = t;
    schedule_up(c, t, frame);
    if (may_duplicate && sc_.network.duplicate_probability > 0 &&
        std::bernoulli_distribution(sc_.network.duplicate_probability)(rng_)) {
      schedule_up(c, t, frame);
      ++report_.messages.duplicates_injected;
    }
    return env.seq;
  }

  void tap_cell(const std::string& client, CellId cell, std::optional<std::size_t> task) {
    clients_.at(client).pulse_slots.push_back(task);
    send(client, now_, TapScreen{cell_center_px(cell, session_.layout(), session_.screen())});
  }

  void perform(const ScriptedAction& a) {
    std::visit(
        [&](const auto& w) {
          using T = std::decay_t<decltype(w)>;
          if constexpr (std::is_same_v<T, action::Tap>) {
            if (hit_test_mark(w.point, session_.layout(), session_.screen())) {
              clients_.at(a.client).pulse_slots.push_back(std::nullopt);
            }
            send(a.client, now_, TapScreen{w.point});
          } else if constexpr (std::is_same_v<T, action::TapCell>) {
            tap_cell(a.client, w.cell, std::nullopt);
          } else if constexpr (std::is_same_v<T, action::AxisTap>) {
            send(a.client, now_, holoproxy::AxisTap{w.axis, w.index});
          } else if constexpr (std::is_same_v<T, action::MovePose>) {
            send(a.client, now_, PoseUpdate{jitter_.apply(w.pose)});
          } else if constexpr (std::is_same_v<T, action::Project>) {
            send(a.client, now_, ProjectRequest{w.axis, w.index});
          } else if constexpr (std::is_same_v<T, action::Summarize>) {
            send(a.client, now_, SummarizeRequest{});
          } else if constexpr (std::is_same_v<T, action::ClearProjection>) {
            send(a.client, now_, holoproxy::ClearProjection{});
          } else if constexpr (std::is_same_v<T, TaskSpec>) {
            const auto slot = tasks_.size();
            PendingTask pending;
            pending.action = static_cast<std::size_t>(&a - actions_.data());
            pending.spec = w;
            tasks_.push_back(std::move(pending));
            task_owner_.push_back(a.client);
            if (w.kind == TaskKind::compare) {
              for (auto c : w.cells) tap_cell(a.client, c, slot);
            } else {
              send(a.client, now_, ProjectRequest{w.axis, w.index});
            }
          }
        },
        a.what);
  }

  void server_receive(const std::string& frame) {
    const Envelope env = decode(frame);
    std::vector<Delivery> deliveries = env.is<Hello>() ? session_.join(env) : session_.submit(env);
    for (auto& d : deliveries) {
      auto it = clients_.find(d.client_id);
      if (it == clients_.end()) continue;
      auto& c = it->second;
      const double at = std::max(now_ + sample_latency(), c.link_down);
      c.link_down = at;
      push(at, Event::Kind::to_client, d.client_id, encode(d.envelope));
      ++report_.messages.server_frames;
    }
  }

  void client_receive(const std::string& client_id, const std::string& frame) {
    auto& c = clients_.at(client_id);
    const Envelope env = decode(frame);
    c.replica.apply(env);
    if (env.is<Ack>()) {
      ++report_.messages.acks;
      const auto seq = env.as<Ack>().seq;
      if (c.acked.insert(seq).second) {
        if (auto it = c.sent_at.find(seq); it != c.sent_at.end()) rtts_.push_back(now_ - it->second);
      }
    } else if (env.is<StateDelta>()) {
      ++report_.messages.deltas;
      for (const auto& ch : env.as<StateDelta>().changes) {
        if (const auto* p = std::get_if<change::SetProjection>(&ch)) on_projection(client_id, p->projection);
      }
    } else if (env.is<HapticPulse>()) {
      ++report_.messages.haptics;
      if (!c.pulse_slots.empty()) {
        auto slot = c.pulse_slots.front();
        c.pulse_slots.pop_front();
        if (slot) on_pulse(*slot, env.as<HapticPulse>().command);
      }
    } else if (env.is<ErrorReply>()) {
      ++report_.messages.errors;
    }
  }

  void on_projection(const std::string& client_id, const Projection2D& p) {
    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      auto& t = tasks_[i];
      if (t.answered || task_owner_[i] != client_id || t.spec.kind == TaskKind::compare) continue;
      if (t.spec.axis != p.series_axis || t.spec.index != p.fixed_index) continue;
      if (t.spec.kind == TaskKind::range) {
        auto r = range_from_projection(p);
        t.answer = {r.min_cell, r.max_cell};
      } else {
        t.answer = order_from_projection(p);
      }
      t.answered = true;
    }
  }

  void on_pulse(std::size_t slot, const HapticCommand& h) {
    auto& t = tasks_[slot];
    if (t.pulses_seen >= 3) return;
    t.pulses[t.pulses_seen++] = h;
    if (t.pulses_seen == 3) {
      t.answer = {compare_from_pulses({t.spec.cells[0], t.spec.cells[1], t.spec.cells[2]}, t.pulses)};
      t.answered = true;
    }
  }

  std::vector<CellId> oracle_answer(const TaskSpec& t) const {
    switch (t.kind) {
      case TaskKind::range: {
        auto r = oracle_range(cube_, t.axis, t.index);
        return {r.min_cell, r.max_cell};
      }
      case TaskKind::order: return oracle_order(cube_, t.axis, t.index);
      case TaskKind::compare: return {oracle_compare(cube_, {t.cells[0], t.cells[1], t.cells[2]})};
    }
    return {};
  }

  static std::string task_label(std::size_t i, const TaskSpec& t) {
    std::string s = "task " + std::to_string(i + 1) + " " + std::string(to_string(t.kind));
    if (t.kind == TaskKind::compare) s += " " + cells_text(t.cells);
    else s += " " + std::string(to_string(t.axis)) + " " + std::to_string(t.index);
    return s;
  }

  ScenarioReport finish() {
    auto& r = report_;
    r.name = sc_.name;
    r.seed = seed_;
    r.cube_digest = cube_digest(cube_);
    r.server_digest = session_.digest();
    r.applied = session_.applied_count();
    r.virtual_end_ms = now_;
    r.quiescent_at_ms = now_ + 3.0 * percentile(latencies_, 0.99);

    bool converged = true;
    std::string diverged;
    for (const auto& [id, c] : clients_) {
      const auto d = c.replica.synced() ? c.replica.digest() : std::string("unsynced");
      r.client_digests[id] = d;
      if (d != r.server_digest) {
        converged = false;
        diverged += (diverged.empty() ? "" : ",") + id;
      }
    }
    r.assertions.push_back({"converged", converged && !r.error,
                            converged ? std::to_string(clients_.size()) + " clients match server"
                                      : "diverged: " + diverged});

    for (std::size_t i = 0; i < tasks_.size(); ++i) {
      const auto& t = tasks_[i];
      const auto want = t.spec.expected ? *t.spec.expected : oracle_answer(t.spec);
      const bool ok = t.answered && t.answer == want;
      r.assertions.push_back({task_label(i, t.spec), ok,
                              (t.answered ? "answer " + cells_text(t.answer) : std::string("no answer")) +
                                  (t.spec.expected ? " expected " : " oracle ") + cells_text(want)});
    }

    const auto& st = session_.state();
    for (const auto& e : sc_.expectations) {
      using K = Expectation::Kind;
      switch (e.kind) {
        case K::selection_size:
          r.assertions.push_back({"selection-size " + std::to_string(e.count), st.selection.selected.size() == e.count,
                                  "actual " + std::to_string(st.selection.selected.size())});
          break;
        case K::selected:
        case K::not_selected: {
          const bool want = e.kind == K::selected;
          r.assertions.push_back({std::string(want ? "selected " : "not-selected ") + cell_text(e.cell),
                                  st.selection.contains(e.cell) == want, ""});
          break;
        }
        case K::summary_count: {
          const bool ok = st.summary && st.summary->count == e.count;
          r.assertions.push_back({"summary-count " + std::to_string(e.count), ok,
                                  st.summary ? "actual " + std::to_string(st.summary->count) : "no summary"});
          break;
        }
        case K::projection: {
          const bool ok = st.projection && st.projection->series_axis == e.axis && st.projection->fixed_index == e.index;
          r.assertions.push_back({"projection " + std::string(to_string(e.axis)) + " " + std::to_string(e.index), ok, ""});
          break;
        }
        case K::no_projection:
          r.assertions.push_back({"no-projection", !st.projection, ""});
          break;
      }
    }

    r.latency.max_ms = rtts_.empty() ? 0 : *std::max_element(rtts_.begin(), rtts_.end());
    r.latency.p50_ms = percentile(rtts_, 0.5);
    r.latency.p99_ms = percentile(rtts_, 0.99);
    if (!rtts_.empty()) {
      r.latency.counts.assign(static_cast<std::size_t>(r.latency.max_ms / r.latency.bucket_ms) + 1, 0);
      for (double v : rtts_) ++r.latency.counts[static_cast<std::size_t>(v / r.latency.bucket_ms)];
    }
    r.passed = !r.error && std::all_of(r.assertions.begin(), r.assertions.end(),
                                       [](const AssertionResult& a) { return a.passed; });
    session_.close();
    return r;
  }

  const Scenario& sc_;
  std::uint64_t seed_;
  std::mt19937_64 rng_;
  PoseJitter jitter_;
  DataCube cube_;
  Session session_;
  std::vector<ScriptedAction> actions_;
  std::map<std::string, SimClient> clients_;
  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t order_ = 0;
  double now_ = 0;
  std::vector<PendingTask> tasks_;
  std::vector<std::string> task_owner_;
  std::vector<double> latencies_;
  std::vector<double> rtts_;
  ScenarioReport report_;
};

}  // namespace detail

/// Executes a scenario through encoded protocol frames against an embedded session under
/// its network profile. Invalid scripts throw InvalidScenario before anything is sent; a
/// timeout or failed assertion is reported in the result, not thrown.
inline ScenarioReport run_scenario(const Scenario& scenario, const RunOptions& options = {}) {
  return detail::ScenarioRun(scenario, options).run();
}

/// Mixed random workload over two proxies and a renderer: taps (hits and misses), axis
/// taps, competing poses, projections and summaries.
inline Scenario stress_scenario(std::uint64_t seed, NetworkProfile network, std::size_t actions = 80) {
  Scenario s;
  s.name = "stress";
  s.seed = seed;
  s.cube.locations = 7;
  s.cube.years = 10;
  s.network = network;
  s.clients = {{"phone-a", Role::proxy}, {"phone-b", Role::proxy}, {"hmd", Role::renderer}};
  std::mt19937_64 rng(seed * 7919 + 17);
  std::uniform_real_distribution<double> when(0.0, 2000.0);
  std::uniform_int_distribution<int> pick(0, 9);
  std::uniform_int_distribution<std::size_t> who(0, s.clients.size() - 1);
  std::uniform_real_distribution<double> px(0.0, 999.0), py(0.0, 499.0), pos(-0.5, 0.5), ang(-3.14, 3.14);
  std::uniform_int_distribution<std::uint32_t> loc(0, 6), yr(0, 9);
  for (std::size_t i = 0; i < actions; ++i) {
    ScriptedAction a;
    a.at_ms = std::round(when(rng) * 1000.0) / 1000.0;
    a.client = s.clients[who(rng)].id;
    switch (pick(rng)) {
      case 0:
      case 1: a.what = action::Tap{{px(rng), py(rng)}}; break;
      case 2:
      case 3: a.what = action::TapCell{{loc(rng), yr(rng)}}; break;
      case 4:
        if (pick(rng) < 5) a.what = action::AxisTap{Axis::location, loc(rng)};
        else a.what = action::AxisTap{Axis::year, yr(rng)};
        break;
      case 5:
      case 6:
        a.what = action::MovePose{{{pos(rng), pos(rng), pos(rng)},
                                   Quaternion::from_axis_angle({0, 1, 0}, ang(rng))}};
        break;
      case 7:
        if (pick(rng) < 5) a.what = action::Project{Axis::location, loc(rng)};
        else a.what = action::Project{Axis::year, yr(rng)};
        break;
      case 8: a.what = action::Summarize{}; break;
      default: a.what = action::ClearProjection{}; break;
    }
    s.actions.push_back(std::move(a));
  }
  return s;
}

}  // namespace holoproxy
