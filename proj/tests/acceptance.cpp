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

// Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

#include <sys/wait.h>

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "generators.hpp"
#include "holoproxy/holoproxy.hpp"
#include "test_util.hpp"

using namespace holoproxy;
using holoproxy::testing::EnvelopeGenerator;
using holoproxy::testing::grid_cube;
using holoproxy::testing::random_cube;

namespace {

// Thrown by check(); carries the first failing detail.
struct Failure {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw Failure{what};
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

// --- protocol round-trip

std::string round_trip() {
  EnvelopeGenerator gen(2024);
  for (int i = 0; i < 1000; ++i) {
    const auto e = gen.next();
    const auto frame = encode(e);
    check(decode(frame) == e, "round trip differs: " + frame);
  }
  const auto hello = read_file(HOLOPROXY_TEST_DATA "/hello.frame");
  const auto delta = read_file(HOLOPROXY_TEST_DATA "/state_delta.frame");
  check(!hello.empty() && encode(holoproxy::testing::golden_hello()) == hello, "hello golden frame differs");
  check(!delta.empty() && encode(holoproxy::testing::golden_delta()) == delta, "delta golden frame differs");
  check(decode(hello) == holoproxy::testing::golden_hello(), "hello golden frame decodes differently");
  return "1000 envelopes, 2 golden frames";
}

// --- convergence under reorder and duplication

std::string convergence() {
  const NetworkProfile net{1, 50, 0.05, 0.2, 100};
  std::uint64_t dups = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto r = run_scenario(stress_scenario(seed, net));
    check(!r.error, "seed " + std::to_string(seed) + ": " + r.error.value_or(""));
    for (const auto& [id, d] : r.client_digests) {
      check(d == r.server_digest, "seed " + std::to_string(seed) + ": " + id + " diverged");
    }
    check(r.passed, "seed " + std::to_string(seed) + " failed an assertion");
    dups += r.messages.duplicates_injected;
  }
  check(dups > 0, "no duplicates were injected");
  return "100/100 converged, " + std::to_string(dups) + " duplicates injected";
}

// --- pose last-writer-wins

struct PoseWorld {
  DataCube cube = grid_cube(2, 2, {1, 2, 3, 4});
  ChartLayout layout = layout_chart(cube);
  ScreenConfig screen = ScreenConfig::landscape(1000, 500);

  SessionState deliver(const std::vector<Envelope>& order) const {
    SessionState s = initial_state(cube);
    for (const auto& e : order) s = reduce(s, e, cube, layout, screen).state;
    return s;
  }
};

// The expected end state built directly: maximal writer's pose, per-client max seq.
SessionState lww_oracle(const PoseWorld& w, const std::vector<Envelope>& updates) {
  SessionState s = initial_state(w.cube);
  const Envelope* best = nullptr;
  for (const auto& e : updates) {
    auto& mark = s.watermarks[e.client_id];
    mark = std::max(mark, e.seq);
    if (!best || std::tie(best->seq, best->client_id) < std::tie(e.seq, e.client_id)) best = &e;
  }
  if (best) {
    s.proxy_pose = best->as<PoseUpdate>().pose;
    s.pose_writer = {best->seq, best->client_id};
  }
  return s;
}

std::string pose_lww() {
  const PoseWorld w;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1, 1);
  auto update = [&](const std::string& client, std::uint64_t seq) {
    return Envelope{kProtocolVersion, "s", client, seq, PoseUpdate{Pose::translation(u(rng), u(rng), u(rng))}};
  };

  // Every pair of distinct updates over two clients and seqs 1..3, both arrival orders.
  std::size_t pairs = 0;
  const std::vector<std::string> clients{"alpha", "beta"};
  std::vector<Envelope> all;
  for (const auto& c : clients) {
    for (std::uint64_t seq = 1; seq <= 3; ++seq) all.push_back(update(c, seq));
  }
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      const std::vector<Envelope> pair{all[i], all[j]};
      const auto want = digest(lww_oracle(w, pair));
      const auto a = w.deliver({all[i], all[j]}), b = w.deliver({all[j], all[i]});
      check(digest(a) == want && digest(b) == want,
            "pair " + all[i].client_id + "/" + std::to_string(all[i].seq) + " " + all[j].client_id + "/" +
                std::to_string(all[j].seq));
      ++pairs;
    }
  }

  // Random schedules: each client sends increasing seqs; arrival is any interleaving with
  // duplicates and arbitrary reordering.
  for (int k = 0; k < 1000; ++k) {
    std::vector<Envelope> sent;
    const int n_clients = 1 + static_cast<int>(rng() % 4);
    for (int c = 0; c < n_clients; ++c) {
      std::uint64_t seq = 0;
      const int n = 1 + static_cast<int>(rng() % 6);
      for (int i = 0; i < n; ++i) {
        seq += 1 + rng() % 3;
        sent.push_back(update("c" + std::to_string(c), seq));
      }
    }
    std::vector<Envelope> arrival = sent;
    for (const auto& e : sent) {
      if (rng() % 5 == 0) arrival.push_back(e);
    }
    std::shuffle(arrival.begin(), arrival.end(), rng);
    const auto got = w.deliver(arrival);
    check(digest(got) == digest(lww_oracle(w, sent)), "schedule " + std::to_string(k));
  }
  return std::to_string(pairs) + " pairs x 2 orders, 1000 random schedules";
}

// --- hit test

// Brute-force containment over the screen mapping of every mark's rect, half-open.
std::optional<CellId> containment_scan(PointPx p, const CubeShape& shape, const ScreenConfig& s) {
  const auto& a = s.selection_area;
  if (p.x < a.x || p.y < a.y || p.x >= a.x + a.width || p.y >= a.y + a.height) return std::nullopt;
  const double u = (p.x - a.x) / a.width, v = (p.y - a.y) / a.height;
  for (std::uint32_t l = 0; l < shape.locations; ++l) {
    for (std::uint32_t y = 0; y < shape.years; ++y) {
      const double x0 = double(y) / shape.years, x1 = double(y + 1) / shape.years;
      const double y0 = double(l) / shape.locations, y1 = double(l + 1) / shape.locations;
      if (u >= x0 && u < x1 && v >= y0 && v < y1) return CellId{l, y};
    }
  }
  return std::nullopt;
}

std::string hit_test() {
  std::mt19937_64 rng(11);
  const auto s = ScreenConfig::landscape(1000, 500);
  std::uniform_real_distribution<double> x(-20, 1020), y(-20, 520);
  std::size_t hits = 0, boundary = 0;
  for (int k = 0; k < 10; ++k) {
    const auto cube = random_cube(rng);
    const auto layout = layout_chart(cube);
    const auto shape = cube.shape();
    for (int i = 0; i < 1000; ++i) {
      PointPx p{x(rng), y(rng)};
      // Half the points are snapped onto grid lines.
      const auto a = s.selection_area;
      if (i % 4 == 0 || i % 4 == 1) {
        p.x = a.x + a.width * double(rng() % (shape.years + 1)) / shape.years;
        ++boundary;
      }
      if (i % 4 == 1 || i % 4 == 2) {
        p.y = a.y + a.height * double(rng() % (shape.locations + 1)) / shape.locations;
        ++boundary;
      }
      const auto got = hit_test_mark(p, layout, s);
      check(got == containment_scan(p, shape, s),
            "point " + std::to_string(p.x) + "," + std::to_string(p.y));
      hits += got.has_value();
    }
  }
  // Shared edges fall to the higher index.
  const auto layout = layout_chart(grid_cube(3, 4, std::vector<double>(12, 1)));
  check(hit_test_mark({125, 10}, layout, s) == CellId{0, 1}, "vertical edge");
  check(!hit_test_mark({500, 10}, layout, s), "right edge of selection area");
  check(hit_test_mark({0, 0}, layout, s) == CellId{0, 0}, "origin");
  return "10000 points (" + std::to_string(boundary) + " edge coordinates), " + std::to_string(hits) + " hits";
}

// --- summarize

std::string aggregate() {
  std::mt19937_64 rng(13);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto cube = random_cube(rng, 10, 10, -1e3, 1e6);
    const auto shape = cube.shape();
    std::vector<CellId> cells;
    const std::size_t n = rng() % (shape.cell_count() + 1);
    for (std::size_t k = 0; k < n; ++k) {
      cells.push_back({static_cast<std::uint32_t>(rng() % shape.locations), static_cast<std::uint32_t>(rng() % shape.years)});
    }
    std::set<CellId> unique(cells.begin(), cells.end());
    long double sum = 0, lo = INFINITY, hi = -INFINITY;
    for (auto c : unique) {
      sum += cube.value(c);
      lo = std::min<long double>(lo, cube.value(c));
      hi = std::max<long double>(hi, cube.value(c));
    }
    const auto got = summarize(cube, cells);
    check(got.count == unique.size(), "count at pair " + std::to_string(i));
    if (unique.empty()) {
      check(!got.mean && !got.min && !got.max, "empty selection at pair " + std::to_string(i));
      continue;
    }
    auto rel = [](long double a, long double b) {
      return double(std::abs(a - b) / std::max<long double>(1.0L, std::abs(b)));
    };
    const long double mean = sum / unique.size();
    const double err = std::max({rel(got.sum, sum), rel(*got.mean, mean), rel(*got.min, lo), rel(*got.max, hi)});
    worst = std::max(worst, err);
    check(err <= 1e-9, "pair " + std::to_string(i) + " relative error " + std::to_string(err));
  }
  std::ostringstream o;
  o << "1000 pairs, worst relative error " << worst;
  return o.str();
}

// --- haptic mapping

std::string haptic() {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1e4, 1e4);
  for (int i = 0; i < 10000; ++i) {
    double lo = u(rng), hi = u(rng);
    if (lo == hi) continue;
    if (lo > hi) std::swap(lo, hi);
    const ValueRange r{lo, hi};
    std::uniform_real_distribution<double> in(lo, hi);
    double a = in(rng), b = in(rng);
    if (a > b) std::swap(a, b);
    const auto ha = haptic_encode(a, r, HapticMode::absolute), hb = haptic_encode(b, r, HapticMode::absolute);
    check(ha.amplitude <= hb.amplitude, "monotonicity at sample " + std::to_string(i));
    check(ha.amplitude >= 0.1 && ha.amplitude <= 1.0 && hb.amplitude >= 0.1 && hb.amplitude <= 1.0,
          "bounds at sample " + std::to_string(i));
    check(haptic_encode(lo, r, HapticMode::absolute).amplitude == 0.1, "min endpoint at " + std::to_string(i));
    check(haptic_encode(hi, r, HapticMode::absolute).amplitude == 1.0, "max endpoint at " + std::to_string(i));
    const auto d1 = haptic_encode(a, r, HapticMode::difference, b);
    const auto d2 = haptic_encode(b, r, HapticMode::difference, a);
    check(d1 == d2, "difference symmetry at sample " + std::to_string(i));
    check(d1.amplitude >= 0.1 && d1.amplitude <= 1.0, "difference bounds at " + std::to_string(i));
  }
  return "10000 samples";
}

// --- pose math

Eigen::Matrix4d to_matrix(const Pose& p) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() =
      Eigen::Quaterniond(p.orientation.w, p.orientation.x, p.orientation.y, p.orientation.z).toRotationMatrix();
  m.topRightCorner<3, 1>() = Eigen::Vector3d(p.position.x, p.position.y, p.position.z);
  return m;
}

std::string pose_math() {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> pos(-5, 5);
  std::normal_distribution<double> n(0, 1);
  auto random_pose = [&] {
    return Pose{{pos(rng), pos(rng), pos(rng)}, Quaternion{n(rng), n(rng), n(rng), n(rng)}.normalized()};
  };
  double worst = 0, worst_norm = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto a = random_pose(), b = random_pose(), c = random_pose();
    const Eigen::Matrix4d want = to_matrix(a) * to_matrix(b) * to_matrix(c);
    for (const auto& got : {compose(compose(a, b), c), compose(a, compose(b, c))}) {
      worst = std::max(worst, (to_matrix(got) - want).cwiseAbs().maxCoeff());
      worst_norm = std::max(worst_norm, std::abs(got.orientation.norm() - 1.0));
    }
    check(worst <= 1e-9, "triple " + std::to_string(i) + " deviates from matrix product");
    check(worst_norm <= 1e-9, "triple " + std::to_string(i) + " quaternion norm");
  }
  std::ostringstream o;
  o << "10000 triples, max matrix error " << worst << ", max norm error " << worst_norm;
  return o.str();
}

// --- study-task scenarios through the command-line tool

// "(l,y) (l,y) ..." following "answer ".
std::vector<CellId> parse_answer(const std::string& detail) {
  std::vector<CellId> cells;
  std::istringstream in(detail.substr(detail.find("answer ") + 7));
  std::string tok;
  while (in >> tok && tok.front() == '(') {
    unsigned l = 0, y = 0;
    check(std::sscanf(tok.c_str(), "(%u,%u)", &l, &y) == 2, "unreadable answer " + tok);
    cells.push_back({l, y});
  }
  return cells;
}

// Exhaustive answers for a task label "task N kind ...".
std::vector<CellId> brute_force(const DataCube& cube, const std::string& label) {
  std::istringstream in(label);
  std::string word, kind;
  int n = 0;
  in >> word >> n >> kind;
  if (kind == "compare") {
    std::vector<CellId> cells = parse_answer("answer " + label.substr(label.find('(')));
    check(cells.size() == 3, "compare label " + label);
    CellId best = cells[0];
    for (auto c : cells) {
      if (cube.value(c) < cube.value(best) || (cube.value(c) == cube.value(best) && c < best)) best = c;
    }
    return {best};
  }
  std::string axis;
  std::uint32_t index = 0;
  in >> axis >> index;
  std::vector<CellId> slice;
  const auto shape = cube.shape();
  for (std::uint32_t l = 0; l < shape.locations; ++l) {
    for (std::uint32_t y = 0; y < shape.years; ++y) {
      if ((axis == "location" ? l : y) == index) slice.push_back({l, y});
    }
  }
  check(!slice.empty(), "empty slice in " + label);
  if (kind == "range") {
    CellId lo = slice[0], hi = slice[0];
    for (auto c : slice) {
      if (cube.value(c) < cube.value(lo)) lo = c;
      if (cube.value(c) > cube.value(hi)) hi = c;
    }
    return {lo, hi};
  }
  std::stable_sort(slice.begin(), slice.end(), [&](CellId a, CellId b) { return cube.value(a) < cube.value(b); });
  return slice;
}

std::string study_scenarios() {
  std::string detail;
  for (const char* name : {"range_basic", "order_basic", "compare_basic"}) {
    const std::string cmd =
        std::string(HOLOPROXY_CLI) + " run " + HOLOPROXY_SCENARIO_DIR + "/" + name + ".scn --format json 2>&1";
    FILE* p = popen(cmd.c_str(), "r");
    check(p != nullptr, "cannot start the command-line tool");
    std::string out;
    char buf[4096];
    while (auto k = fread(buf, 1, sizeof buf, p)) out.append(buf, k);
    const int status = pclose(p);
    check(WIFEXITED(status) && WEXITSTATUS(status) == 0, std::string(name) + " exited non-zero: " + out);
    const auto report = nlohmann::json::parse(out);
    const auto sc = load_scenario(std::string(HOLOPROXY_SCENARIO_DIR) + "/" + name + ".scn");
    const auto cube = synthetic_cube(sc.cube.locations, sc.cube.years,
                                     sc.cube.seed.value_or(report.at("seed").get<std::uint64_t>()), sc.cube.kind);
    check(cube.shape() == CubeShape{7, 10}, std::string(name) + " cube is not 7x10");
    check(report.at("cube") == cube_digest(cube), std::string(name) + " cube differs");
    std::size_t tasks = 0;
    for (const auto& a : report.at("assertions")) {
      const auto label = a.at("name").get<std::string>();
      check(a.at("passed").get<bool>(), std::string(name) + ": " + label);
      if (label.rfind("task", 0) != 0) continue;
      const auto answer = parse_answer(a.at("detail").get<std::string>());
      check(answer == brute_force(cube, label), std::string(name) + ": " + label + " disagrees with brute force");
      ++tasks;
    }
    check(tasks >= 3, std::string(name) + " ran fewer than 3 tasks");
    detail += std::string(detail.empty() ? "" : ", ") + name + " " + std::to_string(tasks) + " tasks";
  }
  return detail;
}

// --- crash and replay

std::string crash_replay() {
  std::vector<double> v(70);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>((i * 37) % 23);
  const auto cube = grid_cube(7, 10, v);
  const auto screen = ScreenConfig::landscape(1000, 500);
  const auto layout = layout_chart(cube);
  std::mt19937_64 rng(23);
  std::vector<Envelope> msgs;
  std::map<std::string, std::uint64_t> seqs;
  for (int i = 0; i < 200; ++i) {
    const std::string c = i % 3 ? "phone" : "tablet";
    const CellId cell{static_cast<std::uint32_t>(rng() % 7), static_cast<std::uint32_t>(rng() % 10)};
    Payload p;
    switch (rng() % 5) {
      case 0: p = TapScreen{cell_center_px(cell, layout, screen)}; break;
      case 1: p = AxisTap{Axis::year, cell.year}; break;
      case 2: p = PoseUpdate{Pose::translation(double(rng() % 100) / 10, 0, 0)}; break;
      case 3: p = ProjectRequest{Axis::location, cell.location}; break;
      default: p = SummarizeRequest{}; break;
    }
    msgs.push_back({kProtocolVersion, "s1", c, ++seqs[c], p});
  }
  Session reference("s1", cube, screen);
  for (const auto& m : msgs) reference.submit(m);

  for (std::size_t n : {1u, 10u, 100u}) {
    const auto dir = holoproxy::testing::scratch_dir("acceptance-crash-" + std::to_string(n));
    std::filesystem::remove_all(dir / "s1.log");
    std::size_t i = 0;
    {
      Session doomed("s1", cube, screen, dir / "s1.log");
      while (doomed.applied_count() < n) doomed.submit(msgs[i++]);
    }
    // Replaying the interrupted log reproduces the live state at the interruption point.
    Session prefix("s1", cube, screen);
    for (std::size_t k = 0; k < i; ++k) prefix.submit(msgs[k]);
    check(replay(dir / "s1.log").digest == prefix.digest(), "N=" + std::to_string(n) + " interrupted replay");

    auto resumed = Session::recover(dir / "s1.log");
    check(resumed.applied_count() == n, "N=" + std::to_string(n) + " recovered count");
    for (; i < msgs.size(); ++i) resumed.submit(msgs[i]);
    resumed.close();
    check(resumed.digest() == reference.digest(), "N=" + std::to_string(n) + " resumed digest");
    check(replay(dir / "s1.log").digest == reference.digest(), "N=" + std::to_string(n) + " full replay");
  }
  return "N=1,10,100 match the uninterrupted digest";
}

struct Criterion {
  std::string name;
  std::function<std::string()> run;
  double budget_s;  // 0 means no runtime bound
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"protocol-round-trip", round_trip, 5},
      {"reducer-convergence", convergence, 60},
      {"pose-lww", pose_lww, 0},
      {"hit-test-oracle", hit_test, 0},
      {"aggregate-correctness", aggregate, 0},
      {"haptic-mapping", haptic, 0},
      {"pose-math", pose_math, 0},
      {"study-task-scenarios", study_scenarios, 30},
      {"crash-replay", crash_replay, 0},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.run();
    } catch (const Failure& f) {
      ok = false;
      detail = f.what;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const double took = seconds_since(start);
    if (ok && c.budget_s > 0 && took >= c.budget_s) {
      ok = false;
      detail += "; over the " + std::to_string(int(c.budget_s)) + " s budget";
    }
    std::printf("%s %s (%.2f s) %s\n", ok ? "PASS" : "FAIL", c.name.c_str(), took, detail.c_str());
    std::fflush(stdout);
    failed += !ok;
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
