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
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "holoproxy/error.hpp"
#include "holoproxy/interaction.hpp"
#include "holoproxy/model.hpp"

namespace holoproxy {

enum class TaskKind { range, order, compare };

constexpr std::string_view to_string(TaskKind k) {
  switch (k) {
    case TaskKind::range: return "range";
    case TaskKind::order: return "order";
    case TaskKind::compare: return "compare";
  }
  return "";
}

/// Local minimum and maximum of one slice.
struct RangeAnswer {
  CellId min_cell;
  CellId max_cell;
  friend bool operator==(const RangeAnswer&, const RangeAnswer&) = default;
};

namespace detail {
inline void check_slice(const DataCube& cube, Axis axis, std::uint32_t index) {
  if (index >= cube.shape().extent(axis)) {
    throw Error(ErrorCode::OutOfBoundsIndex, std::string(to_string(axis)) + " index " + std::to_string(index));
  }
}
}  // namespace detail

/// Brute-force argmin/argmax over the slice; ties go to the lowest free-axis index.
inline RangeAnswer oracle_range(const DataCube& cube, Axis axis, std::uint32_t index) {
  detail::check_slice(cube, axis, index);
  const auto cells = slice_cells(cube.shape(), axis, index);
  RangeAnswer a{cells.front(), cells.front()};
  for (const auto& c : cells) {
    if (cube.value(c) < cube.value(a.min_cell)) a.min_cell = c;
    if (cube.value(c) > cube.value(a.max_cell)) a.max_cell = c;
  }
  return a;
}

/// Slice cells in ascending value order; equal values keep axis order.
inline std::vector<CellId> oracle_order(const DataCube& cube, Axis axis, std::uint32_t index) {
  detail::check_slice(cube, axis, index);
  auto cells = slice_cells(cube.shape(), axis, index);
  std::stable_sort(cells.begin(), cells.end(),
                   [&](CellId a, CellId b) { return cube.value(a) < cube.value(b); });
  return cells;
}

/// Lowest-valued of three distinct cells; ties go to the lexicographically lowest
/// (location, year).
inline CellId oracle_compare(const DataCube& cube, const std::array<CellId, 3>& cells) {
  if (std::set<CellId>(cells.begin(), cells.end()).size() != 3) {
    throw Error(ErrorCode::InvalidArgument, "compare needs three distinct cells");
  }
  std::optional<CellId> best;
  for (const auto& c : cells) {
    const double v = cube.value(c);
    if (!best || v < cube.value(*best) || (v == cube.value(*best) && c < *best)) best = c;
  }
  return *best;
}

// What a participant concludes from what the proxy showed them. These read received data
// (a projection, a run of vibration pulses) rather than the cube.

inline RangeAnswer range_from_projection(const Projection2D& p) {
  std::size_t lo = 0, hi = 0;
  for (std::size_t i = 1; i < p.values.size(); ++i) {
    if (p.values[i] < p.values[lo]) lo = i;
    if (p.values[i] > p.values[hi]) hi = i;
  }
  return {p.cell_at(lo), p.cell_at(hi)};
}

inline std::vector<CellId> order_from_projection(const Projection2D& p) {
  std::vector<std::size_t> idx(p.values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p.values[a] < p.values[b]; });
  std::vector<CellId> out;
  for (auto i : idx) out.push_back(p.cell_at(i));
  return out;
}

/// The weakest pulse marks the lowest value.
inline CellId compare_from_pulses(const std::array<CellId, 3>& cells, const std::array<HapticCommand, 3>& pulses) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < 3; ++i) {
    if (pulses[i].amplitude < pulses[best].amplitude ||
        (pulses[i].amplitude == pulses[best].amplitude && cells[i] < cells[best])) {
      best = i;
    }
  }
  return cells[best];
}

}  // namespace holoproxy
