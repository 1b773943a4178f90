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
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "holoproxy/error.hpp"
#include "holoproxy/model.hpp"

namespace holoproxy {

struct PointPx {
  double x = 0;
  double y = 0;
  friend bool operator==(const PointPx&, const PointPx&) = default;
};

/// Pixel rectangle, half-open: [x, x + width) × [y, y + height).
struct PixelRect {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t width = 0;
  std::int32_t height = 0;

  bool contains(PointPx p) const {
    return p.x >= x && p.x < static_cast<double>(x) + width && p.y >= y &&
           p.y < static_cast<double>(y) + height;
  }
  bool intersects(const PixelRect& o) const {
    return x < o.x + o.width && o.x < x + width && y < o.y + o.height && o.y < y + height;
  }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Proxy screen partition: taps in the selection area hit mark bases under the hologram,
/// the exploration area hosts projections and summaries.
struct ScreenConfig {
  std::int32_t width_px = 0;
  std::int32_t height_px = 0;
  PixelRect selection_area;
  PixelRect exploration_area;

  /// Left half selects, right half explores.
  static ScreenConfig landscape(std::int32_t width, std::int32_t height) {
    ScreenConfig s{width, height, {0, 0, width / 2, height}, {width / 2, 0, width - width / 2, height}};
    s.validate();
    return s;
  }

  PixelRect bounds() const { return {0, 0, width_px, height_px}; }
  bool contains(PointPx p) const { return bounds().contains(p); }

  void validate() const {
    auto inside = [this](const PixelRect& r) {
      return r.width > 0 && r.height > 0 && r.x >= 0 && r.y >= 0 &&
             static_cast<std::int64_t>(r.x) + r.width <= width_px &&
             static_cast<std::int64_t>(r.y) + r.height <= height_px;
    };
    if (width_px <= 0 || height_px <= 0) throw Error(ErrorCode::InvalidScreen, "screen size must be positive");
    if (!inside(selection_area)) throw Error(ErrorCode::InvalidScreen, "selection area outside screen");
    if (!inside(exploration_area)) throw Error(ErrorCode::InvalidScreen, "exploration area outside screen");
    if (selection_area.intersects(exploration_area)) {
      throw Error(ErrorCode::InvalidScreen, "selection and exploration areas overlap");
    }
  }

  friend bool operator==(const ScreenConfig&, const ScreenConfig&) = default;
};

/// Maps a tap to the mark whose base lies beneath it. Points outside the selection area
/// (including the exploration area) are a valid "no hit".
inline std::optional<CellId> hit_test_mark(PointPx point, const ChartLayout& layout,
                                           const ScreenConfig& screen) {
  const auto& area = screen.selection_area;
  if (!area.contains(point)) return std::nullopt;
  double u = (point.x - area.x) / area.width;
  double v = (point.y - area.y) / area.height;
  // A point just inside the upper edge may round up to 1.0.
  u = std::min(u, std::nextafter(1.0, 0.0));
  v = std::min(v, std::nextafter(1.0, 0.0));
  return layout.cell_at(u, v);
}

/// Pixel centre of a cell's base, the canonical tap target for that mark.
inline PointPx cell_center_px(CellId cell, const ChartLayout& layout, const ScreenConfig& screen) {
  const auto& r = layout.cell_rect(cell);
  const auto& area = screen.selection_area;
  return {area.x + area.width * (r.x0 + r.x1) / 2.0, area.y + area.height * (r.y0 + r.y1) / 2.0};
}

struct SelectionState {
  std::set<CellId> selected;

  bool contains(CellId c) const { return selected.contains(c); }
  friend bool operator==(const SelectionState&, const SelectionState&) = default;
};

inline SelectionState toggle_select(const SelectionState& state, CellId cell, CubeShape shape) {
  if (!shape.contains(cell)) {
    throw Error(ErrorCode::OutOfBoundsCell, "cell (" + std::to_string(cell.location) + "," +
                                                std::to_string(cell.year) + ") outside cube");
  }
  SelectionState next = state;
  if (!next.selected.erase(cell)) next.selected.insert(cell);
  return next;
}

/// Selects a whole slice, or deselects it when every cell of the slice is already selected.
inline SelectionState axis_select(const SelectionState& state, CubeShape shape, Axis axis,
                                  std::uint32_t index) {
  if (index >= shape.extent(axis)) {
    throw Error(ErrorCode::OutOfBoundsIndex, std::string(to_string(axis)) + " index " +
                                                 std::to_string(index) + " >= " +
                                                 std::to_string(shape.extent(axis)));
  }
  const auto cells = slice_cells(shape, axis, index);
  const bool all_in = std::all_of(cells.begin(), cells.end(), [&](CellId c) { return state.contains(c); });
  SelectionState next = state;
  for (const auto& c : cells) {
    if (all_in) next.selected.erase(c);
    else next.selected.insert(c);
  }
  return next;
}

struct ValueRange {
  double min = 0;
  double max = 0;
  friend bool operator==(const ValueRange&, const ValueRange&) = default;
};

enum class HapticMode { absolute, difference };

struct HapticCommand {
  static constexpr double kMinAmplitude = 0.1;
  static constexpr double kMaxAmplitude = 1.0;
  static constexpr std::uint32_t kPulseMs = 150;
  static constexpr std::uint32_t kMaxDurationMs = 2000;

  double amplitude = kMinAmplitude;
  std::uint32_t duration_ms = kPulseMs;

  bool valid() const {
    return amplitude >= 0.0 && amplitude <= 1.0 && duration_ms > 0 && duration_ms <= kMaxDurationMs;
  }
  friend bool operator==(const HapticCommand&, const HapticCommand&) = default;
};

/// Vibration intensity for a value (absolute) or for the gap between two values
/// (difference), as a fraction of the range mapped onto [0.1, 1.0].
inline HapticCommand haptic_encode(double value, ValueRange range, HapticMode mode,
                                   std::optional<double> other = std::nullopt) {
  if (!std::isfinite(value) || !std::isfinite(range.min) || !std::isfinite(range.max)) {
    throw Error(ErrorCode::InvalidArgument, "haptic inputs must be finite");
  }
  if (!(range.max > range.min)) {
    throw Error(ErrorCode::DegenerateRange, "range max must exceed min");
  }
  const double span = range.max - range.min;
  double fraction = 0;
  if (mode == HapticMode::absolute) {
    fraction = (value - range.min) / span;
  } else {
    if (!other || !std::isfinite(*other)) {
      throw Error(ErrorCode::InvalidArgument, "difference mode needs a finite second value");
    }
    fraction = std::abs(value - *other) / span;
  }
  const double amplitude = HapticCommand::kMinAmplitude +
                           (HapticCommand::kMaxAmplitude - HapticCommand::kMinAmplitude) * fraction;
  return {std::clamp(amplitude, HapticCommand::kMinAmplitude, HapticCommand::kMaxAmplitude),
          HapticCommand::kPulseMs};
}

/// One slice of the cube laid flat for the phone display. value_range spans the whole cube
/// so the 2D chart shares the hologram's scale.
struct Projection2D {
  Axis series_axis = Axis::location;
  std::uint32_t fixed_index = 0;
  std::vector<std::string> labels;
  std::vector<double> values;
  ValueRange value_range;

  /// Cell that produced values[i].
  CellId cell_at(std::size_t i) const {
    const auto free = static_cast<std::uint32_t>(i);
    return series_axis == Axis::location ? CellId{fixed_index, free} : CellId{free, fixed_index};
  }

  friend bool operator==(const Projection2D&, const Projection2D&) = default;
};

inline Projection2D project_series(const DataCube& cube, Axis axis, std::uint32_t index) {
  const auto shape = cube.shape();
  if (index >= shape.extent(axis)) {
    throw Error(ErrorCode::OutOfBoundsIndex, std::string(to_string(axis)) + " index " +
                                                 std::to_string(index) + " >= " +
                                                 std::to_string(shape.extent(axis)));
  }
  Projection2D p;
  p.series_axis = axis;
  p.fixed_index = index;
  p.labels = axis == Axis::location ? cube.years() : cube.locations();
  for (const auto& c : slice_cells(shape, axis, index)) p.values.push_back(cube.value(c));
  p.value_range = {cube.min_value(), cube.max_value()};
  return p;
}

}  // namespace holoproxy
