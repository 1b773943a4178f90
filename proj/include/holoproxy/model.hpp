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
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ranges>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <utility>
#include <vector>

#include "holoproxy/error.hpp"
#include "holoproxy/sha256.hpp"

namespace holoproxy {

/// Address of one mark: a (location, year) pair, both 0-based.
/// Ordering is lexicographic on (location, year).
struct CellId {
  std::uint32_t location = 0;
  std::uint32_t year = 0;

  friend auto operator<=>(const CellId&, const CellId&) = default;
};

enum class Axis { location, year };

constexpr std::string_view to_string(Axis axis) {
  return axis == Axis::location ? "location" : "year";
}

inline std::optional<Axis> axis_from_string(std::string_view s) {
  if (s == "location") return Axis::location;
  if (s == "year") return Axis::year;
  return std::nullopt;
}

struct CubeShape {
  std::uint32_t locations = 0;
  std::uint32_t years = 0;

  bool contains(CellId cell) const { return cell.location < locations && cell.year < years; }
  std::uint32_t extent(Axis axis) const { return axis == Axis::location ? locations : years; }
  std::size_t cell_count() const { return std::size_t{locations} * years; }
  std::size_t index_of(CellId cell) const { return std::size_t{cell.location} * years + cell.year; }

  friend bool operator==(const CubeShape&, const CubeShape&) = default;
};

/// Cells of one slice in free-axis order: fixing a location yields its years, fixing a year
/// yields its locations.
inline std::vector<CellId> slice_cells(CubeShape shape, Axis axis, std::uint32_t index) {
  std::vector<CellId> cells;
  if (axis == Axis::location) {
    cells.reserve(shape.years);
    for (std::uint32_t y = 0; y < shape.years; ++y) cells.push_back({index, y});
  } else {
    cells.reserve(shape.locations);
    for (std::uint32_t l = 0; l < shape.locations; ++l) cells.push_back({l, index});
  }
  return cells;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec == std::errc::result_out_of_range) {
    return s.front() == '-' ? -HUGE_VAL : HUGE_VAL;
  }
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_integer(std::string_view s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

/// Splits one CSV record. Fields may be double-quoted; `""` inside quotes is a literal quote.
inline std::optional<std::vector<std::string>> split_csv_record(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      if (!trim(field).empty()) return std::nullopt;
      field.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      fields.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else if (was_quoted) {
      if (c != ' ' && c != '\t' && c != '\r') return std::nullopt;
    } else {
      field.push_back(c);
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(was_quoted ? field : std::string(trim(field)));
  return fields;
}

inline std::string quote_csv_field(std::string_view s) {
  bool needs = s.empty() || s.find_first_of(",\"\r\n") != std::string_view::npos ||
               trim(s).size() != s.size();
  if (!needs) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

/// JSON-style string escaping; used for labels in canonical serializations.
inline std::string escape_label(std::string_view s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          static constexpr char kHex[] = "0123456789abcdef";
          out += "\\u00";
          out.push_back(kHex[c >> 4]);
          out.push_back(kHex[c & 0xF]);
        } else {
          out.push_back(static_cast<char>(c));
        }
    }
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

/// Year labels sort numerically when both parse as integers, numeric labels before
/// non-numeric ones, and lexicographically otherwise. Equal numbers fall back to text order.
struct YearLabelLess {
  bool operator()(std::string_view a, std::string_view b) const {
    auto na = detail::parse_integer(a);
    auto nb = detail::parse_integer(b);
    if (na && nb) {
      if (*na != *nb) return *na < *nb;
      return a < b;
    }
    if (na) return true;
    if (nb) return false;
    return a < b;
  }
};

/// Dense location × year matrix with one finite value per cell. Immutable once built.
class DataCube {
 public:
  /// Validates every invariant; throws Error(InvalidCube / NonFiniteValue).
  static DataCube create(std::vector<std::string> locations, std::vector<std::string> years,
                         std::vector<double> values, std::string measure_name = "value",
                         std::string measure_unit = "") {
    if (locations.empty() || years.empty()) {
      throw Error(ErrorCode::EmptyDataset, "cube needs at least one location and one year");
    }
    if (values.size() != locations.size() * years.size()) {
      throw Error(ErrorCode::InvalidCube, "value matrix is " + std::to_string(values.size()) +
                                              " cells, expected " +
                                              std::to_string(locations.size() * years.size()));
    }
    check_unique(locations, "location");
    check_unique(years, "year");
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw Error(ErrorCode::NonFiniteValue, "cell " + std::to_string(i) + " is not finite");
      }
    }
    DataCube cube;
    cube.locations_ = std::move(locations);
    cube.years_ = std::move(years);
    cube.values_ = std::move(values);
    cube.measure_name_ = std::move(measure_name);
    cube.measure_unit_ = std::move(measure_unit);
    return cube;
  }

  const std::vector<std::string>& locations() const { return locations_; }
  const std::vector<std::string>& years() const { return years_; }
  /// Row-major: index = location * years + year.
  const std::vector<double>& values() const { return values_; }
  const std::string& measure_name() const { return measure_name_; }
  const std::string& measure_unit() const { return measure_unit_; }

  CubeShape shape() const {
    return {static_cast<std::uint32_t>(locations_.size()), static_cast<std::uint32_t>(years_.size())};
  }

  double value(CellId cell) const {
    if (!shape().contains(cell)) {
      throw Error(ErrorCode::OutOfBoundsCell, "cell (" + std::to_string(cell.location) + "," +
                                                  std::to_string(cell.year) + ") outside cube");
    }
    return values_[shape().index_of(cell)];
  }

  double min_value() const { return *std::min_element(values_.begin(), values_.end()); }
  double max_value() const { return *std::max_element(values_.begin(), values_.end()); }

  friend bool operator==(const DataCube&, const DataCube&) = default;

 private:
  DataCube() = default;

  static void check_unique(const std::vector<std::string>& labels, const char* axis) {
    std::unordered_set<std::string> seen;
    for (const auto& label : labels) {
      if (!seen.insert(label).second) {
        throw Error(ErrorCode::InvalidCube, std::string("duplicate ") + axis + " label '" + label + "'");
      }
    }
  }

  std::vector<std::string> locations_;
  std::vector<std::string> years_;
  std::vector<double> values_;
  std::string measure_name_;
  std::string measure_unit_;
};

/// Parses `location,year,value` CSV. Optional `# measure: <name>` and `# unit: <unit>`
/// lines may precede the header; other `#` lines and blank lines are skipped.
inline DataCube load_dataset(std::istream& in) {
  std::string measure_name = "value";
  std::string measure_unit;
  bool header_seen = false;
  std::vector<std::string> locations;
  std::map<std::string, std::size_t> location_index;
  std::set<std::string, YearLabelLess> year_set;
  std::map<std::pair<std::size_t, std::string>, double> cells;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (line_no == 1 && raw.rfind("\xEF\xBB\xBF", 0) == 0) raw.erase(0, 3);
    std::string_view line = detail::trim(raw);
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (header_seen) continue;
      std::string_view body = detail::trim(line.substr(1));
      auto colon = body.find(':');
      if (colon != std::string_view::npos) {
        auto key = detail::trim(body.substr(0, colon));
        auto val = std::string(detail::trim(body.substr(colon + 1)));
        if (key == "measure") measure_name = val;
        else if (key == "unit") measure_unit = val;
      }
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    auto fields = detail::split_csv_record(line);
    if (!fields) throw Error(ErrorCode::MalformedCsv, where + ": unbalanced quotes");
    if (!header_seen) {
      if (fields->size() != 3 || (*fields)[0] != "location" || (*fields)[1] != "year" ||
          (*fields)[2] != "value") {
        throw Error(ErrorCode::MalformedCsv, where + ": expected header 'location,year,value'");
      }
      header_seen = true;
      continue;
    }
    if (fields->size() != 3) {
      throw Error(ErrorCode::MalformedCsv,
                  where + ": expected 3 fields, got " + std::to_string(fields->size()));
    }
    const std::string& location = (*fields)[0];
    const std::string& year = (*fields)[1];
    if (location.empty() || year.empty()) {
      throw Error(ErrorCode::MalformedCsv, where + ": empty location or year label");
    }
    auto value = detail::parse_double((*fields)[2]);
    if (!value) {
      throw Error(ErrorCode::NonNumericValue, where + ": '" + (*fields)[2] + "' is not a number");
    }
    if (!std::isfinite(*value)) {
      throw Error(ErrorCode::NonFiniteValue, where + ": '" + (*fields)[2] + "' is not finite");
    }
    auto [it, inserted] = location_index.try_emplace(location, locations.size());
    if (inserted) locations.push_back(location);
    year_set.insert(year);
    if (!cells.try_emplace({it->second, year}, *value).second) {
      throw Error(ErrorCode::DuplicateCell, where + ": (" + location + ", " + year + ") repeated");
    }
  }
  if (!header_seen && locations.empty()) throw Error(ErrorCode::EmptyDataset, "no header and no rows");
  if (cells.empty()) throw Error(ErrorCode::EmptyDataset, "no data rows");

  std::vector<std::string> years(year_set.begin(), year_set.end());
  std::vector<double> values;
  values.reserve(locations.size() * years.size());
  for (std::size_t l = 0; l < locations.size(); ++l) {
    for (const auto& year : years) {
      auto it = cells.find({l, year});
      if (it == cells.end()) {
        throw Error(ErrorCode::MissingCell, "(" + locations[l] + ", " + year + ") has no row");
      }
      values.push_back(it->second);
    }
  }
  return DataCube::create(std::move(locations), std::move(years), std::move(values),
                          std::move(measure_name), std::move(measure_unit));
}

inline DataCube load_dataset(std::string_view text) {
  std::istringstream in{std::string(text)};
  return load_dataset(in);
}

/// CSV export accepted by load_dataset; reloading yields an identical cube.
inline std::string to_csv(const DataCube& cube) {
  std::string out;
  out += "# measure: " + cube.measure_name() + "\n";
  if (!cube.measure_unit().empty()) out += "# unit: " + cube.measure_unit() + "\n";
  out += "location,year,value\n";
  const auto shape = cube.shape();
  for (std::uint32_t l = 0; l < shape.locations; ++l) {
    for (std::uint32_t y = 0; y < shape.years; ++y) {
      out += detail::quote_csv_field(cube.locations()[l]);
      out += ',';
      out += detail::quote_csv_field(cube.years()[y]);
      out += ',';
      out += detail::format_double(cube.value({l, y}));
      out += '\n';
    }
  }
  return out;
}

/// Byte-stable text form used for digests: header, measure, axes, then row-major values.
inline std::string canonical_serialization(const DataCube& cube) {
  std::string out = "holoproxy-cube 1\n";
  out += "measure " + detail::escape_label(cube.measure_name()) + "\n";
  out += "unit " + detail::escape_label(cube.measure_unit()) + "\n";
  out += "locations " + std::to_string(cube.locations().size()) + "\n";
  for (const auto& l : cube.locations()) out += detail::escape_label(l) + "\n";
  out += "years " + std::to_string(cube.years().size()) + "\n";
  for (const auto& y : cube.years()) out += detail::escape_label(y) + "\n";
  out += "values\n";
  for (double v : cube.values()) out += detail::format_double(v) + "\n";
  return out;
}

inline std::string cube_digest(const DataCube& cube) {
  return sha256_hex(canonical_serialization(cube));
}

/// Axis-aligned rectangle in normalized selection-area coordinates, half-open on the
/// upper edges: [x0, x1) × [y0, y1).
struct UnitRect {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  friend bool operator==(const UnitRect&, const UnitRect&) = default;
};

/// Years run along the horizontal (columns), locations along the depth axis (rows),
/// the measure is the bar height.
class ChartLayout {
 public:
  const std::string& cube_digest() const { return cube_digest_; }
  CubeShape shape() const { return shape_; }
  std::uint32_t columns() const { return shape_.years; }
  std::uint32_t rows() const { return shape_.locations; }
  const std::vector<double>& bar_heights() const { return bar_heights_; }
  const std::vector<UnitRect>& cell_rects() const { return cell_rects_; }

  double bar_height(CellId cell) const { return bar_heights_.at(shape_.index_of(checked(cell))); }
  const UnitRect& cell_rect(CellId cell) const { return cell_rects_.at(shape_.index_of(checked(cell))); }

  /// Lower edge of column `c` (c == columns() gives the right edge, exactly 1).
  double column_edge(std::uint32_t c) const { return static_cast<double>(c) / shape_.years; }
  double row_edge(std::uint32_t r) const { return static_cast<double>(r) / shape_.locations; }

  /// The unique cell whose rect contains (x, y), or none outside [0,1)².
  std::optional<CellId> cell_at(double x, double y) const {
    if (!(x >= 0.0 && x < 1.0 && y >= 0.0 && y < 1.0)) return std::nullopt;
    auto col = locate(x, shape_.years, [this](std::uint32_t c) { return column_edge(c); });
    auto row = locate(y, shape_.locations, [this](std::uint32_t r) { return row_edge(r); });
    return CellId{row, col};
  }

  friend ChartLayout layout_chart(const DataCube& cube);

 private:
  CellId checked(CellId cell) const {
    if (!shape_.contains(cell)) {
      throw Error(ErrorCode::OutOfBoundsCell, "cell (" + std::to_string(cell.location) + "," +
                                                  std::to_string(cell.year) + ") outside layout");
    }
    return cell;
  }

  // floor(t * n) can land one off near an edge; settle against the same edge values the
  // rects use so lookup and containment never disagree.
  template <typename Edge>
  static std::uint32_t locate(double t, std::uint32_t n, Edge edge) {
    auto i = static_cast<std::uint32_t>(std::min<double>(std::floor(t * n), n - 1));
    while (i > 0 && t < edge(i)) --i;
    while (i + 1 < n && t >= edge(i + 1)) ++i;
    return i;
  }

  std::string cube_digest_;
  CubeShape shape_;
  std::vector<double> bar_heights_;
  std::vector<UnitRect> cell_rects_;
};

/// Heights are value / max with a zero baseline; negative values clamp to 0 and an
/// all-nonpositive cube gets all-zero heights.
inline ChartLayout layout_chart(const DataCube& cube) {
  ChartLayout layout;
  layout.cube_digest_ = cube_digest(cube);
  layout.shape_ = cube.shape();
  const double max_value = cube.max_value();
  layout.bar_heights_.reserve(cube.values().size());
  for (double v : cube.values()) {
    layout.bar_heights_.push_back(max_value > 0 ? std::max(0.0, v / max_value) : 0.0);
  }
  const auto shape = layout.shape_;
  layout.cell_rects_.reserve(shape.cell_count());
  for (std::uint32_t l = 0; l < shape.locations; ++l) {
    for (std::uint32_t y = 0; y < shape.years; ++y) {
      layout.cell_rects_.push_back(
          {layout.column_edge(y), layout.row_edge(l), layout.column_edge(y + 1), layout.row_edge(l + 1)});
    }
  }
  return layout;
}

/// Aggregates over a selection. For an empty selection count is 0 and min/max/mean are
/// unset; sum is 0.
struct SummaryStats {
  std::uint64_t count = 0;
  std::optional<double> min;
  std::optional<double> max;
  std::optional<double> mean;
  double sum = 0.0;

  bool empty() const { return count == 0; }
  friend bool operator==(const SummaryStats&, const SummaryStats&) = default;
};

/// Statistics over the distinct cells of `selection` (any range of CellId). Accumulates in
/// cell order with compensated summation, so the result does not depend on input order.
template <std::ranges::input_range Cells>
  requires std::same_as<std::ranges::range_value_t<Cells>, CellId>
SummaryStats summarize(const DataCube& cube, const Cells& selection) {
  std::vector<CellId> cells(std::ranges::begin(selection), std::ranges::end(selection));
  const auto shape = cube.shape();
  for (const auto& c : cells) {
    if (!shape.contains(c)) {
      throw Error(ErrorCode::OutOfBoundsCell, "cell (" + std::to_string(c.location) + "," +
                                                  std::to_string(c.year) + ") outside cube");
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());

  SummaryStats stats;
  if (cells.empty()) return stats;
  double lo = cube.value(cells.front());
  double hi = lo;
  double sum = 0.0;
  double compensation = 0.0;
  for (const auto& c : cells) {
    const double v = cube.value(c);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    const double t = sum + v;
    compensation += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  sum += compensation;
  stats.count = cells.size();
  stats.min = lo;
  stats.max = hi;
  stats.sum = sum;
  stats.mean = std::clamp(sum / static_cast<double>(cells.size()), lo, hi);
  return stats;
}

}  // namespace holoproxy
