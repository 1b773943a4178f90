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

#include <stdexcept>
#include <string>
#include <string_view>

namespace holoproxy {

enum class ErrorCode {
  // dataset ingestion
  MalformedCsv,
  MissingCell,
  DuplicateCell,
  NonNumericValue,
  NonFiniteValue,
  EmptyDataset,
  InvalidCube,
  // interaction
  OutOfBoundsCell,
  OutOfBoundsIndex,
  OutOfScreen,
  DegenerateRange,
  InvalidArgument,
  InvalidScreen,
  // wire protocol
  IncompleteFrame,
  MalformedFrame,
  UnknownPayloadTag,
  UnsupportedVersion,
  ProtocolViolation,
  UnknownSession,
  // persistence
  CorruptLog,
  DigestMismatch,
  Io,
  // harness
  InvalidScenario,
  AssertionFailed,
  Timeout,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedCsv: return "MalformedCsv";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::DuplicateCell: return "DuplicateCell";
    case ErrorCode::NonNumericValue: return "NonNumericValue";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::InvalidCube: return "InvalidCube";
    case ErrorCode::OutOfBoundsCell: return "OutOfBoundsCell";
    case ErrorCode::OutOfBoundsIndex: return "OutOfBoundsIndex";
    case ErrorCode::OutOfScreen: return "OutOfScreen";
    case ErrorCode::DegenerateRange: return "DegenerateRange";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidScreen: return "InvalidScreen";
    case ErrorCode::IncompleteFrame: return "IncompleteFrame";
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::UnknownPayloadTag: return "UnknownPayloadTag";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::CorruptLog: return "CorruptLog";
    case ErrorCode::DigestMismatch: return "DigestMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::AssertionFailed: return "AssertionFailed";
    case ErrorCode::Timeout: return "Timeout";
  }
  return "Unknown";
}

inline bool error_code_from_string(std::string_view name, ErrorCode& out) {
  for (int i = 0; i <= static_cast<int>(ErrorCode::Timeout); ++i) {
    auto code = static_cast<ErrorCode>(i);
    if (to_string(code) == name) {
      out = code;
      return true;
    }
  }
  return false;
}

/// Every failure in the library is reported as an Error carrying a stable code.
/// what() reads "<Code>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace holoproxy
