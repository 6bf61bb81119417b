//
// Copyright 2026 The dejavu-audit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#ifndef DEJAVU_ERROR_HPP_
#define DEJAVU_ERROR_HPP_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dejavu {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidCatalog,
  kDuplicateId,
  kInfeasibleSplit,
  kInvalidBox,
  kDegenerateCrop,
  kIoFailure,
  kParseError,
  kBadMagic,
  kBadVersion,
  kCorruptHeader,
  kTruncatedPayload,
  kNonFiniteEntry,
  kEmptyIntersection,
  kUnlabeledPublicSet,
  kDimMismatch,
  kKTooLarge,
  kEmptyRecords,
  kMisalignedRecords,
  kIncompatibleReports,
  kSingleClass,
  kNonFiniteLoss,
  kInvalidConfig,
  kMissingAxisInput,
  kMissingImage,
  kLayerUnavailable,
  kShapeMismatch,
};

inline std::string_view ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidCatalog: return "InvalidCatalog";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kInfeasibleSplit: return "InfeasibleSplit";
    case ErrorCode::kInvalidBox: return "InvalidBox";
    case ErrorCode::kDegenerateCrop: return "DegenerateCrop";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kBadVersion: return "BadVersion";
    case ErrorCode::kCorruptHeader: return "CorruptHeader";
    case ErrorCode::kTruncatedPayload: return "TruncatedPayload";
    case ErrorCode::kNonFiniteEntry: return "NonFiniteEntry";
    case ErrorCode::kEmptyIntersection: return "EmptyIntersection";
    case ErrorCode::kUnlabeledPublicSet: return "UnlabeledPublicSet";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kKTooLarge: return "KTooLarge";
    case ErrorCode::kEmptyRecords: return "EmptyRecords";
    case ErrorCode::kMisalignedRecords: return "MisalignedRecords";
    case ErrorCode::kIncompatibleReports: return "IncompatibleReports";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kMissingAxisInput: return "MissingAxisInput";
    case ErrorCode::kMissingImage: return "MissingImage";
    case ErrorCode::kLayerUnavailable: return "LayerUnavailable";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
  }
  return "Unknown";
}

// Every failure in the library surfaces as an Error carrying a code. Some
// codes attach a numeric detail (e.g. the offending row for kNonFiniteEntry).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::int64_t> detail = std::nullopt)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code),
        detail_(detail) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::int64_t> detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::optional<std::int64_t> detail_;
};

}  // namespace dejavu

#endif  // DEJAVU_ERROR_HPP_
