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

// Small helpers for the tab-separated manifests.

#ifndef DEJAVU_TEXT_IO_HPP_
#define DEJAVU_TEXT_IO_HPP_

#include <charconv>
#include <cstddef>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "dejavu/error.hpp"

namespace dejavu::text_io {

inline std::vector<std::string> SplitOn(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      break;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string> SplitTabs(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return SplitOn(line, '\t');
}

template <typename T>
T ParseNumber(std::string_view s, const std::string& where) {
  T value{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc() || ptr != end || s.empty()) {
    throw Error(ErrorCode::kParseError, where + ": cannot parse '" + std::string(s) + "'");
  }
  return value;
}

inline int ParseInt(std::string_view s, const std::string& where) {
  return ParseNumber<int>(s, where);
}

inline std::size_t ParseSize(std::string_view s, const std::string& where) {
  return ParseNumber<std::size_t>(s, where);
}

inline double ParseDouble(std::string_view s, const std::string& where) {
  return ParseNumber<double>(s, where);
}

}  // namespace dejavu::text_io

#endif  // DEJAVU_TEXT_IO_HPP_
