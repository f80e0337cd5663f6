// Copyright 2026 The eqm Authors
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

// CSV output: header row, ',' separator, '.' decimal point, '\n' line
// endings. Doubles are rendered with the shortest round-trip representation
// so repeated runs produce byte-identical files.

#ifndef EQM_CSV_HPP_
#define EQM_CSV_HPP_

#include <charconv>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqm {

inline std::string csv_num(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw std::runtime_error("csv_num: formatting failed");
  return std::string(buf, ptr);
}

inline std::string csv_num(long long value) { return std::to_string(value); }
inline std::string csv_num(int value) { return std::to_string(value); }

class CsvFile {
 public:
  CsvFile(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::binary | std::ios::trunc), columns_(header.size()) {
    if (!out_) throw std::runtime_error("CsvFile: cannot open " + path + " for writing");
    write_row(header);
  }

  void write_row(const std::vector<std::string>& cells) {
    if (cells.size() != columns_) {
      throw std::invalid_argument("CsvFile: wrong number of cells in row");
    }
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

}  // namespace eqm

#endif  // EQM_CSV_HPP_
