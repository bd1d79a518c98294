#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, doubled quotes, embedded
// separators and newlines, CRLF or LF line ends.

#include "capcrl/linalg.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capcrl {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;  ///< padded or truncated to header width

  /// Index of a header cell, matched exactly after trimming whitespace.
  std::optional<std::size_t> column(std::string_view name) const;
};

/// Throws input_error on an empty input or an unterminated quote.
CsvTable parse_csv(std::string_view text);
CsvTable read_csv(const std::filesystem::path& path);

std::string csv_field(std::string_view value);
std::string csv_line(const std::vector<std::string>& fields);

/// Shortest round-trip decimal for a double.
std::string format_number(double v);

/// Header line then one line per matrix row.
std::string matrix_csv(const std::vector<std::string>& header, const MatrixXd& m);

/// Strict full-string parse; nullopt on blanks, trailing junk or non-finite.
std::optional<double> parse_number(std::string_view cell);

void write_text_file(const std::filesystem::path& path, std::string_view contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace capcrl
