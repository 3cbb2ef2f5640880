#pragma once

// Small file and text helpers shared by the pipeline stages.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace toxhmm {

// Shortest decimal form that parses back to the same double. NaN renders as
// an empty string, which is how gaps appear in CSV output.
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place, so readers
// see either the old content or the new, never a prefix.
void atomic_write(const std::filesystem::path& path, std::string_view content);

// Header plus rows of already formatted cells.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const;
};

// RFC 4180 quoting when the cell needs it.
std::string csv_escape(std::string_view cell);

// Minimal CSV reader: quoted fields, doubled quotes, CRLF tolerated.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace toxhmm
