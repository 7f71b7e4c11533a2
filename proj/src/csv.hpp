#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cfrec::csv {

/// Splits one CSV record. Supports double-quoted fields with "" escapes;
/// surrounding whitespace of unquoted fields is trimmed.
std::vector<std::string> split_record(std::string_view line);

/// Splits text into lines, dropping the trailing '\r' of CRLF files.
std::vector<std::string> split_lines(const std::string& text);

std::string read_file(const std::string& path);

}  // namespace cfrec::csv
