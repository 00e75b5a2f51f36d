// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace strata::textio {

/// Splits one delimited line. No quoting: fields never contain the delimiter.
std::vector<std::string> split(std::string_view line, char delimiter = ',');
std::string join(const std::vector<std::string>& fields, char delimiter = ',');

/// Reads the next line that is neither empty nor a '#' comment. Strips a
/// trailing '\r'. Returns false at end of stream.
bool next_record(std::istream& in, std::string& line, std::size_t& line_number);

/// Shortest decimal text that round-trips to the same double.
std::string format_double(double value);
std::optional<double> parse_double(std::string_view text);
std::optional<long> parse_long(std::string_view text);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace strata::textio
