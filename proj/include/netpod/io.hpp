#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace netpod {

/// Shortest text that round-trips a double: 17 significant digits, "%.17g".
std::string format_double(double value);

std::string read_text_file(const std::filesystem::path& path);

/// Writes `contents` to a sibling temp file then renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace netpod
