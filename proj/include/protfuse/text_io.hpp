#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace protfuse {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
std::string to_lower(std::string_view s);

/// Whole-file reads and writes; both throw DataError on I/O failure.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace protfuse
