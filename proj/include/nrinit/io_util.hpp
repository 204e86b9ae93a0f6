#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace nrinit {

/// Shortest decimal text that parses back to the same double.
std::string fmt_num(double value);

/// Parses a full token as a double; returns false on trailing garbage.
bool parse_num(std::string_view token, double& out);
bool parse_int(std::string_view token, long& out);

std::vector<std::string_view> split_ws(std::string_view line);
std::vector<std::string_view> split_char(std::string_view line, char sep);
std::string_view trim(std::string_view s);

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);

}  // namespace nrinit
