#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "nrinit/network.hpp"

namespace nrinit {

// Case file layout (see docs/case_format.md). Bus numbers in the file are
// one-based; the slack angle is in degrees.
//
//   [buses]        count = N
//   [slack]        bus = 1 / magnitude = 1.0 / angle_deg = 0
//   [lines]        from to R X shunt        (one row per line)
//   [matrix]       G = g_i1 ... g_iN        (N rows), then B = ... (N rows)
//   [injections]   bus P Q                  (net injection, loads negative)
//
// Exactly one of [lines] / [matrix] must be present. Buses missing from
// [injections] inject nothing.

GridCase parse_case(std::string_view text);
std::string format_case(const GridCase& c);

GridCase load_case(const std::filesystem::path& path);
void save_case(const GridCase& c, const std::filesystem::path& path);

}  // namespace nrinit
