#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "synthgap/errors.hpp"

namespace synthgap {

namespace fs = std::filesystem;

void write_file_bytes(const fs::path& path, const void* data, size_t size);
std::vector<uint8_t> read_file_bytes(const fs::path& path);
void write_text_file(const fs::path& path, const std::string& text);
std::string read_text_file(const fs::path& path);

// Locale-independent float formatting (std::to_chars), shortest-exact by
// default. All CSV/SVG/plot output goes through these so emitted bytes are
// deterministic across environments.
std::string format_double(double v);

// %.*g-style with `sig` significant digits; the documented sweep-CSV
// precision is 6.
std::string format_sig(double v, int sig);

double parse_double(const std::string& s);

std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace synthgap
