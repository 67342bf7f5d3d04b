#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hscode {

std::string trim(std::string_view s);
// Trims and collapses internal whitespace runs to a single space.
std::string collapse_whitespace(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::string join(const std::vector<std::string> &parts, std::string_view sep);

std::string read_file(const std::string &path);
void write_file(const std::string &path, std::string_view contents);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

}  // namespace hscode
