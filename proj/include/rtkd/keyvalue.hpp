#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace rtkd {

/// Flat `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Malformed lines and repeated keys raise FormatError naming `source`.
std::map<std::string, std::string> parse_key_values(const std::string& text, const std::string& source);

std::string format_key_values(const std::vector<std::pair<std::string, std::string>>& entries);

// Typed conversions; failures raise ValidationError naming the key.
long long parse_integer(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
bool parse_flag(const std::string& key, const std::string& value);

/// Shortest text that reads back to the same double.
std::string format_real(double v);

}  // namespace rtkd
