#pragma once

#include <filesystem>
#include <string>

namespace rtkd {

/// Writes to a sibling temporary file and renames it over `path`.
/// Failures raise FormatError.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

/// Whole-file read; a missing or unreadable file raises FormatError.
std::string read_file(const std::filesystem::path& path);

/// read_file for text this library writes, which always ends in a newline;
/// a missing final newline is reported as truncation.
std::string read_text_record(const std::filesystem::path& path);

}  // namespace rtkd
