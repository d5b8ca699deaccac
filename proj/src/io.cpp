#include "rtkd/io.hpp"

#include <fstream>
#include <sstream>

#include "rtkd/errors.hpp"

namespace rtkd {

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw FormatError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw FormatError("read failed for " + path.string());
  return ss.str();
}

std::string read_text_record(const std::filesystem::path& path) {
  std::string text = read_file(path);
  if (text.empty() || text.back() != '\n') {
    throw FormatError(path.string() + ": truncated at offset " + std::to_string(text.size()) +
                      " (no final newline)");
  }
  return text;
}

}  // namespace rtkd
