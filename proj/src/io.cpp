#include "qgen/io.hpp"

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace qgen {

const char* err_cat_name(ErrCat cat) {
  switch (cat) {
    case ErrCat::Usage: return "usage";
    case ErrCat::Io: return "io";
    case ErrCat::Format: return "format";
    case ErrCat::Config: return "config";
    case ErrCat::Runtime: return "runtime";
  }
  return "runtime";
}

int err_cat_exit_code(ErrCat cat) {
  switch (cat) {
    case ErrCat::Usage: return 2;
    case ErrCat::Io: return 3;
    case ErrCat::Format: return 4;
    case ErrCat::Config: return 5;
    case ErrCat::Runtime: return 1;
  }
  return 1;
}

namespace io {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrCat::Io, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrCat::Io, "cannot open file: " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

void atomic_write(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
  }
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrCat::Io, "cannot write file: " + tmp.string());
    out << content;
    if (!out) throw Error(ErrCat::Io, "short write: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrCat::Io, "rename failed: " + tmp.string() + " -> " + path);
}

std::string fnv1a64_hex(const std::string& bytes) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

std::string file_digest(const std::string& path) { return fnv1a64_hex(read_file(path)); }

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace io
}  // namespace qgen
