#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace qgen {

// Error categories map to CLI exit codes; `what()` is the one-line message.
enum class ErrCat { Usage, Io, Format, Config, Runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrCat cat, const std::string& msg) : std::runtime_error(msg), cat_(cat) {}
  ErrCat category() const { return cat_; }

 private:
  ErrCat cat_;
};

const char* err_cat_name(ErrCat cat);
int err_cat_exit_code(ErrCat cat);

namespace io {

std::string read_file(const std::string& path);
std::vector<std::string> read_lines(const std::string& path);

// Writes via a temp file in the same directory, then renames over the target.
void atomic_write(const std::string& path, const std::string& content);

// FNV-1a 64-bit, hex-encoded. Used for manifest digests, not security.
std::string fnv1a64_hex(const std::string& bytes);
std::string file_digest(const std::string& path);

std::vector<std::string> split_ws(const std::string& line);

}  // namespace io
}  // namespace qgen
