#include "cursorprof/io.hpp"

#include <zlib.h>

#include <array>
#include <fstream>
#include <memory>
#include <sstream>

#include "cursorprof/error.hpp"

namespace cursorprof {
namespace {

bool is_gzip_path(const std::filesystem::path& path) {
  return path.extension() == ".gz";
}

struct GzCloser {
  void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzFile = std::unique_ptr<gzFile_s, GzCloser>;

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  if (is_gzip_path(path)) {
    GzFile f(gzopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path.string());
    std::string out;
    std::array<char, 1 << 16> buf{};
    for (;;) {
      const int n = gzread(f.get(), buf.data(), static_cast<unsigned>(buf.size()));
      if (n < 0) throw DataError("corrupt gzip stream in " + path.string());
      if (n == 0) break;
      out.append(buf.data(), static_cast<std::size_t>(n));
    }
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw DataError("read failed for " + path.string());
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (is_gzip_path(path)) {
    GzFile f(gzopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot write " + path.string());
    if (!text.empty() &&
        gzwrite(f.get(), text.data(), static_cast<unsigned>(text.size())) == 0)
      throw DataError("gzip write failed for " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace cursorprof
