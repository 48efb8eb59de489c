#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace cursorprof {

// Whole-file read/write. Paths ending in ".gz" are (de)compressed with zlib.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace cursorprof
