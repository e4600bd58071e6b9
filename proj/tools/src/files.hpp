#pragma once

#include <filesystem>
#include <string>

namespace wsic::app {

/// Whole-file read; NotFound when the file cannot be opened.
std::string read_text(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

} // namespace wsic::app
