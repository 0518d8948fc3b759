#pragma once

#include <string>

namespace drape {

std::string read_file(const std::string& path);

// Writes to a sibling temp file and renames into place so readers never see a
// partial artifact.
void atomic_write_file(const std::string& path, const std::string& bytes);

}  // namespace drape
