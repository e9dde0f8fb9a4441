#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>

namespace pmat {

// Writes through `fill` into a temporary sibling of `path`, then renames it
// into place so readers never observe a partial file.
void write_atomic(const std::filesystem::path& path, bool binary,
                  const std::function<void(std::ostream&)>& fill);

}  // namespace pmat
