// io.hpp - Small output helpers shared by the CSV/JSON writers.

#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>

namespace dicke::io {

/// Round-trip exact decimal form of a double (17 significant digits).
std::string fmt(double x);

/// Writes through a temporary sibling file and renames it into place.
void write_atomically(const std::filesystem::path& path,
                      const std::function<void(std::ostream&)>& writer);

}  // namespace dicke::io
