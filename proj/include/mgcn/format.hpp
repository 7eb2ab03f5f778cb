#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "mgcn/tensor.hpp"

namespace mgcn {

// %.17g: round-trips every finite double exactly.
std::string format_double(double v);
// Whole-field parse; throws ValidationError naming `where` on junk.
double parse_double(std::string_view s, const std::string& where = "value");

// Header-free CSV, one matrix row per line.
std::string matrix_to_csv(const Tensor& m);
// Rejects ragged rows and non-finite entries, reporting 1-based row/column.
Tensor matrix_from_csv(std::string_view text, const std::string& where);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

Tensor read_matrix_csv(const std::filesystem::path& path);
void write_matrix_csv(const std::filesystem::path& path, const Tensor& m);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

} // namespace mgcn
