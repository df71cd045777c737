#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "snl/linalg.hpp"

namespace snl {

// CSV: one row per line, comma separated, '.' decimal point, 17 significant
// digits so values survive a write/read cycle exactly.
void write_csv(std::ostream& os, const Matrix& m);
Matrix read_csv(std::istream& is);

// Binary: "SNLMAT01", u64 rows, u64 cols, then rows*cols f64, all
// little-endian, row-major.
inline constexpr char kBinaryMagic[8] = {'S', 'N', 'L', 'M', 'A', 'T', '0', '1'};
void write_binary(std::ostream& os, const Matrix& m);
Matrix read_binary(std::istream& is);

void save_csv(const std::filesystem::path& path, const Matrix& m);
void save_binary(const std::filesystem::path& path, const Matrix& m);
// Detects the binary magic, otherwise parses CSV.
Matrix load_matrix(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace snl
