#include "snl/matrix_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "snl/error.hpp"

namespace snl {

namespace {

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char bytes[8];
  if (!is.read(reinterpret_cast<char*>(bytes), 8)) fail(ErrorCode::Io, "truncated binary matrix");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

double parse_double(std::string_view tok, std::size_t line) {
  while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
  while (!tok.empty() && (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
    tok.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail(ErrorCode::Io, "csv line " + std::to_string(line) + ": cannot parse '" +
                            std::string(tok) + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(std::ostream& os, const Matrix& m) {
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

Matrix read_csv(std::istream& is) {
  std::vector<double> data;
  std::size_t rows = 0, cols = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::size_t count = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      data.push_back(parse_double(rest.substr(0, comma), line_no));
      ++count;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (rows == 0) {
      cols = count;
    } else if (count != cols) {
      fail(ErrorCode::Io, "csv line " + std::to_string(line_no) + ": expected " +
                              std::to_string(cols) + " fields, got " + std::to_string(count));
    }
    ++rows;
  }
  return Matrix(rows, cols, std::move(data));
}

void write_binary(std::ostream& os, const Matrix& m) {
  os.write(kBinaryMagic, sizeof kBinaryMagic);
  put_u64(os, m.rows());
  put_u64(os, m.cols());
  for (double v : m.data()) put_u64(os, std::bit_cast<std::uint64_t>(v));
}

Matrix read_binary(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kBinaryMagic, 8) != 0) {
    fail(ErrorCode::Io, "binary matrix: bad magic");
  }
  const std::uint64_t rows = get_u64(is);
  const std::uint64_t cols = get_u64(is);
  if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) {
    fail(ErrorCode::Io, "binary matrix: implausible shape");
  }
  std::vector<double> data(rows * cols);
  for (double& v : data) v = std::bit_cast<double>(get_u64(is));
  return Matrix(rows, cols, std::move(data));
}

void save_csv(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_csv(os, m);
}

void save_binary(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_binary(os, m);
}

Matrix load_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open " + path.string());
  char head[8] = {};
  is.read(head, 8);
  const bool binary = is.gcount() == 8 && std::memcmp(head, kBinaryMagic, 8) == 0;
  is.clear();
  is.seekg(0);
  return binary ? read_binary(is) : read_csv(is);
}

}  // namespace snl
