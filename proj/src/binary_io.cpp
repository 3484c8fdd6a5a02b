#include "forge/binary_io.hpp"

#include <vector>

namespace forge::io {

void put_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void expect_magic(std::istream& in, std::string_view magic, std::string_view format_name) {
  std::string buf(magic.size(), '\0');
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in || buf != magic) {
    throw FormatError("not a " + std::string(format_name) + " file (bad magic)");
  }
}

void put_string(std::ostream& out, std::string_view s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, std::string_view what) {
  const auto n = get<std::uint64_t>(in, what);
  if (n > kMaxDim) throw FormatError("implausible string length for " + std::string(what));
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw FormatError("truncated file while reading " + std::string(what));
  return s;
}

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  out.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
}

Eigen::MatrixXd get_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, std::string_view what) {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(rows, cols);
  in.read(reinterpret_cast<char*>(rm.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(rm.size())));
  if (!in) throw FormatError("truncated file while reading " + std::string(what));
  return rm;
}

void put_vector(std::ostream& out, const Eigen::VectorXd& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(v.size())));
}

Eigen::VectorXd get_vector(std::istream& in, Eigen::Index n, std::string_view what) {
  Eigen::VectorXd v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(n)));
  if (!in) throw FormatError("truncated file while reading " + std::string(what));
  return v;
}

std::uint64_t get_dim(std::istream& in, std::string_view what) {
  const auto n = get<std::uint64_t>(in, what);
  if (n > kMaxDim) throw FormatError("implausible dimension for " + std::string(what));
  return n;
}

}  // namespace forge::io
