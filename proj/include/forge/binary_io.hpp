#pragma once

// Little-endian primitive I/O shared by the model, basis, dataset and
// trajectory formats.

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace forge::io {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
T get(std::istream& in, std::string_view what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError("truncated file while reading " + std::string(what));
  return value;
}

void put_magic(std::ostream& out, std::string_view magic);
/// Throws FormatError if the next bytes differ from `magic`.
void expect_magic(std::istream& in, std::string_view magic, std::string_view format_name);

void put_string(std::ostream& out, std::string_view s);
std::string get_string(std::istream& in, std::string_view what);

/// Row-major doubles; shape is written by the caller.
void put_matrix(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd get_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols, std::string_view what);

void put_vector(std::ostream& out, const Eigen::VectorXd& v);
Eigen::VectorXd get_vector(std::istream& in, Eigen::Index n, std::string_view what);

/// Sanity cap on shapes read from files.
constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 28;
std::uint64_t get_dim(std::istream& in, std::string_view what);

}  // namespace forge::io
