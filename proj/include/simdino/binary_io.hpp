#pragma once

// Little-endian binary primitives shared by checkpoints, feature dumps and raw images.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "simdino/matrix.hpp"

namespace simdino {

class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}
  void u64(std::uint64_t v);
  void f64(double v);
  void f64s(const std::vector<double>& v);
  /// Length-prefixed bytes.
  void str(std::string_view s);
  void raw(std::string_view bytes);

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string what) : is_(is), what_(std::move(what)) {}
  std::uint64_t u64();
  double f64();
  std::vector<double> f64s(std::size_t count);
  std::string str(std::size_t max_len = 1 << 20);
  std::string raw(std::size_t count);
  /// Throws unless the stream is exhausted.
  void expect_end();

 private:
  void read(char* dst, std::size_t n);
  std::istream& is_;
  std::string what_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

}  // namespace simdino
