#include "simdino/binary_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace simdino {

namespace {
void put_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}
}  // namespace

void BinaryWriter::u64(std::uint64_t v) { put_le(os_, v); }
void BinaryWriter::f64(double v) { put_le(os_, std::bit_cast<std::uint64_t>(v)); }
void BinaryWriter::f64s(const std::vector<double>& v) {
  for (double x : v) f64(x);
}
void BinaryWriter::str(std::string_view s) {
  u64(s.size());
  raw(s);
}
void BinaryWriter::raw(std::string_view bytes) { os_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

void BinaryReader::read(char* dst, std::size_t n) {
  is_.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is_.gcount()) != n) throw Error(what_ + ": truncated file");
}

std::uint64_t BinaryReader::u64() {
  unsigned char b[8];
  read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<double> BinaryReader::f64s(std::size_t count) {
  std::vector<double> v(count);
  for (auto& x : v) x = f64();
  return v;
}

std::string BinaryReader::str(std::size_t max_len) {
  const auto n = u64();
  if (n > max_len) throw Error(what_ + ": implausible string length " + std::to_string(n));
  return raw(n);
}

std::string BinaryReader::raw(std::size_t count) {
  std::string s(count, '\0');
  read(s.data(), count);
  return s;
}

void BinaryReader::expect_end() {
  if (is_.peek() != std::char_traits<char>::eof()) throw Error(what_ + ": trailing bytes after payload");
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + tmp + "' for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace simdino
