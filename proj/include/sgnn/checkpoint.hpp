#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "sgnn/mat.hpp"

namespace sgnn {

using NamedTensors = std::vector<std::pair<std::string, Mat>>;

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// "SGNN", version u32, then per tensor: name length u32, name bytes,
/// rows u32, cols u32, rows·cols little-endian float64.
std::vector<unsigned char> encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::vector<unsigned char>& bytes);

void save_checkpoint(const NamedTensors& tensors, const std::filesystem::path& path);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Little-endian encoders shared by the binary formats.
class ByteWriter {
 public:
  void raw(const void* data, std::size_t n);
  void u32(std::uint32_t v);
  void f64(double v);
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}
  /// Throws ParseError naming `what` and the current offset when short.
  void raw(void* out, std::size_t n, const char* what);
  std::uint32_t u32(const char* what);
  double f64(const char* what);
  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<unsigned char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes);

}  // namespace sgnn
