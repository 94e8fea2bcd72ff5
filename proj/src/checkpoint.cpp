#include "sgnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "sgnn/errors.hpp"

namespace sgnn {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void ByteWriter::raw(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  bytes_.insert(bytes_.end(), p, p + n);
}

void ByteWriter::u32(std::uint32_t v) { raw(&v, sizeof v); }
void ByteWriter::f64(double v) { raw(&v, sizeof v); }

void ByteReader::raw(void* out, std::size_t n, const char* what) {
  if (remaining() < n) throw ParseError(std::string("truncated ") + what, pos_);
  std::memcpy(out, bytes_.data() + pos_, n);
  pos_ += n;
}

std::uint32_t ByteReader::u32(const char* what) {
  std::uint32_t v;
  raw(&v, sizeof v, what);
  return v;
}

double ByteReader::f64(const char* what) {
  double v;
  raw(&v, sizeof v, what);
  return v;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<unsigned char> encode_checkpoint(const NamedTensors& tensors) {
  ByteWriter w;
  w.raw("SGNN", 4);
  w.u32(kCheckpointVersion);
  for (const auto& [name, m] : tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    for (double v : m.values()) w.f64(v);
  }
  return std::move(w.bytes());
}

NamedTensors decode_checkpoint(const std::vector<unsigned char>& bytes) {
  ByteReader r(bytes);
  char magic[4];
  r.raw(magic, 4, "magic");
  if (std::memcmp(magic, "SGNN", 4) != 0) throw ParseError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version), 4);
  NamedTensors out;
  while (!r.at_end()) {
    const std::uint32_t len = r.u32("tensor name length");
    if (len > r.remaining()) throw ParseError("tensor name runs past end of file", r.offset());
    std::string name(len, '\0');
    r.raw(name.data(), len, "tensor name");
    const std::uint32_t rows = r.u32("tensor rows");
    const std::uint32_t cols = r.u32("tensor cols");
    const std::size_t count = static_cast<std::size_t>(rows) * cols;
    if (count > r.remaining() / 8) throw ParseError("tensor '" + name + "' payload truncated", r.offset());
    Mat m(rows, cols);
    for (double& v : m.values()) v = r.f64("tensor payload");
    out.emplace_back(std::move(name), std::move(m));
  }
  return out;
}

void save_checkpoint(const NamedTensors& tensors, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(tensors));
}

NamedTensors load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace sgnn
