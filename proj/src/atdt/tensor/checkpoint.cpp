#include "atdt/tensor/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "atdt/common/error.hpp"

namespace atdt {
namespace {

constexpr char kMagic[4] = {'A', 'T', 'D', 'T'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  const uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(entries.size()));
  for (const auto& e : entries) {
    put_u32(os, static_cast<uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    put_u32(os, static_cast<uint32_t>(e.shape.size()));
    for (int ext : e.shape) put_u64(os, static_cast<uint64_t>(ext));
    for (double d : e.data) put_f64(os, d);
  }
  if (!os) throw IoError("short write on checkpoint: " + path);
}

std::vector<CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("not a checkpoint file (bad magic): " + path);
  const uint32_t version = get_u32(is);
  if (version != kVersion)
    throw IoError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
  const uint32_t count = get_u32(is);
  std::vector<CheckpointEntry> entries(count);
  for (auto& e : entries) {
    const uint32_t name_len = get_u32(is);
    e.name.resize(name_len);
    is.read(e.name.data(), name_len);
    const uint32_t rank = get_u32(is);
    e.shape.resize(rank);
    int64_t n = 1;
    for (auto& ext : e.shape) {
      ext = static_cast<int>(get_u64(is));
      n *= ext;
    }
    e.data.resize(static_cast<size_t>(n));
    for (auto& d : e.data) d = get_f64(is);
    if (!is) throw IoError("truncated checkpoint: " + path);
  }
  return entries;
}

}  // namespace atdt
