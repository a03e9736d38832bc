#include "atdt/scenegen/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "atdt/common/error.hpp"

namespace atdt::scenegen {
namespace {

constexpr double kDepthPgmScale = 655.35;

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  return is;
}

void read_header(std::ifstream& is, const std::string& path, const char* magic, int& w, int& h,
                 int& maxval) {
  std::string m;
  is >> m >> w >> h >> maxval;
  if (m != magic || !is) throw IoError("bad netpbm header in " + path);
  is.get();  // single whitespace after maxval
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 3) throw ContractViolation("write_ppm: expected [3,H,W]");
  const int h = s[1], w = s[2];
  auto os = open_out(path);
  os << "P6\n" << w << " " << h << "\n255\n";
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::string buf(static_cast<size_t>(plane) * 3, '\0');
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c) {
      const double v = std::clamp(image.data()[c * plane + i], 0.0, 1.0);
      buf[i * 3 + c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("short write: " + path);
}

Tensor read_ppm(const std::string& path) {
  auto is = open_in(path);
  int w, h, maxval;
  read_header(is, path, "P6", w, h, maxval);
  const int64_t plane = static_cast<int64_t>(h) * w;
  std::string buf(static_cast<size_t>(plane) * 3, '\0');
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is) throw IoError("truncated ppm: " + path);
  std::vector<double> v(static_cast<size_t>(plane) * 3);
  for (int64_t i = 0; i < plane; ++i)
    for (int c = 0; c < 3; ++c)
      v[c * plane + i] = static_cast<unsigned char>(buf[i * 3 + c]) / 255.0;
  return Tensor::from_vector({3, h, w}, std::move(v));
}

void write_depth_pgm16(const std::string& path, const Tensor& depth) {
  const Shape& s = depth.shape();
  if (s.size() != 3 || s[0] != 1) throw ContractViolation("write_depth_pgm16: expected [1,H,W]");
  const int h = s[1], w = s[2];
  auto os = open_out(path);
  os << "P5\n" << w << " " << h << "\n65535\n";
  std::string buf(static_cast<size_t>(h) * w * 2, '\0');
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
    const long q = std::lround(std::clamp(depth.data()[i] * kDepthPgmScale, 0.0, 65535.0));
    buf[i * 2] = static_cast<char>((q >> 8) & 0xff);  // MSB first
    buf[i * 2 + 1] = static_cast<char>(q & 0xff);
  }
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("short write: " + path);
}

Tensor read_depth_pgm16(const std::string& path) {
  auto is = open_in(path);
  int w, h, maxval;
  read_header(is, path, "P5", w, h, maxval);
  if (maxval != 65535) throw IoError("expected 16-bit pgm: " + path);
  std::string buf(static_cast<size_t>(h) * w * 2, '\0');
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is) throw IoError("truncated pgm: " + path);
  std::vector<double> v(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
    const unsigned hi = static_cast<unsigned char>(buf[i * 2]);
    const unsigned lo = static_cast<unsigned char>(buf[i * 2 + 1]);
    v[i] = static_cast<double>((hi << 8) | lo) / kDepthPgmScale;
  }
  return Tensor::from_vector({1, h, w}, std::move(v));
}

void write_pgm8(const std::string& path, const Tensor& map, double scale) {
  const Shape& s = map.shape();
  if (s.size() != 3 || s[0] != 1) throw ContractViolation("write_pgm8: expected [1,H,W]");
  const int h = s[1], w = s[2];
  auto os = open_out(path);
  os << "P5\n" << w << " " << h << "\n255\n";
  std::string buf(static_cast<size_t>(h) * w, '\0');
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
    buf[i] = static_cast<char>(
        static_cast<unsigned char>(std::lround(std::clamp(map.data()[i] * scale, 0.0, 255.0))));
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!os) throw IoError("short write: " + path);
}

Tensor read_pgm8(const std::string& path, double scale) {
  auto is = open_in(path);
  int w, h, maxval;
  read_header(is, path, "P5", w, h, maxval);
  if (maxval != 255) throw IoError("expected 8-bit pgm: " + path);
  std::string buf(static_cast<size_t>(h) * w, '\0');
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is) throw IoError("truncated pgm: " + path);
  std::vector<double> v(static_cast<size_t>(h) * w);
  for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
    v[i] = static_cast<unsigned char>(buf[i]) / scale;
  return Tensor::from_vector({1, h, w}, std::move(v));
}

}  // namespace atdt::scenegen
