#include "pat/io.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <vector>

namespace pat {

namespace {

void put_u64_le(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint64_t get_u64_le(const unsigned char* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

void put_u32_le(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) throw IoError("read failure on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace

void save_tensor(const Tensor& t, const std::filesystem::path& path) {
  if (t.ndim() > 255) throw IoError("tensor rank too large for container format");
  std::string bytes;
  bytes.reserve(7 + 8 * static_cast<size_t>(t.ndim()) +
                static_cast<size_t>(t.numel()) * (t.precision() == Precision::Double ? 8 : 4));
  bytes += "PATN";
  bytes.push_back(0x01);
  bytes.push_back(t.precision() == Precision::Double ? 0x01 : 0x00);
  bytes.push_back(static_cast<char>(t.ndim()));
  for (int64_t e : t.shape()) put_u64_le(bytes, static_cast<uint64_t>(e));
  if (t.precision() == Precision::Double) {
    for (int64_t i = 0; i < t.numel(); ++i) {
      uint64_t u;
      double v = t[i];
      std::memcpy(&u, &v, 8);
      put_u64_le(bytes, u);
    }
  } else {
    for (int64_t i = 0; i < t.numel(); ++i) {
      float f = static_cast<float>(t[i]);
      uint32_t u;
      std::memcpy(&u, &f, 4);
      put_u32_le(bytes, u);
    }
  }
  write_file(path, bytes);
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::string bytes = read_file(path);
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  size_t n = bytes.size();
  if (n < 7 || std::memcmp(p, "PATN", 4) != 0)
    throw IoError(path.string() + ": not a tensor container (bad magic)");
  if (p[4] != 0x01)
    throw IoError(path.string() + ": unsupported container version " + std::to_string(p[4]));
  if (p[5] > 1) throw IoError(path.string() + ": unknown dtype code " + std::to_string(p[5]));
  Precision prec = p[5] == 1 ? Precision::Double : Precision::Single;
  int ndim = p[6];
  if (ndim < 1 || ndim > 8)
    throw IoError(path.string() + ": unsupported rank " + std::to_string(ndim));
  size_t off = 7;
  if (n < off + 8 * static_cast<size_t>(ndim)) throw IoError(path.string() + ": truncated header");
  std::vector<int64_t> shape(static_cast<size_t>(ndim));
  uint64_t count = 1;
  for (int d = 0; d < ndim; ++d) {
    uint64_t e = get_u64_le(p + off);
    off += 8;
    if (e == 0 || e > static_cast<uint64_t>(std::numeric_limits<int64_t>::max()))
      throw IoError(path.string() + ": invalid extent");
    shape[static_cast<size_t>(d)] = static_cast<int64_t>(e);
    if (count > std::numeric_limits<uint64_t>::max() / e)
      throw IoError(path.string() + ": extents overflow");
    count *= e;
  }
  size_t width = prec == Precision::Double ? 8 : 4;
  if (n != off + width * count)
    throw IoError(path.string() + ": payload size mismatch (expected " +
                  std::to_string(off + width * count) + " bytes, file has " + std::to_string(n) +
                  ")");
  std::vector<double> values(count);
  if (prec == Precision::Double) {
    for (uint64_t i = 0; i < count; ++i) {
      uint64_t u = get_u64_le(p + off + 8 * i);
      double v;
      std::memcpy(&v, &u, 8);
      values[i] = v;
    }
  } else {
    for (uint64_t i = 0; i < count; ++i) {
      uint32_t u = 0;
      for (int b = 0; b < 4; ++b) u |= static_cast<uint32_t>(p[off + 4 * i + b]) << (8 * b);
      float f;
      std::memcpy(&f, &u, 4);
      values[i] = static_cast<double>(f);
    }
  }
  return Tensor::from_vector(std::move(shape), std::move(values), prec);
}

void export_pgm(const Tensor& image, const std::filesystem::path& path) {
  if (image.ndim() != 2)
    throw DimensionError("export_pgm: need a 2D image, got " + shape_string(image.shape()));
  if (!image.all_finite()) throw IoError("export_pgm: image contains non-finite values");
  double lo = image.min_value();
  double hi = image.max_value();
  double range = hi - lo;
  std::string bytes = "P5\n" + std::to_string(image.extent(1)) + " " +
                      std::to_string(image.extent(0)) + "\n65535\n";
  for (int64_t i = 0; i < image.numel(); ++i) {
    uint32_t v = 0;
    if (range > 0.0) {
      double s = (image[i] - lo) / range * 65535.0;
      v = static_cast<uint32_t>(s + 0.5);
      if (v > 65535) v = 65535;
    }
    bytes.push_back(static_cast<char>((v >> 8) & 0xff));
    bytes.push_back(static_cast<char>(v & 0xff));
  }
  write_file(path, bytes);
}

Tensor import_pgm(const std::filesystem::path& path) {
  std::string bytes = read_file(path);
  size_t pos = 0;
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos;
      } else {
        break;
      }
    }
    size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw IoError(path.string() + ": truncated header");
    return bytes.substr(start, pos - start);
  };

  if (next_token() != "P5") throw IoError(path.string() + ": not a binary PGM");
  int64_t width = std::stoll(next_token());
  int64_t height = std::stoll(next_token());
  int64_t maxval = std::stoll(next_token());
  if (width <= 0 || height <= 0) throw IoError(path.string() + ": invalid image size");
  if (maxval != 255 && maxval != 65535)
    throw IoError(path.string() + ": unsupported maxval " + std::to_string(maxval));
  ++pos;  // single whitespace byte after maxval
  size_t sample = maxval == 65535 ? 2 : 1;
  size_t need = static_cast<size_t>(width * height) * sample;
  if (bytes.size() - pos != need) throw IoError(path.string() + ": payload size mismatch");

  Tensor out({height, width});
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  for (int64_t i = 0; i < out.numel(); ++i) {
    uint32_t v = sample == 2
                     ? (static_cast<uint32_t>(p[2 * i]) << 8) | static_cast<uint32_t>(p[2 * i + 1])
                     : static_cast<uint32_t>(p[i]);
    out[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return out;
}

}  // namespace pat
