#include "tomoforge/io/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tomoforge {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& msg) {
  throw FormatError(path.string() + ": " + msg);
}

std::vector<char> slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(path, "read error");
  return bytes;
}

void write_bytes(const fs::path& path, const void* data, std::size_t n) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(path, "cannot open for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) fail(path, "write error");
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

}  // namespace

fs::path sidecar_path(const fs::path& path) { return fs::path(path.string() + ".json"); }

void write_raw(const fs::path& path, std::span<const double> values,
               const std::vector<std::size_t>& dims, const std::string& description,
               const nlohmann::json& extra) {
  std::size_t count = 1;
  for (auto d : dims) count *= d;
  if (count != values.size()) fail(path, "dims do not match the number of values");
  require_finite(values, "write_raw " + path.string());
  std::vector<std::uint32_t> words(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    words[i] = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
  }
  nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
  meta["dims"] = dims;
  meta["dtype"] = "f32le";
  double mn = 0.0, mx = 0.0;
  if (!values.empty()) {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    mn = static_cast<float>(*lo);
    mx = static_cast<float>(*hi);
  }
  meta["min"] = mn;
  meta["max"] = mx;
  meta["description"] = description;
  write_bytes(path, words.data(), words.size() * 4);
  const std::string text = meta.dump(2) + "\n";
  write_bytes(sidecar_path(path), text.data(), text.size());
}

RawArray read_raw(const fs::path& path) {
  const fs::path side = sidecar_path(path);
  const std::vector<char> side_bytes = slurp(side);
  RawArray out;
  try {
    out.sidecar = nlohmann::json::parse(side_bytes.begin(), side_bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    fail(side, std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what());
  }
  if (!out.sidecar.is_object() || !out.sidecar.contains("dims") || !out.sidecar["dims"].is_array()) {
    fail(side, "sidecar lacks a 'dims' array");
  }
  if (out.sidecar.value("dtype", "") != "f32le") fail(side, "dtype must be \"f32le\"");
  std::size_t count = 1;
  for (const auto& d : out.sidecar["dims"]) {
    if (!d.is_number_unsigned()) fail(side, "dims must be nonnegative integers");
    out.dims.push_back(d.get<std::size_t>());
    count *= out.dims.back();
  }
  const std::vector<char> bytes = slurp(path);
  if (bytes.size() != count * 4) {
    std::ostringstream os;
    os << "expected " << count * 4 << " bytes for dims from sidecar, file ends at offset "
       << bytes.size();
    fail(path, os.str());
  }
  out.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t w;
    std::memcpy(&w, bytes.data() + 4 * i, 4);
    const float f = std::bit_cast<float>(to_le(w));
    if (!std::isfinite(f)) fail(path, "non-finite value at byte offset " + std::to_string(4 * i));
    out.data[i] = f;
  }
  return out;
}

void write_raw_image(const fs::path& path, const Image& img, const std::string& description,
                     const nlohmann::json& extra) {
  write_raw(path, img.data, {img.rows, img.cols}, description, extra);
}

Image read_raw_image(const fs::path& path) {
  RawArray a = read_raw(path);
  if (a.dims.size() != 2) fail(sidecar_path(path), "image sidecar must have two dims");
  Image img;
  img.rows = a.dims[0];
  img.cols = a.dims[1];
  img.data = std::move(a.data);
  return img;
}

void write_pgm(const fs::path& path, const Image& img, int bits, double lo, double hi) {
  if (bits != 8 && bits != 16) fail(path, "PGM bit depth must be 8 or 16");
  if (!(hi > lo)) fail(path, "PGM range must satisfy hi > lo");
  require_finite(img.data, "write_pgm " + path.string());
  const unsigned maxval = bits == 8 ? 255u : 65535u;
  std::string header = "P5\n" + std::to_string(img.cols) + " " + std::to_string(img.rows) + "\n" +
                       std::to_string(maxval) + "\n";
  std::vector<unsigned char> bytes(header.begin(), header.end());
  for (double v : img.data) {
    const double t = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    const auto q = static_cast<unsigned>(std::lround(t * maxval));
    if (bits == 16) bytes.push_back(static_cast<unsigned char>(q >> 8));
    bytes.push_back(static_cast<unsigned char>(q & 0xFF));
  }
  write_bytes(path, bytes.data(), bytes.size());
}

Image read_pgm(const fs::path& path) {
  const std::vector<char> bytes = slurp(path);
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_uint = [&](const char* what) {
    skip_space();
    const std::size_t start = pos;
    unsigned long long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + static_cast<unsigned>(bytes[pos] - '0');
      if (v > (1ull << 32)) fail(path, std::string(what) + " too large at offset " + std::to_string(start));
      ++pos;
    }
    if (pos == start) fail(path, std::string("expected ") + what + " at offset " + std::to_string(start));
    return static_cast<std::size_t>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') fail(path, "not a binary PGM (P5) at offset 0");
  pos = 2;
  const std::size_t cols = read_uint("width");
  const std::size_t rows = read_uint("height");
  const std::size_t maxval = read_uint("maxval");
  if (maxval == 0 || maxval > 65535) fail(path, "maxval out of range at offset " + std::to_string(pos));
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    fail(path, "missing whitespace after header at offset " + std::to_string(pos));
  }
  ++pos;
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  const std::size_t need = rows * cols * bpp;
  if (bytes.size() - pos < need) {
    fail(path, "truncated pixel data: expected " + std::to_string(need) + " bytes from offset " +
                   std::to_string(pos) + ", file ends at offset " + std::to_string(bytes.size()));
  }
  Image img(rows, cols);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    const unsigned v = bpp == 1 ? p[i] : (static_cast<unsigned>(p[2 * i]) << 8) | p[2 * i + 1];
    if (v > maxval) fail(path, "sample exceeds maxval at offset " + std::to_string(pos + i * bpp));
    img.data[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

Image read_image(const fs::path& path) {
  if (path.extension() == ".pgm") return read_pgm(path);
  return read_raw_image(path);
}

void write_image(const fs::path& path, const Image& img, const std::string& description) {
  if (path.extension() == ".pgm") {
    write_pgm(path, img);
  } else {
    write_raw_image(path, img, description);
  }
}

}  // namespace tomoforge
