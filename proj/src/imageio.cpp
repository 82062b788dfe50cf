#include "ba/imageio.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <vector>

namespace ba::io {
namespace {

std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::string& header, const void* data, std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw std::runtime_error("write failed: " + path);
}

// Header tokenizer shared by the Netpbm and PFM readers.
class HeaderReader {
public:
  HeaderReader(const std::string& path, const std::vector<unsigned char>& buf) : path_(path), buf_(buf) {}

  std::string token(bool allow_comments) {
    skip_space(allow_comments);
    std::size_t start = pos_;
    while (pos_ < buf_.size() && !std::isspace(buf_[pos_])) ++pos_;
    if (start == pos_) throw FormatError(path_, pos_, "unexpected end of header");
    return {buf_.begin() + static_cast<std::ptrdiff_t>(start), buf_.begin() + static_cast<std::ptrdiff_t>(pos_)};
  }

  long integer(bool allow_comments) {
    std::size_t at = pos_;
    std::string t = token(allow_comments);
    char* end = nullptr;
    long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0) throw FormatError(path_, at, "expected positive integer, got '" + t + "'");
    return v;
  }

  double real() {
    std::size_t at = pos_;
    std::string t = token(false);
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (*end != '\0' || v == 0.0) throw FormatError(path_, at, "expected nonzero scale, got '" + t + "'");
    return v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_start() {
    if (pos_ >= buf_.size() || !std::isspace(buf_[pos_])) throw FormatError(path_, pos_, "missing header terminator");
    return pos_ + 1;
  }

  std::size_t pos() const { return pos_; }

private:
  void skip_space(bool allow_comments) {
    while (pos_ < buf_.size()) {
      if (std::isspace(buf_[pos_])) {
        ++pos_;
      } else if (allow_comments && buf_[pos_] == '#') {
        while (pos_ < buf_.size() && buf_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& path_;
  const std::vector<unsigned char>& buf_;
  std::size_t pos_ = 0;
};

std::uint8_t to_byte(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

}  // namespace

void write_pnm(const std::string& path, const ImageF& img) {
  require(img.channels() == 1 || img.channels() == 3, "write_pnm: channels must be 1 or 3");
  std::ostringstream hdr;
  hdr << (img.channels() == 1 ? "P5" : "P6") << "\n" << img.width() << " " << img.height() << "\n255\n";
  std::vector<std::uint8_t> bytes(img.data().size());
  std::transform(img.data().begin(), img.data().end(), bytes.begin(), to_byte);
  dump(path, hdr.str(), bytes.data(), bytes.size());
}

void write_pgm(const std::string& path, const Map& map) {
  require(map.channels() == 1, "write_pgm: expects one channel");
  write_pnm(path, map);
}

void write_ppm(const std::string& path, const ImageF& img) { write_pnm(path, to_rgb(img)); }

ImageF read_pnm(const std::string& path) {
  const auto buf = slurp(path);
  HeaderReader hr(path, buf);
  std::string magic = hr.token(true);
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw FormatError(path, 0, "unsupported magic '" + magic + "'");
  long w = hr.integer(true);
  long h = hr.integer(true);
  long maxval = hr.integer(true);
  if (maxval > 65535) throw FormatError(path, hr.pos(), "maxval out of range");
  std::size_t start = hr.payload_start();
  const std::size_t bps = maxval < 256 ? 1 : 2;
  const std::size_t need = static_cast<std::size_t>(w) * h * channels * bps;
  if (buf.size() - start < need)
    throw FormatError(path, buf.size(), "truncated payload: need " + std::to_string(need) + " bytes");
  ImageF img(static_cast<int>(h), static_cast<int>(w), channels);
  auto& d = img.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    unsigned v = bps == 1 ? buf[start + i] : (unsigned{buf[start + 2 * i]} << 8) | buf[start + 2 * i + 1];
    d[i] = static_cast<double>(v) / static_cast<double>(maxval);
  }
  return img;
}

void write_pfm(const std::string& path, const ImageF& img) {
  require(img.channels() == 1 || img.channels() == 3, "write_pfm: channels must be 1 or 3");
  std::ostringstream hdr;
  hdr << (img.channels() == 1 ? "Pf" : "PF") << "\n" << img.width() << " " << img.height() << "\n-1.0\n";
  const std::size_t row = static_cast<std::size_t>(img.width()) * img.channels();
  std::vector<std::uint32_t> words(img.data().size());
  for (int y = 0; y < img.height(); ++y) {
    const std::size_t src = static_cast<std::size_t>(img.height() - 1 - y) * row;
    for (std::size_t i = 0; i < row; ++i) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(img.data()[src + i]));
      if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
      words[y * row + i] = bits;
    }
  }
  dump(path, hdr.str(), words.data(), words.size() * sizeof(std::uint32_t));
}

ImageF read_pfm(const std::string& path) {
  const auto buf = slurp(path);
  HeaderReader hr(path, buf);
  std::string magic = hr.token(false);
  int channels = 0;
  if (magic == "Pf") channels = 1;
  else if (magic == "PF") channels = 3;
  else throw FormatError(path, 0, "unsupported magic '" + magic + "'");
  long w = hr.integer(false);
  long h = hr.integer(false);
  double scale = hr.real();
  std::size_t start = hr.payload_start();
  const bool little = scale < 0.0;
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  const std::size_t need = row * h * 4;
  if (buf.size() - start < need)
    throw FormatError(path, buf.size(), "truncated payload: need " + std::to_string(need) + " bytes");
  ImageF img(static_cast<int>(h), static_cast<int>(w), channels);
  for (long y = 0; y < h; ++y) {
    const std::size_t dst = static_cast<std::size_t>(h - 1 - y) * row;
    for (std::size_t i = 0; i < row; ++i) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &buf[start + (y * row + i) * 4], 4);
      const bool swap = (std::endian::native == std::endian::little) != little;
      if (swap) bits = __builtin_bswap32(bits);
      img.data()[dst + i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return img;
}

ImageF read_image(const std::string& path) {
  auto ends_with = [&](const char* s) {
    const std::size_t n = std::strlen(s);
    return path.size() >= n && path.compare(path.size() - n, n, s) == 0;
  };
  if (ends_with(".pfm")) return read_pfm(path);
  return read_pnm(path);
}

ImageF quantize8(const ImageF& img) {
  ImageF out = img;
  for (auto& v : out.data()) v = to_byte(v) / 255.0;
  return out;
}

}  // namespace ba::io
