#include "segvit/netpbm.hpp"

#include <cctype>
#include <fstream>
#include <iterator>
#include <sstream>

#include "segvit/errors.hpp"

namespace segvit {

namespace {

struct Header {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t data_offset = 0;
};

class HeaderReader {
 public:
  explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

  void expect_magic(const char* magic) {
    if (b_.size() < 2 || b_[0] != magic[0] || b_[1] != magic[1]) {
      throw ParseError(std::string("netpbm: expected magic ") + magic, 0);
    }
    pos_ = 2;
  }

  // Whitespace and comments, then a decimal field.
  std::size_t number(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    std::size_t v = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (v > (1u << 24)) throw ParseError(std::string("netpbm: ") + what + " too large", start);
      ++pos_;
    }
    if (pos_ == start) {
      throw ParseError(std::string("netpbm: expected ") + what, pos_);
    }
    return v;
  }

  std::size_t pos() const noexcept { return pos_; }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_start() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw ParseError("netpbm: expected whitespace before raster", pos_);
    }
    return pos_ + 1;
  }

 private:
  void skip_space() {
    while (pos_ < b_.size()) {
      const char c = b_[pos_];
      if (c == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& b_;
  std::size_t pos_ = 0;
};

Header parse_header(const std::string& bytes, const char* magic, std::size_t channels) {
  HeaderReader r(bytes);
  r.expect_magic(magic);
  Header h;
  h.width = r.number("width");
  h.height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (maxval != 255) throw ParseError("netpbm: maxval must be 255", r.pos());
  h.data_offset = r.raster_start();
  const std::size_t need = h.width * h.height * channels;
  if (bytes.size() < h.data_offset + need) {
    throw ParseError("netpbm: raster truncated, need " + std::to_string(need) + " bytes", bytes.size());
  }
  if (bytes.size() > h.data_offset + need) {
    throw ParseError("netpbm: trailing bytes after raster", h.data_offset + need);
  }
  return h;
}

std::string header(const char* magic, std::size_t width, std::size_t height) {
  return std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

}  // namespace

std::string encode_ppm(const Image& image) {
  if (image.rgb.size() != image.height * image.width * 3) {
    throw ContractViolation("encode_ppm: pixel buffer does not match size");
  }
  std::string out = header("P6", image.width, image.height);
  out.append(image.rgb.begin(), image.rgb.end());
  return out;
}

std::string encode_pgm(const LabelMap& labels) {
  std::string out = header("P5", labels.width, labels.height);
  out.append(labels.labels.begin(), labels.labels.end());
  return out;
}

Image decode_ppm(const std::string& bytes) {
  const Header h = parse_header(bytes, "P6", 3);
  Image img(h.height, h.width);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), bytes.end(), img.rgb.begin());
  return img;
}

LabelMap decode_pgm(const std::string& bytes, std::size_t num_classes) {
  const Header h = parse_header(bytes, "P5", 1);
  LabelMap m(h.height, h.width);
  std::copy(bytes.begin() + static_cast<std::ptrdiff_t>(h.data_offset), bytes.end(), m.labels.begin());
  if (num_classes > 0) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      const std::uint8_t v = m.labels[i];
      if (v != kIgnoreLabel && v >= num_classes) {
        throw DataError("label " + std::to_string(v) + " at pixel " + std::to_string(i) + " >= " +
                        std::to_string(num_classes) + " classes");
      }
    }
  }
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on '" + path + "'");
}

Image read_ppm(const std::string& path) { return decode_ppm(read_file(path)); }
void write_ppm(const std::string& path, const Image& image) { write_file(path, encode_ppm(image)); }
LabelMap read_pgm(const std::string& path, std::size_t num_classes) {
  return decode_pgm(read_file(path), num_classes);
}
void write_pgm(const std::string& path, const LabelMap& labels) { write_file(path, encode_pgm(labels)); }

Tensor image_to_tensor(const Image& image) {
  Tensor t({image.height, image.width, 3});
  for (std::size_t i = 0; i < image.rgb.size(); ++i) t[i] = image.rgb[i] / 255.0;
  return t;
}

}  // namespace segvit
