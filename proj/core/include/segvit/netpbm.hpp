#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "segvit/labels.hpp"
#include "segvit/tensor.hpp"

// Binary portable pixmaps (P6) and graymaps (P5), maxval 255.
namespace segvit {

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // row-major, interleaved

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), rgb(h * w * 3, 0) {}
  friend bool operator==(const Image&, const Image&) = default;
};

std::string encode_ppm(const Image& image);
std::string encode_pgm(const LabelMap& labels);
Image decode_ppm(const std::string& bytes);
// Throws DataError when a value is >= num_classes and not the ignore label;
// num_classes == 0 skips the check.
LabelMap decode_pgm(const std::string& bytes, std::size_t num_classes = 0);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& image);
LabelMap read_pgm(const std::string& path, std::size_t num_classes = 0);
void write_pgm(const std::string& path, const LabelMap& labels);

// [H, W, 3] in [0, 1].
Tensor image_to_tensor(const Image& image);

}  // namespace segvit
