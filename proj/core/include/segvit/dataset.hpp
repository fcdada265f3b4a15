#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "segvit/labels.hpp"
#include "segvit/netpbm.hpp"
#include "segvit/rng.hpp"

// Synthetic color-shapes segmentation data: rectangles, circles and
// triangles painted in order over a background, one class per color.
namespace segvit {

using Color = std::array<std::uint8_t, 3>;

struct DatasetSpec {
  std::uint64_t seed = 0;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t num_classes = 5;  // class 0 is background
  std::size_t min_shapes = 1;
  std::size_t max_shapes = 3;
  double noise_std = 8.0;       // additive Gaussian noise, 0..255 scale
  std::vector<Color> palette;   // empty: default_palette(num_classes)
  std::size_t train_size = 200;
  std::size_t val_size = 50;

  void validate() const;
  Color color(std::size_t c) const;
};

std::vector<Color> default_palette(std::size_t num_classes);

enum class Split { kTrain, kVal };
std::string split_name(Split s);

enum class ShapeKind { kRect, kCircle, kTriangle };

struct ShapeSpec {
  ShapeKind kind = ShapeKind::kRect;
  std::uint8_t label = 1;
  // rect: y0, x0, y1, x1 (half-open); circle: cy, cx, r;
  // triangle: y0, x0, y1, x1, y2, x2
  std::array<double, 6> p{};
};

// Pixel (y, x) is covered when its centre (y + 0.5, x + 0.5) lies inside.
bool shape_covers(const ShapeSpec& s, std::size_t y, std::size_t x);

std::vector<ShapeSpec> sample_shapes(const DatasetSpec& spec, Split split, std::size_t index);

struct Sample {
  Image image;
  LabelMap labels;
  friend bool operator==(const Sample&, const Sample&) = default;
};

Sample render_sample(const DatasetSpec& spec, Split split, std::size_t index);
std::vector<Sample> make_split(const DatasetSpec& spec, Split split);

// Writes <dir>/<split>/NNNN.ppm and NNNN.pgm plus <dir>/dataset.cfg.
void gen_synthetic_dataset(const DatasetSpec& spec, const std::string& dir);
std::vector<Sample> load_split(const std::string& dir, Split split, std::size_t num_classes);
std::string sample_stem(std::size_t index);

// Horizontal mirror of image and labels.
Sample hflip(const Sample& s);

// Crops the window [y0, y0 + h) x [x0, x0 + w) and resizes it back to the
// sample size with nearest-neighbour sampling, so labels stay valid.
Sample resize_crop(const Sample& s, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w);

}  // namespace segvit
