#include "segvit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>

#include "segvit/config.hpp"
#include "segvit/errors.hpp"

namespace segvit {

namespace fs = std::filesystem;

void DatasetSpec::validate() const {
  if (num_classes < 2 || num_classes > 255) {
    throw ContractViolation("dataset: num_classes must lie in [2, 255]");
  }
  if (height == 0 || width == 0) throw ContractViolation("dataset: empty image size");
  if (min_shapes > max_shapes) throw ContractViolation("dataset: min_shapes > max_shapes");
  if (noise_std < 0.0) throw ContractViolation("dataset: negative noise");
  if (!palette.empty()) {
    if (palette.size() != num_classes) {
      throw ContractViolation("dataset: palette has " + std::to_string(palette.size()) +
                              " colors for " + std::to_string(num_classes) + " classes");
    }
    std::set<Color> seen(palette.begin(), palette.end());
    if (seen.size() != palette.size()) throw ContractViolation("dataset: palette colors repeat");
  }
}

Color DatasetSpec::color(std::size_t c) const {
  if (!palette.empty()) return palette.at(c);
  return default_palette(num_classes).at(c);
}

std::vector<Color> default_palette(std::size_t num_classes) {
  static const std::vector<Color> base = {
      {40, 40, 40},   {220, 50, 50},  {50, 190, 60},  {60, 90, 230},  {235, 210, 60},
      {200, 70, 210}, {60, 210, 210}, {245, 140, 40}, {150, 150, 150}, {120, 60, 20}};
  std::vector<Color> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (c < base.size()) {
      out.push_back(base[c]);
    } else {
      // Deterministic spread for larger class counts; distinct by construction.
      const std::size_t k = c - base.size();
      out.push_back({static_cast<std::uint8_t>(16 + (k * 37) % 224),
                     static_cast<std::uint8_t>(16 + (k / 6) * 9 % 224),
                     static_cast<std::uint8_t>(1 + k % 6 * 40 + k / 36)});
    }
  }
  return out;
}

std::string split_name(Split s) { return s == Split::kTrain ? "train" : "val"; }

bool shape_covers(const ShapeSpec& s, std::size_t y, std::size_t x) {
  const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
  const auto& p = s.p;
  switch (s.kind) {
    case ShapeKind::kRect:
      return py >= p[0] && px >= p[1] && py < p[2] && px < p[3];
    case ShapeKind::kCircle: {
      const double dy = py - p[0], dx = px - p[1];
      return dy * dy + dx * dx <= p[2] * p[2];
    }
    case ShapeKind::kTriangle: {
      auto edge = [&](double ay, double ax, double by, double bx) {
        return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
      };
      const double d0 = edge(p[0], p[1], p[2], p[3]);
      const double d1 = edge(p[2], p[3], p[4], p[5]);
      const double d2 = edge(p[4], p[5], p[0], p[1]);
      const bool neg = d0 < 0 || d1 < 0 || d2 < 0;
      const bool pos = d0 > 0 || d1 > 0 || d2 > 0;
      return !(neg && pos);
    }
  }
  return false;
}

namespace {

Rng sample_rng(const DatasetSpec& spec, Split split, std::size_t index) {
  const std::uint64_t stream = (split == Split::kTrain ? 0ULL : 1ULL << 40) + index;
  return Rng(Rng(spec.seed, stream).next_u64());
}

std::vector<ShapeSpec> draw_shapes(const DatasetSpec& spec, Rng& rng) {
  const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  const double scale = std::min(h, w) / 64.0;
  const int count = rng.range(static_cast<int>(spec.min_shapes), static_cast<int>(spec.max_shapes));
  std::vector<ShapeSpec> shapes;
  for (int i = 0; i < count; ++i) {
    ShapeSpec s;
    s.kind = static_cast<ShapeKind>(rng.below(3));
    s.label = static_cast<std::uint8_t>(1 + rng.below(spec.num_classes - 1));
    switch (s.kind) {
      case ShapeKind::kRect: {
        const double sh = rng.uniform(16, 40) * scale, sw = rng.uniform(16, 40) * scale;
        const double y0 = rng.uniform(-0.2 * sh, h - 0.8 * sh), x0 = rng.uniform(-0.2 * sw, w - 0.8 * sw);
        s.p = {y0, x0, y0 + sh, x0 + sw, 0, 0};
        break;
      }
      case ShapeKind::kCircle: {
        const double r = rng.uniform(9, 20) * scale;
        s.p = {rng.uniform(0.2 * r, h - 0.2 * r), rng.uniform(0.2 * r, w - 0.2 * r), r, 0, 0, 0};
        break;
      }
      case ShapeKind::kTriangle: {
        const double size = rng.uniform(22, 44) * scale;
        const double cy = rng.uniform(0, h), cx = rng.uniform(0, w);
        for (int v = 0; v < 3; ++v) {
          const double a = rng.uniform(0, 2 * M_PI);
          const double r = rng.uniform(0.45, 0.7) * size;
          s.p[2 * v] = cy + r * std::sin(a);
          s.p[2 * v + 1] = cx + r * std::cos(a);
        }
        break;
      }
    }
    shapes.push_back(s);
  }
  return shapes;
}

}  // namespace

std::vector<ShapeSpec> sample_shapes(const DatasetSpec& spec, Split split, std::size_t index) {
  spec.validate();
  Rng rng = sample_rng(spec, split, index);
  return draw_shapes(spec, rng);
}

Sample render_sample(const DatasetSpec& spec, Split split, std::size_t index) {
  spec.validate();
  Rng rng = sample_rng(spec, split, index);
  const std::vector<ShapeSpec> shapes = draw_shapes(spec, rng);
  Sample s{Image(spec.height, spec.width), LabelMap(spec.height, spec.width, 0)};
  for (const ShapeSpec& shape : shapes) {
    for (std::size_t y = 0; y < spec.height; ++y) {
      for (std::size_t x = 0; x < spec.width; ++x) {
        if (shape_covers(shape, y, x)) s.labels.at(y, x) = shape.label;
      }
    }
  }
  const std::vector<Color> palette = spec.palette.empty() ? default_palette(spec.num_classes) : spec.palette;
  for (std::size_t i = 0; i < s.labels.size(); ++i) {
    const Color& c = palette[s.labels.labels[i]];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      const double noise = spec.noise_std > 0 ? spec.noise_std * rng.normal() : 0.0;
      const double v = std::round(static_cast<double>(c[ch]) + noise);
      s.image.rgb[i * 3 + ch] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
  }
  return s;
}

std::vector<Sample> make_split(const DatasetSpec& spec, Split split) {
  const std::size_t n = split == Split::kTrain ? spec.train_size : spec.val_size;
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(render_sample(spec, split, i));
  return out;
}

std::string sample_stem(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf;
}

void gen_synthetic_dataset(const DatasetSpec& spec, const std::string& dir) {
  spec.validate();
  std::error_code ec;
  for (Split split : {Split::kTrain, Split::kVal}) {
    fs::create_directories(fs::path(dir) / split_name(split), ec);
    if (ec) throw IoError("cannot create '" + dir + "': " + ec.message());
    const std::size_t n = split == Split::kTrain ? spec.train_size : spec.val_size;
    for (std::size_t i = 0; i < n; ++i) {
      const Sample s = render_sample(spec, split, i);
      const fs::path base = fs::path(dir) / split_name(split) / sample_stem(i);
      write_ppm(base.string() + ".ppm", s.image);
      write_pgm(base.string() + ".pgm", s.labels);
    }
  }
  write_file((fs::path(dir) / "dataset.cfg").string(), dataset_spec_text(spec));
}

std::vector<Sample> load_split(const std::string& dir, Split split, std::size_t num_classes) {
  const fs::path root = fs::path(dir) / split_name(split);
  if (!fs::is_directory(root)) throw IoError("missing split directory '" + root.string() + "'");
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.path().extension() == ".ppm") stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  std::vector<Sample> out;
  for (const std::string& stem : stems) {
    Sample s;
    s.image = read_ppm((root / (stem + ".ppm")).string());
    s.labels = read_pgm((root / (stem + ".pgm")).string(), num_classes);
    if (s.image.height != s.labels.height || s.image.width != s.labels.width) {
      throw DataError("sample '" + stem + "': image and label sizes differ");
    }
    out.push_back(std::move(s));
  }
  return out;
}

Sample hflip(const Sample& s) {
  Sample out = s;
  const std::size_t h = s.labels.height, w = s.labels.width;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      out.labels.at(y, x) = s.labels.at(y, w - 1 - x);
      for (std::size_t c = 0; c < 3; ++c) {
        out.image.rgb[(y * w + x) * 3 + c] = s.image.rgb[(y * w + w - 1 - x) * 3 + c];
      }
    }
  }
  return out;
}

Sample resize_crop(const Sample& s, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
  const std::size_t H = s.labels.height, W = s.labels.width;
  if (h == 0 || w == 0 || y0 + h > H || x0 + w > W) {
    throw ContractViolation("resize_crop: window outside the sample");
  }
  Sample out{Image(H, W), LabelMap(H, W)};
  for (std::size_t y = 0; y < H; ++y) {
    const std::size_t sy = y0 + y * h / H;
    for (std::size_t x = 0; x < W; ++x) {
      const std::size_t sx = x0 + x * w / W;
      out.labels.at(y, x) = s.labels.at(sy, sx);
      for (std::size_t c = 0; c < 3; ++c) out.image.rgb[(y * W + x) * 3 + c] = s.image.rgb[(sy * W + sx) * 3 + c];
    }
  }
  return out;
}

}  // namespace segvit
