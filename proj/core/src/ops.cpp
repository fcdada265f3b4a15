#include "segvit/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "segvit/errors.hpp"

namespace segvit {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

[[noreturn]] void shape_error(std::string_view op, const Shape& a, const Shape& b) {
  throw ContractViolation(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                          shape_str(b));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - small.size());
}

Shape broadcast_shape(std::string_view op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  if (is_suffix(b, a)) return a;
  if (is_suffix(a, b)) return b;
  shape_error(op, a, b);
}

// Sums `g` (size n) into a tensor of `target` shape whose element count
// divides n (trailing-suffix broadcast inverse).
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target, 0.0);
  const std::size_t m = out.numel();
  if (m == 0) return out;
  auto dst = out.data();
  auto src = g.data();
  for (std::size_t base = 0; base < src.size(); base += m) {
    for (std::size_t j = 0; j < m; ++j) dst[j] += src[base + j];
  }
  return out;
}

template <typename F>
Tensor binary_map(const Tensor& a, const Tensor& b, const Shape& out_shape, F f) {
  Tensor out(out_shape);
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  const std::size_t n = o.size();
  const std::size_t na = x.size();
  const std::size_t nb = y.size();
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) o[i] = f(x[i], y[i]);
  } else if (na == n) {
    for (std::size_t base = 0; base < n; base += nb)
      for (std::size_t j = 0; j < nb; ++j) o[base + j] = f(x[base + j], y[j]);
  } else {
    for (std::size_t base = 0; base < n; base += na)
      for (std::size_t j = 0; j < na; ++j) o[base + j] = f(x[j], y[base + j]);
  }
  return out;
}

template <typename F>
Tensor unary_map(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto o = out.data();
  auto in = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
  return out;
}

// Decomposes a shape around `axis` into (outer, len, inner) extents.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(std::string_view op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw ContractViolation(std::string(op) + ": axis " + std::to_string(axis) +
                            " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape drop_axis(const Shape& shape, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (i != axis) out.push_back(shape[i]);
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
  const Shape out_shape = broadcast_shape("add", a.shape(), b.shape());
  Tensor out = binary_map(a.value(), b.value(), out_shape, [](double x, double y) { return x + y; });
  return a.tape().record("add", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.accumulate(a, reduce_to(g, a.shape()));
    if (b.requires_grad()) t.accumulate(b, reduce_to(g, b.shape()));
  });
}

Var sub(const Var& a, const Var& b) {
  const Shape out_shape = broadcast_shape("sub", a.shape(), b.shape());
  Tensor out = binary_map(a.value(), b.value(), out_shape, [](double x, double y) { return x - y; });
  return a.tape().record("sub", std::move(out), {a, b}, [a, b](Tape& t, const Tensor& g) {
    if (a.requires_grad()) t.accumulate(a, reduce_to(g, a.shape()));
    if (b.requires_grad()) {
      Tensor gb = reduce_to(g, b.shape());
      for (double& v : gb.data()) v = -v;
      t.accumulate(b, std::move(gb));
    }
  });
}

Var mul(const Var& a, const Var& b) {
  const Shape out_shape = broadcast_shape("mul", a.shape(), b.shape());
  Tensor out = binary_map(a.value(), b.value(), out_shape, [](double x, double y) { return x * y; });
  return a.tape().record("mul", std::move(out), {a, b}, [a, b, out_shape](Tape& t, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor gb = binary_map(g, b.value(), out_shape, [](double x, double y) { return x * y; });
      t.accumulate(a, reduce_to(gb, a.shape()));
    }
    if (b.requires_grad()) {
      Tensor ga = binary_map(g, a.value(), out_shape, [](double x, double y) { return x * y; });
      t.accumulate(b, reduce_to(ga, b.shape()));
    }
  });
}

Var div(const Var& a, const Var& b) {
  const Shape out_shape = broadcast_shape("div", a.shape(), b.shape());
  Tensor out = binary_map(a.value(), b.value(), out_shape, [](double x, double y) { return x / y; });
  return a.tape().record("div", std::move(out), {a, b}, [a, b, out_shape](Tape& t, const Tensor& g) {
    if (a.requires_grad()) {
      Tensor ga = binary_map(g, b.value(), out_shape, [](double x, double y) { return x / y; });
      t.accumulate(a, reduce_to(ga, a.shape()));
    }
    if (b.requires_grad()) {
      // d(a/b)/db = -a / b^2
      Tensor ab = binary_map(a.value(), b.value(), out_shape,
                             [](double x, double y) { return -x / (y * y); });
      Tensor gb = binary_map(g, ab, out_shape, [](double x, double y) { return x * y; });
      t.accumulate(b, reduce_to(gb, b.shape()));
    }
  });
}

Var scale(const Var& x, double factor) {
  Tensor out = unary_map(x.value(), [factor](double v) { return v * factor; });
  return x.tape().record("scale", std::move(out), {x}, [x, factor](Tape& t, const Tensor& g) {
    t.accumulate(x, unary_map(g, [factor](double v) { return v * factor; }));
  });
}

Var add_scalar(const Var& x, double value) {
  Tensor out = unary_map(x.value(), [value](double v) { return v + value; });
  return x.tape().record("add_scalar", std::move(out), {x},
                         [x](Tape& t, const Tensor& g) { t.accumulate(x, g); });
}

Var pow_scalar(const Var& x, double exponent) {
  Tensor out = unary_map(x.value(), [exponent](double v) { return std::pow(v, exponent); });
  return x.tape().record("pow_scalar", std::move(out), {x}, [x, exponent](Tape& t, const Tensor& g) {
    Tensor d = binary_map(g, x.value(), g.shape(), [exponent](double gv, double v) {
      return gv * exponent * std::pow(v, exponent - 1.0);
    });
    t.accumulate(x, std::move(d));
  });
}

Var log(const Var& x) {
  Tensor out = unary_map(x.value(), [](double v) { return std::log(v); });
  return x.tape().record("log", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, binary_map(g, x.value(), g.shape(), [](double gv, double v) { return gv / v; }));
  });
}

Var exp(const Var& x) {
  Tensor out = unary_map(x.value(), [](double v) { return std::exp(v); });
  Tensor saved = out;
  return x.tape().record("exp", std::move(out), {x},
                         [x, saved = std::move(saved)](Tape& t, const Tensor& g) {
                           t.accumulate(x, binary_map(g, saved, g.shape(),
                                                      [](double gv, double e) { return gv * e; }));
                         });
}

Var sigmoid(const Var& x) {
  Tensor out = unary_map(x.value(), [](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  Tensor saved = out;
  return x.tape().record("sigmoid", std::move(out), {x},
                         [x, saved = std::move(saved)](Tape& t, const Tensor& g) {
                           t.accumulate(x, binary_map(g, saved, g.shape(), [](double gv, double s) {
                                          return gv * s * (1.0 - s);
                                        }));
                         });
}

Var gelu(const Var& x) {
  Tensor out = unary_map(x.value(), [](double v) { return v * normal_cdf(v); });
  return x.tape().record("gelu", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, binary_map(g, x.value(), g.shape(), [](double gv, double v) {
                   return gv * (normal_cdf(v) + v * normal_pdf(v));
                 }));
  });
}

Var clamp(const Var& x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractViolation("clamp: lo > hi");
  Tensor out = unary_map(x.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); });
  return x.tape().record("clamp", std::move(out), {x}, [x, lo, hi](Tape& t, const Tensor& g) {
    t.accumulate(x, binary_map(g, x.value(), g.shape(), [lo, hi](double gv, double v) {
                   return (v >= lo && v <= hi) ? gv : 0.0;
                 }));
  });
}

Var detach(const Var& x) { return x.tape().constant(x.value()); }

// ---------------------------------------------------------------- shape ops

Var reshape(const Var& x, Shape shape) {
  if (numel_of(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record("reshape", std::move(out), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, g.reshaped(x.shape()));
  });
}

namespace {

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  const Shape& in = x.shape();
  const std::size_t r = in.size();
  Shape out_shape(r);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = in[axes[i]];
    src_stride[i] = in_strides[axes[i]];
  }
  Tensor out(out_shape);
  auto o = out.data();
  auto s = x.data();
  if (o.empty()) return out;
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t n = 0; n < o.size(); ++n) {
    o[n] = s[src];
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      src += src_stride[ax];
      if (idx[ax] < out_shape[ax]) break;
      src -= src_stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

}  // namespace

Var transpose(const Var& x, std::vector<std::size_t> axes) {
  const std::size_t r = x.shape().size();
  std::vector<bool> seen(r, false);
  bool ok = axes.size() == r;
  for (std::size_t a : axes) {
    if (!ok || a >= r || seen[a]) {
      ok = false;
      break;
    }
    seen[a] = true;
  }
  if (!ok) {
    throw ContractViolation("transpose: axes do not permute shape " + shape_str(x.shape()));
  }
  std::vector<std::size_t> inverse(r);
  for (std::size_t i = 0; i < r; ++i) inverse[axes[i]] = i;
  Tensor out = permute(x.value(), axes);
  return x.tape().record("transpose", std::move(out), {x}, [x, inverse](Tape& t, const Tensor& g) {
    t.accumulate(x, permute(g, inverse));
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractViolation("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ContractViolation("concat: axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != first[i]) shape_error("concat", first, s);
    out_shape[axis] += s[axis];
  }
  const AxisSplit split = split_axis("concat", out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis];
    auto src = p.value().data();
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(src.begin() + o * len * split.inner, len * split.inner,
                  out.data().begin() + (o * split.len + offset) * split.inner);
    }
    offset += len;
  }
  return parts[0].tape().record(
      "concat", std::move(out), parts, [parts, offsets, axis, split](Tape& t, const Tensor& g) {
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (!parts[k].requires_grad()) continue;
          const std::size_t len = parts[k].shape()[axis];
          Tensor gp(parts[k].shape());
          for (std::size_t o = 0; o < split.outer; ++o) {
            std::copy_n(g.data().begin() + (o * split.len + offsets[k]) * split.inner,
                        len * split.inner, gp.data().begin() + o * len * split.inner);
          }
          t.accumulate(parts[k], std::move(gp));
        }
      });
}

Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit split = split_axis("slice", x.shape(), axis);
  if (begin > end || end > split.len) {
    throw BoundsError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") out of bounds for axis of length " + std::to_string(split.len));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t len = end - begin;
  Tensor out(out_shape);
  auto src = x.value().data();
  for (std::size_t o = 0; o < split.outer; ++o) {
    std::copy_n(src.begin() + (o * split.len + begin) * split.inner, len * split.inner,
                out.data().begin() + o * len * split.inner);
  }
  return x.tape().record("slice", std::move(out), {x}, [x, split, begin, len](Tape& t, const Tensor& g) {
    Tensor gx(x.shape(), 0.0);
    for (std::size_t o = 0; o < split.outer; ++o) {
      std::copy_n(g.data().begin() + o * len * split.inner, len * split.inner,
                  gx.data().begin() + (o * split.len + begin) * split.inner);
    }
    t.accumulate(x, std::move(gx));
  });
}

namespace {

Var gather_impl(std::string_view op, const Var& x, std::span<const std::size_t> rows) {
  if (x.shape().empty()) throw ContractViolation(std::string(op) + ": scalar input");
  const std::size_t n_rows = x.shape()[0];
  const std::size_t width = n_rows ? x.numel() / n_rows : 0;
  for (std::size_t r : rows) {
    if (r >= n_rows) {
      throw BoundsError(std::string(op) + ": index " + std::to_string(r) +
                        " out of range for " + std::to_string(n_rows) + " rows");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  auto src = x.value().data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(src.begin() + rows[i] * width, width, out.data().begin() + i * width);
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().record(op, std::move(out), {x}, [x, idx, width](Tape& t, const Tensor& g) {
    Tensor gx(x.shape(), 0.0);
    auto dst = gx.data();
    auto gs = g.data();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < width; ++j) dst[idx[i] * width + j] += gs[i * width + j];
    t.accumulate(x, std::move(gx));
  });
}

}  // namespace

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  return gather_impl("gather_rows", x, rows);
}

Var embedding_lookup(const Var& table, std::span<const std::size_t> ids) {
  if (table.shape().size() != 2) {
    throw ContractViolation("embedding_lookup: table must be rank 2, got " +
                            shape_str(table.shape()));
  }
  return gather_impl("embedding_lookup", table, ids);
}

Var scatter_rows(const Var& x, std::span<const std::size_t> rows, std::size_t num_rows) {
  if (x.shape().empty() || x.shape()[0] != rows.size()) {
    throw ContractViolation("scatter_rows: " + std::to_string(rows.size()) +
                            " indices for shape " + shape_str(x.shape()));
  }
  const std::size_t width = rows.empty() ? 0 : x.numel() / rows.size();
  for (std::size_t r : rows) {
    if (r >= num_rows) {
      throw BoundsError("scatter_rows: index " + std::to_string(r) + " out of range for " +
                        std::to_string(num_rows) + " rows");
    }
  }
  Shape out_shape = x.shape();
  out_shape[0] = num_rows;
  Tensor out(out_shape, 0.0);
  auto src = x.value().data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j) out.data()[rows[i] * width + j] += src[i * width + j];
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.tape().record("scatter_rows", std::move(out), {x}, [x, idx, width](Tape& t, const Tensor& g) {
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < idx.size(); ++i)
      std::copy_n(g.data().begin() + idx[i] * width, width, gx.data().begin() + i * width);
    t.accumulate(x, std::move(gx));
  });
}

// ---------------------------------------------------------------- reductions

Var sum(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis("sum", x.shape(), axis);
  Tensor out(drop_axis(x.shape(), axis), 0.0);
  auto src = x.value().data();
  auto dst = out.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i)
        dst[o * s.inner + i] += src[(o * s.len + l) * s.inner + i];
  return x.tape().record("sum", std::move(out), {x}, [x, s](Tape& t, const Tensor& g) {
    Tensor gx(x.shape());
    auto d = gx.data();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i) d[(o * s.len + l) * s.inner + i] = g[o * s.inner + i];
    t.accumulate(x, std::move(gx));
  });
}

Var mean(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis("mean", x.shape(), axis);
  if (s.len == 0) throw ContractViolation("mean: empty axis");
  return scale(sum(x, axis), 1.0 / static_cast<double>(s.len));
}

Var sum_all(const Var& x) {
  double total = 0.0;
  for (double v : x.value().data()) total += v;
  return x.tape().record("sum_all", Tensor::scalar(total), {x}, [x](Tape& t, const Tensor& g) {
    t.accumulate(x, Tensor(x.shape(), g[0]));
  });
}

Var mean_all(const Var& x) {
  if (x.numel() == 0) throw ContractViolation("mean_all: empty tensor");
  return scale(sum_all(x), 1.0 / static_cast<double>(x.numel()));
}

Var softmax(const Var& x, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", x.shape(), axis);
  Tensor out(x.shape());
  auto src = x.value().data();
  auto dst = out.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mx = -INFINITY;
      for (std::size_t l = 0; l < s.len; ++l) mx = std::max(mx, src[base + l * s.inner]);
      double z = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double e = std::exp(src[base + l * s.inner] - mx);
        dst[base + l * s.inner] = e;
        z += e;
      }
      const double inv = 1.0 / z;
      for (std::size_t l = 0; l < s.len; ++l) dst[base + l * s.inner] *= inv;
    }
  }
  Tensor saved = out;
  return x.tape().record("softmax", std::move(out), {x},
                         [x, s, saved = std::move(saved)](Tape& t, const Tensor& g) {
                           Tensor gx(x.shape());
                           auto d = gx.data();
                           auto y = saved.data();
                           for (std::size_t o = 0; o < s.outer; ++o) {
                             for (std::size_t i = 0; i < s.inner; ++i) {
                               const std::size_t base = o * s.len * s.inner + i;
                               double dot = 0.0;
                               for (std::size_t l = 0; l < s.len; ++l) {
                                 const std::size_t k = base + l * s.inner;
                                 dot += g[k] * y[k];
                               }
                               for (std::size_t l = 0; l < s.len; ++l) {
                                 const std::size_t k = base + l * s.inner;
                                 d[k] = y[k] * (g[k] - dot);
                               }
                             }
                           }
                           t.accumulate(x, std::move(gx));
                         });
}

Var layer_norm(const Var& x, std::size_t axis, double eps) {
  const AxisSplit s = split_axis("layer_norm", x.shape(), axis);
  if (s.len == 0) throw ContractViolation("layer_norm: empty axis");
  Tensor out(x.shape());
  Tensor inv_std(Shape{s.outer * s.inner});
  auto src = x.value().data();
  auto dst = out.data();
  const double n = static_cast<double>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const std::size_t base = o * s.len * s.inner + i;
      double mu = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) mu += src[base + l * s.inner];
      mu /= n;
      double var = 0.0;
      for (std::size_t l = 0; l < s.len; ++l) {
        const double d = src[base + l * s.inner] - mu;
        var += d * d;
      }
      var /= n;
      const double r = 1.0 / std::sqrt(var + eps);
      inv_std[o * s.inner + i] = r;
      for (std::size_t l = 0; l < s.len; ++l)
        dst[base + l * s.inner] = (src[base + l * s.inner] - mu) * r;
    }
  }
  Tensor saved = out;
  return x.tape().record(
      "layer_norm", std::move(out), {x},
      [x, s, saved = std::move(saved), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        Tensor gx(x.shape());
        auto d = gx.data();
        auto y = saved.data();
        const double n = static_cast<double>(s.len);
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.len * s.inner + i;
            double mg = 0.0;
            double mgy = 0.0;
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t k = base + l * s.inner;
              mg += g[k];
              mgy += g[k] * y[k];
            }
            mg /= n;
            mgy /= n;
            const double r = inv_std[o * s.inner + i];
            for (std::size_t l = 0; l < s.len; ++l) {
              const std::size_t k = base + l * s.inner;
              d[k] = r * (g[k] - mg - y[k] * mgy);
            }
          }
        }
        t.accumulate(x, std::move(gx));
      });
}

// ---------------------------------------------------------------- matmul

Var matmul(const Var& a, const Var& b, bool transpose_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) shape_error("matmul", as, bs);
  const std::size_t m = as[as.size() - 2];
  const std::size_t k = as.back();
  const std::size_t bk = transpose_b ? bs.back() : bs[bs.size() - 2];
  const std::size_t n = transpose_b ? bs[bs.size() - 2] : bs.back();
  if (k != bk) shape_error("matmul", as, bs);

  const bool shared_b = bs.size() == 2;
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];
  if (!shared_b) {
    if (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin())) {
      shape_error("matmul", as, bs);
    }
  }
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Tensor out(out_shape);

  const double* ap = a.value().data().data();
  const double* bp = b.value().data().data();
  double* op = out.data().data();
  const Eigen::Index M = static_cast<Eigen::Index>(m);
  const Eigen::Index K = static_cast<Eigen::Index>(k);
  const Eigen::Index N = static_cast<Eigen::Index>(n);
  if (shared_b) {
    MapC A(ap, M * static_cast<Eigen::Index>(batch), K);
    Map C(op, M * static_cast<Eigen::Index>(batch), N);
    if (transpose_b)
      C.noalias() = A * MapC(bp, N, K).transpose();
    else
      C.noalias() = A * MapC(bp, K, N);
  } else {
    for (std::size_t p = 0; p < batch; ++p) {
      MapC A(ap + p * m * k, M, K);
      Map C(op + p * m * n, M, N);
      if (transpose_b)
        C.noalias() = A * MapC(bp + p * n * k, N, K).transpose();
      else
        C.noalias() = A * MapC(bp + p * k * n, K, N);
    }
  }

  return a.tape().record(
      "matmul", std::move(out), {a, b},
      [a, b, transpose_b, shared_b, batch, M, K, N](Tape& t, const Tensor& g) {
        const double* gp = g.data().data();
        const double* ap = a.value().data().data();
        const double* bp = b.value().data().data();
        const Eigen::Index rows = M * static_cast<Eigen::Index>(batch);
        if (a.requires_grad()) {
          Tensor ga(a.shape());
          if (shared_b) {
            Map GA(ga.data().data(), rows, K);
            MapC G(gp, rows, N);
            if (transpose_b)
              GA.noalias() = G * MapC(bp, N, K);
            else
              GA.noalias() = G * MapC(bp, K, N).transpose();
          } else {
            for (std::size_t p = 0; p < batch; ++p) {
              Map GA(ga.data().data() + p * M * K, M, K);
              MapC G(gp + p * M * N, M, N);
              if (transpose_b)
                GA.noalias() = G * MapC(bp + p * N * K, N, K);
              else
                GA.noalias() = G * MapC(bp + p * K * N, K, N).transpose();
            }
          }
          t.accumulate(a, std::move(ga));
        }
        if (b.requires_grad()) {
          Tensor gb(b.shape());
          if (shared_b) {
            MapC A(ap, rows, K);
            MapC G(gp, rows, N);
            if (transpose_b)
              Map(gb.data().data(), N, K).noalias() = G.transpose() * A;
            else
              Map(gb.data().data(), K, N).noalias() = A.transpose() * G;
          } else {
            for (std::size_t p = 0; p < batch; ++p) {
              MapC A(ap + p * M * K, M, K);
              MapC G(gp + p * M * N, M, N);
              if (transpose_b)
                Map(gb.data().data() + p * N * K, N, K).noalias() = G.transpose() * A;
              else
                Map(gb.data().data() + p * K * N, K, N).noalias() = A.transpose() * G;
            }
          }
          t.accumulate(b, std::move(gb));
        }
      });
}

// ---------------------------------------------------------------- spatial

namespace {

struct Interp {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

std::vector<Interp> interp_table(std::size_t in, std::size_t out) {
  std::vector<Interp> table(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::size_t lo = static_cast<std::size_t>(src);
    if (lo > in - 1) lo = in - 1;
    const std::size_t hi = std::min(lo + 1, in - 1);
    table[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return table;
}

}  // namespace

Var bilinear_upsample2d(const Var& x, std::size_t out_h, std::size_t out_w) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw ContractViolation("bilinear_upsample2d: need rank >= 2, got " + shape_str(s));
  if (out_h == 0 || out_w == 0) {
    throw ContractViolation("bilinear_upsample2d: zero target extent");
  }
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s.back();
  if (h == 0 || w == 0) throw ContractViolation("bilinear_upsample2d: zero source extent");
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape(s.begin(), s.end() - 2);
  out_shape.push_back(out_h);
  out_shape.push_back(out_w);
  const auto ty = interp_table(h, out_h);
  const auto tx = interp_table(w, out_w);
  Tensor out(out_shape);
  auto src = x.value().data();
  auto dst = out.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* in = src.data() + p * h * w;
    double* o = dst.data() + p * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const Interp& yi = ty[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const Interp& xj = tx[j];
        const double top = in[yi.lo * w + xj.lo] * (1.0 - xj.frac) + in[yi.lo * w + xj.hi] * xj.frac;
        const double bot = in[yi.hi * w + xj.lo] * (1.0 - xj.frac) + in[yi.hi * w + xj.hi] * xj.frac;
        o[i * out_w + j] = top * (1.0 - yi.frac) + bot * yi.frac;
      }
    }
  }
  return x.tape().record(
      "bilinear_upsample2d", std::move(out), {x},
      [x, ty, tx, planes, h, w, out_h, out_w](Tape& t, const Tensor& g) {
        Tensor gx(x.shape(), 0.0);
        for (std::size_t p = 0; p < planes; ++p) {
          double* d = gx.data().data() + p * h * w;
          const double* gp = g.data().data() + p * out_h * out_w;
          for (std::size_t i = 0; i < out_h; ++i) {
            const Interp& yi = ty[i];
            for (std::size_t j = 0; j < out_w; ++j) {
              const Interp& xj = tx[j];
              const double v = gp[i * out_w + j];
              d[yi.lo * w + xj.lo] += v * (1.0 - yi.frac) * (1.0 - xj.frac);
              d[yi.lo * w + xj.hi] += v * (1.0 - yi.frac) * xj.frac;
              d[yi.hi * w + xj.lo] += v * yi.frac * (1.0 - xj.frac);
              d[yi.hi * w + xj.hi] += v * yi.frac * xj.frac;
            }
          }
        }
        t.accumulate(x, std::move(gx));
      });
}

Var scale_rows(const Var& x, const Var& s) {
  if (x.shape().empty() || s.shape() != Shape{x.shape()[0]}) {
    shape_error("scale_rows", x.shape(), s.shape());
  }
  const std::size_t rows = x.shape()[0];
  const std::size_t width = rows ? x.numel() / rows : 0;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < width; ++j)
      out[r * width + j] = x.value()[r * width + j] * s.value()[r];
  return x.tape().record("scale_rows", std::move(out), {x, s}, [x, s, rows, width](Tape& t, const Tensor& g) {
    if (x.requires_grad()) {
      Tensor gx(x.shape());
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < width; ++j) gx[r * width + j] = g[r * width + j] * s.value()[r];
      t.accumulate(x, std::move(gx));
    }
    if (s.requires_grad()) {
      Tensor gs(s.shape(), 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < width; ++j) gs[r] += g[r * width + j] * x.value()[r * width + j];
      t.accumulate(s, std::move(gs));
    }
  });
}

// ---------------------------------------------------------------- dispatch

std::string_view primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kAdd: return "add";
    case Primitive::kSub: return "sub";
    case Primitive::kMul: return "mul";
    case Primitive::kDiv: return "div";
    case Primitive::kScale: return "scale";
    case Primitive::kReshape: return "reshape";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kConcat: return "concat";
    case Primitive::kSlice: return "slice";
    case Primitive::kGatherRows: return "gather_rows";
    case Primitive::kScatterRows: return "scatter_rows";
    case Primitive::kMean: return "mean";
    case Primitive::kSum: return "sum";
    case Primitive::kSoftmax: return "softmax";
    case Primitive::kSigmoid: return "sigmoid";
    case Primitive::kGelu: return "gelu";
    case Primitive::kLayerNorm: return "layer_norm";
    case Primitive::kEmbeddingLookup: return "embedding_lookup";
    case Primitive::kLog: return "log";
    case Primitive::kExp: return "exp";
    case Primitive::kPowScalar: return "pow_scalar";
    case Primitive::kScaleRows: return "scale_rows";
    case Primitive::kMatmul: return "matmul";
    case Primitive::kBilinearUpsample: return "bilinear_upsample2d";
  }
  return "unknown";
}

std::vector<Primitive> all_primitives() {
  std::vector<Primitive> out;
  for (int i = 0; i <= static_cast<int>(Primitive::kBilinearUpsample); ++i)
    out.push_back(static_cast<Primitive>(i));
  return out;
}

Var apply_primitive(Primitive p, std::span<const Var> in, const PrimitiveAttrs& at) {
  auto need = [&](std::size_t n) {
    if (in.size() < n) {
      throw ContractViolation(std::string(primitive_name(p)) + ": expected " + std::to_string(n) +
                              " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (p) {
    case Primitive::kAdd: need(2); return add(in[0], in[1]);
    case Primitive::kSub: need(2); return sub(in[0], in[1]);
    case Primitive::kMul: need(2); return mul(in[0], in[1]);
    case Primitive::kDiv: need(2); return div(in[0], in[1]);
    case Primitive::kScale: need(1); return scale(in[0], at.scalar);
    case Primitive::kReshape: need(1); return reshape(in[0], at.shape);
    case Primitive::kTranspose: need(1); return transpose(in[0], at.axes);
    case Primitive::kConcat: need(1); return concat(std::vector<Var>(in.begin(), in.end()), at.axis);
    case Primitive::kSlice: need(1); return slice(in[0], at.axis, at.begin, at.end);
    case Primitive::kGatherRows: need(1); return gather_rows(in[0], at.indices);
    case Primitive::kScatterRows: need(1); return scatter_rows(in[0], at.indices, at.rows);
    case Primitive::kMean: need(1); return mean(in[0], at.axis);
    case Primitive::kSum: need(1); return sum(in[0], at.axis);
    case Primitive::kSoftmax: need(1); return softmax(in[0], at.axis);
    case Primitive::kSigmoid: need(1); return sigmoid(in[0]);
    case Primitive::kGelu: need(1); return gelu(in[0]);
    case Primitive::kLayerNorm: need(1); return layer_norm(in[0], at.axis, 1e-6);
    case Primitive::kEmbeddingLookup: need(1); return embedding_lookup(in[0], at.indices);
    case Primitive::kLog: need(1); return log(in[0]);
    case Primitive::kExp: need(1); return exp(in[0]);
    case Primitive::kPowScalar: need(1); return pow_scalar(in[0], at.scalar);
    case Primitive::kScaleRows: need(2); return scale_rows(in[0], in[1]);
    case Primitive::kMatmul: need(2); return matmul(in[0], in[1], at.transpose_b);
    case Primitive::kBilinearUpsample:
      need(1);
      return bilinear_upsample2d(in[0], at.shape.at(0), at.shape.at(1));
  }
  throw ContractViolation("apply_primitive: unknown primitive");
}

}  // namespace segvit
