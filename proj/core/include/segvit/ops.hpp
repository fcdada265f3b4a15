#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "segvit/tape.hpp"
#include "segvit/tensor.hpp"

// Differentiable primitives. Every function records itself on the tape of
// its inputs. Binary elementwise ops accept equal shapes or one operand
// whose shape is a trailing suffix of the other's; nothing else broadcasts.
namespace segvit {

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);

Var scale(const Var& x, double factor);
Var add_scalar(const Var& x, double value);
Var pow_scalar(const Var& x, double exponent);
Var log(const Var& x);
Var exp(const Var& x);
Var sigmoid(const Var& x);
// Exact form x * Phi(x).
Var gelu(const Var& x);
// Gradient passes only where lo <= x <= hi.
Var clamp(const Var& x, double lo, double hi);
// Same value, cut from the gradient path.
Var detach(const Var& x);

Var reshape(const Var& x, Shape shape);
Var transpose(const Var& x, std::vector<std::size_t> axes);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var slice(const Var& x, std::size_t axis, std::size_t begin, std::size_t end);
Var gather_rows(const Var& x, std::span<const std::size_t> rows);
// Places the rows of x at `rows` of a zero tensor with `num_rows` rows.
Var scatter_rows(const Var& x, std::span<const std::size_t> rows, std::size_t num_rows);
Var embedding_lookup(const Var& table, std::span<const std::size_t> ids);

// Reductions drop the reduced axis.
Var sum(const Var& x, std::size_t axis);
Var mean(const Var& x, std::size_t axis);
Var sum_all(const Var& x);
Var mean_all(const Var& x);

Var softmax(const Var& x, std::size_t axis);
// Normalizes along `axis` with biased variance; no affine parameters.
Var layer_norm(const Var& x, std::size_t axis, double eps = 1e-6);

// a: [..., m, k]; b: [k, n] shared across a's leading axes, or
// [..., k, n] with identical leading axes. With transpose_b, b holds
// [n, k] (resp. [..., n, k]).
Var matmul(const Var& a, const Var& b, bool transpose_b = false);

// x: [..., h, w] -> [..., H, W]; half-pixel centers, edge clamped.
Var bilinear_upsample2d(const Var& x, std::size_t out_h, std::size_t out_w);

// x: [R, ...], s: [R]; scales slab r of x by s[r].
Var scale_rows(const Var& x, const Var& s);

/// Uniform entry point over the differentiable primitive set, used by the
/// gradient suite to sweep every primitive the same way.
enum class Primitive {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScale,
  kReshape,
  kTranspose,
  kConcat,
  kSlice,
  kGatherRows,
  kScatterRows,
  kMean,
  kSum,
  kSoftmax,
  kSigmoid,
  kGelu,
  kLayerNorm,
  kEmbeddingLookup,
  kLog,
  kExp,
  kPowScalar,
  kScaleRows,
  kMatmul,
  kBilinearUpsample,
};

struct PrimitiveAttrs {
  std::size_t axis = 0;
  double scalar = 1.0;
  Shape shape;
  std::vector<std::size_t> axes;
  std::vector<std::size_t> indices;
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t rows = 0;
  bool transpose_b = false;
};

std::string_view primitive_name(Primitive p);
std::vector<Primitive> all_primitives();
Var apply_primitive(Primitive p, std::span<const Var> inputs, const PrimitiveAttrs& attrs = {});

}  // namespace segvit
