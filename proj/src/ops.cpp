#include "smoothsr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace smoothsr {

namespace {

using Strides = std::vector<std::size_t>;

Strides contiguous_strides(const Shape& s) {
  Strides st(s.size(), 1);
  for (std::size_t d = s.size(); d-- > 1;) st[d - 1] = st[d] * s[d];
  return st;
}

// Strides of `s` laid out inside the (higher or equal rank) shape `out`,
// with zero stride on broadcast axes.
Strides broadcast_strides(const Shape& s, const Shape& out) {
  Strides st(out.size(), 0);
  const auto own = contiguous_strides(s);
  const std::size_t lead = out.size() - s.size();
  for (std::size_t d = 0; d < s.size(); ++d) st[lead + d] = s[d] == 1 ? 0 : own[d];
  return st;
}

// Calls f(i, ia, ib) for every linear index i of `out`, where ia and ib are
// the matching offsets under strides sa and sb.
template <class F>
void broadcast_loop(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
  const std::size_t rank = out.size();
  const std::size_t n = shape_numel(out);
  if (rank == 0) {
    f(0, 0, 0);
    return;
  }
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t inner = out[rank - 1];
  const std::size_t sa_in = sa[rank - 1], sb_in = sb[rank - 1];
  for (std::size_t i = 0; i < n; i += inner) {
    for (std::size_t k = 0; k < inner; ++k) f(i + k, ia + k * sa_in, ib + k * sb_in);
    for (std::size_t d = rank - 1; d-- > 0;) {
      if (++idx[d] < out[d]) {
        ia += sa[d];
        ib += sb[d];
        break;
      }
      ia -= sa[d] * (out[d] - 1);
      ib -= sb[d] * (out[d] - 1);
      idx[d] = 0;
    }
  }
}

template <class F>
Tensor binary_kernel(const Tensor& a, const Tensor& b, std::string_view op, F f, BackwardFn bw) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  const auto da = a.data();
  const auto db = b.data();
  if (sa == sb) {
    std::vector<double> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(da[i], db[i]);
    return make_result(sa, std::move(out), op, {a, b}, std::move(bw));
  }
  Shape os = broadcast_shapes(sa, sb);
  std::vector<double> out(shape_numel(os));
  if (db.size() == 1 && os == sa) {
    const double y = db[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(da[i], y);
  } else {
    broadcast_loop(os, broadcast_strides(sa, os), broadcast_strides(sb, os),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = f(da[ia], db[ib]); });
  }
  return make_result(std::move(os), std::move(out), op, {a, b}, std::move(bw));
}

template <class F>
std::vector<double> map_data(const Tensor& a, F f) {
  const auto d = a.data();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = f(d[i]);
  return out;
}

Tensor constant_like(const Tensor& a, std::vector<double> data) { return Tensor(a.shape(), std::move(data)); }

void check_axis(const Tensor& a, std::size_t axis, std::string_view op) {
  if (axis >= a.rank()) {
    throw TensorError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                      shape_str(a.shape()));
  }
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw TensorError("shapes " + shape_str(a) + " and " + shape_str(b) + " are not broadcastable");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape(), sb = b.shape();
  return binary_kernel(a, b, "add", [](double x, double y) { return x + y; },
                       [sa, sb](const Tensor&, const Tensor& g, const std::vector<bool>& needs) {
                         return std::vector<Tensor>{needs[0] ? sum_to(g, sa) : Tensor{},
                                                    needs[1] ? sum_to(g, sb) : Tensor{}};
                       });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Shape sa = a.shape(), sb = b.shape();
  return binary_kernel(a, b, "sub", [](double x, double y) { return x - y; },
                       [sa, sb](const Tensor&, const Tensor& g, const std::vector<bool>& needs) {
                         return std::vector<Tensor>{needs[0] ? sum_to(g, sa) : Tensor{},
                                                    needs[1] ? sum_to(neg(g), sb) : Tensor{}};
                       });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_kernel(a, b, "mul", [](double x, double y) { return x * y; },
                       [a, b](const Tensor&, const Tensor& g, const std::vector<bool>& needs) {
                         return std::vector<Tensor>{needs[0] ? sum_to(mul(g, b), a.shape()) : Tensor{},
                                                    needs[1] ? sum_to(mul(g, a), b.shape()) : Tensor{}};
                       });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_kernel(a, b, "div", [](double x, double y) { return x / y; },
                       [a, b](const Tensor& out, const Tensor& g, const std::vector<bool>& needs) {
                         Tensor ga, gb;
                         if (needs[0]) ga = sum_to(div(g, b), a.shape());
                         if (needs[1]) gb = sum_to(neg(div(mul(g, out), b)), b.shape());
                         return std::vector<Tensor>{ga, gb};
                       });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  // Ties route the gradient to `a`.
  Shape os = broadcast_shapes(a.shape(), b.shape());
  std::vector<double> mask(shape_numel(os));
  {
    const auto da = a.data();
    const auto db = b.data();
    broadcast_loop(os, broadcast_strides(a.shape(), os), broadcast_strides(b.shape(), os),
                   [&](std::size_t i, std::size_t ia, std::size_t ib) { mask[i] = da[ia] >= db[ib] ? 1.0 : 0.0; });
  }
  Tensor m(os, std::move(mask));
  const Shape sa = a.shape(), sb = b.shape();
  return binary_kernel(a, b, "max", [](double x, double y) { return x >= y ? x : y; },
                       [m, sa, sb](const Tensor&, const Tensor& g, const std::vector<bool>& needs) {
                         Tensor ga, gb;
                         if (needs[0]) ga = sum_to(mul(g, m), sa);
                         if (needs[1]) gb = sum_to(mul(g, add(neg(m), 1.0)), sb);
                         return std::vector<Tensor>{ga, gb};
                       });
}

Tensor add(const Tensor& a, double s) {
  return make_result(a.shape(), map_data(a, [s](double x) { return x + s; }), "add_scalar", {a},
                     [](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{g};
                     });
}

Tensor mul(const Tensor& a, double s) {
  return make_result(a.shape(), map_data(a, [s](double x) { return x * s; }), "mul_scalar", {a},
                     [s](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, s)};
                     });
}

Tensor pow(const Tensor& a, double p) {
  return make_result(a.shape(), map_data(a, [p](double x) { return std::pow(x, p); }), "pow", {a},
                     [a, p](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       if (p == 0.0) return std::vector<Tensor>{Tensor::zeros(a.shape())};
                       if (p == 1.0) return std::vector<Tensor>{g};
                       return std::vector<Tensor>{mul(g, mul(pow(a, p - 1.0), p))};
                     });
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor neg(const Tensor& a) {
  return make_result(a.shape(), map_data(a, [](double x) { return -x; }), "neg", {a},
                     [](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{neg(g)};
                     });
}

Tensor exp(const Tensor& a) {
  return make_result(a.shape(), map_data(a, [](double x) { return std::exp(x); }), "exp", {a},
                     [](const Tensor& out, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, out)};
                     });
}

Tensor log(const Tensor& a) {
  return make_result(a.shape(), map_data(a, [](double x) { return std::log(x); }), "log", {a},
                     [a](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{div(g, a)};
                     });
}

Tensor abs(const Tensor& a) {
  Tensor sign = constant_like(a, map_data(a, [](double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }));
  return make_result(a.shape(), map_data(a, [](double x) { return std::abs(x); }), "abs", {a},
                     [sign](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, sign)};
                     });
}

Tensor safe_reciprocal(const Tensor& a) {
  return make_result(a.shape(), map_data(a, [](double x) { return x == 0.0 ? 0.0 : 1.0 / x; }),
                     "safe_reciprocal", {a},
                     [](const Tensor& out, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{neg(mul(g, mul(out, out)))};
                     });
}

Tensor sqrt(const Tensor& a) {
  return make_result(a.shape(), map_data(a, [](double x) { return std::sqrt(x); }), "sqrt", {a},
                     [](const Tensor& out, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(mul(g, safe_reciprocal(out)), 0.5)};
                     });
}

Tensor sigmoid(const Tensor& a) {
  return make_result(a.shape(), map_data(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }),
                     "sigmoid", {a},
                     [](const Tensor& out, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, mul(out, add(neg(out), 1.0)))};
                     });
}

Tensor relu(const Tensor& a) {
  Tensor mask = constant_like(a, map_data(a, [](double x) { return x > 0 ? 1.0 : 0.0; }));
  return make_result(a.shape(), map_data(a, [](double x) { return x > 0 ? x : 0.0; }), "relu", {a},
                     [mask](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, mask)};
                     });
}

// x * (pos + slope * neg) with constant masks: one broadcast mul per call
// instead of two relus, and still differentiable twice.
Tensor prelu(const Tensor& x, const Tensor& slope) {
  Tensor pos = constant_like(x, map_data(x, [](double v) { return v > 0 ? 1.0 : 0.0; }));
  Tensor negm = constant_like(x, map_data(x, [](double v) { return v > 0 ? 0.0 : 1.0; }));
  return mul(x, add(pos, mul(negm, slope)));
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor mask = constant_like(x, map_data(x, [slope](double v) { return v > 0 ? 1.0 : slope; }));
  return make_result(x.shape(), map_data(x, [slope](double v) { return v > 0 ? v : slope * v; }), "leaky_relu", {x},
                     [mask](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{mul(g, mask)};
                     });
}

Tensor elementwise(ElementwiseKind kind, const Tensor& a, const Tensor& b) {
  switch (kind) {
    case ElementwiseKind::add: return add(a, b);
    case ElementwiseKind::sub: return sub(a, b);
    case ElementwiseKind::mul: return mul(a, b);
    case ElementwiseKind::div: return div(a, b);
    case ElementwiseKind::max: return maximum(a, b);
    case ElementwiseKind::pow:
      if (!b.defined() || b.numel() != 1) throw TensorError("pow expects a one-element exponent");
      return pow(a, b.data()[0]);
    case ElementwiseKind::exp: return exp(a);
    case ElementwiseKind::log: return log(a);
    case ElementwiseKind::abs: return abs(a);
  }
  throw TensorError("unknown elementwise kind");
}

// ---------------------------------------------------------------------------
// Reductions

Tensor sum_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  const Shape& src = a.shape();
  if (shape.size() > src.size() || broadcast_shapes(shape, src) != src) {
    throw TensorError("sum_to: cannot reduce " + shape_str(src) + " to " + shape_str(shape));
  }
  // Target laid out inside src with zero strides on reduced axes.
  const Strides dst = broadcast_strides(shape, src);
  const Strides none(src.size(), 0);
  std::vector<double> out(shape_numel(shape), 0.0);
  const auto d = a.data();
  broadcast_loop(src, dst, none, [&](std::size_t i, std::size_t io, std::size_t) { out[io] += d[i]; });
  return make_result(shape, std::move(out), "sum_to", {a},
                     [src](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{broadcast_to(g, src)};
                     });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (broadcast_shapes(a.shape(), shape) != shape) {
    throw TensorError("broadcast_to: cannot expand " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  std::vector<double> out(shape_numel(shape));
  const auto d = a.data();
  const Strides none(shape.size(), 0);
  broadcast_loop(shape, broadcast_strides(a.shape(), shape), none,
                 [&](std::size_t i, std::size_t ia, std::size_t) { out[i] = d[ia]; });
  const Shape src = a.shape();
  return make_result(shape, std::move(out), "broadcast_to", {a},
                     [src](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{sum_to(g, src)};
                     });
}

Tensor sum(const Tensor& a) {
  const auto d = a.data();
  const double total = std::accumulate(d.begin(), d.end(), 0.0);
  const Shape src = a.shape();
  return make_result({}, {total}, "sum", {a},
                     [src](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{broadcast_to(g, src)};
                     });
}

Tensor sum(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim) {
  Shape kept = a.shape();
  for (auto ax : axes) {
    check_axis(a, ax, "sum");
    kept[ax] = 1;
  }
  Tensor r = sum_to(a, kept);
  if (keepdim) return r;
  Shape squeezed;
  for (std::size_t d = 0; d < kept.size(); ++d) {
    if (std::find(axes.begin(), axes.end(), d) == axes.end()) squeezed.push_back(kept[d]);
  }
  return reshape(r, squeezed);
}

Tensor mean(const Tensor& a) { return mul(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor mean(const Tensor& a, const std::vector<std::size_t>& axes, bool keepdim) {
  std::size_t count = 1;
  for (auto ax : axes) {
    check_axis(a, ax, "mean");
    count *= a.dim(ax);
  }
  return mul(sum(a, axes, keepdim), 1.0 / static_cast<double>(count));
}

Tensor logsumexp(const Tensor& a) {
  if (a.rank() == 0) throw TensorError("logsumexp needs at least one axis");
  const std::size_t inner = a.shape().back();
  const std::size_t rows = a.numel() / inner;
  const auto d = a.data();
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = d.data() + r * inner;
    const double m = *std::max_element(row, row + inner);
    if (!std::isfinite(m)) {
      out[r] = m;
      continue;
    }
    double s = 0.0;
    for (std::size_t k = 0; k < inner; ++k) s += std::exp(row[k] - m);
    out[r] = m + std::log(s);
  }
  Shape os = a.shape();
  os.back() = 1;
  return make_result(
      os, std::move(out), "logsumexp", {a},
      [a, inner, rows](const Tensor& out, const Tensor& g, const std::vector<bool>&) {
        const auto x = a.data();
        const auto lse = out.data();
        const auto gd = g.data();
        std::vector<double> gx(x.size());
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t k = 0; k < inner; ++k) {
            const std::size_t i = r * inner + k;
            gx[i] = gd[r] * std::exp(x[i] - lse[r]);
          }
        }
        return std::vector<Tensor>{Tensor(a.shape(), std::move(gx))};
      },
      /*double_backward=*/false);
}

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_numel(shape) != a.numel()) {
    throw TensorError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  if (shape == a.shape()) return a;
  const auto d = a.data();
  const Shape src = a.shape();
  return make_result(shape, std::vector<double>(d.begin(), d.end()), "reshape", {a},
                     [src](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{reshape(g, src)};
                     });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& dims) {
  const Shape& src = a.shape();
  if (dims.size() != src.size()) throw TensorError("permute: rank mismatch for " + shape_str(src));
  std::vector<bool> used(dims.size(), false);
  Shape os(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] >= dims.size() || used[dims[i]]) throw TensorError("permute: invalid axis order");
    used[dims[i]] = true;
    os[i] = src[dims[i]];
  }
  const auto own = contiguous_strides(src);
  Strides st(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) st[i] = own[dims[i]];
  std::vector<double> out(a.numel());
  const auto d = a.data();
  const Strides none(dims.size(), 0);
  broadcast_loop(os, st, none, [&](std::size_t i, std::size_t ia, std::size_t) { out[i] = d[ia]; });
  std::vector<std::size_t> inverse(dims.size());
  for (std::size_t i = 0; i < dims.size(); ++i) inverse[dims[i]] = i;
  return make_result(std::move(os), std::move(out), "permute", {a},
                     [inverse](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{permute(g, inverse)};
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw TensorError("transpose expects a matrix, got " + shape_str(a.shape()));
  return permute(a, {1, 0});
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw TensorError("concat of zero tensors");
  const Shape& s0 = parts[0].shape();
  check_axis(parts[0], axis, "concat");
  Shape os = s0;
  os[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == s0[d];
    if (!ok) throw TensorError("concat: " + shape_str(s) + " does not match " + shape_str(s0));
    os[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  std::vector<double> out(shape_numel(os));
  std::size_t offset = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    const std::size_t ext = p.dim(axis);
    const auto d = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(d.data() + o * ext * inner, ext * inner, out.data() + (o * os[axis] + offset) * inner);
    }
    offset += ext;
    extents.push_back(ext);
  }
  return make_result(std::move(os), std::move(out), "concat", parts,
                     [extents, axis](const Tensor&, const Tensor& g, const std::vector<bool>& needs) {
                       std::vector<Tensor> grads(extents.size());
                       std::size_t start = 0;
                       for (std::size_t i = 0; i < extents.size(); ++i) {
                         if (needs[i]) grads[i] = narrow(g, axis, start, extents[i]);
                         start += extents[i];
                       }
                       return grads;
                     });
}

Tensor narrow(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  check_axis(a, axis, "narrow");
  const Shape& s = a.shape();
  if (length == 0 || start + length > s[axis]) {
    throw TensorError("narrow: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                      ") outside axis of extent " + std::to_string(s[axis]));
  }
  if (start == 0 && length == s[axis]) return a;
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape os = s;
  os[axis] = length;
  std::vector<double> out(shape_numel(os));
  const auto d = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(d.data() + (o * s[axis] + start) * inner, length * inner, out.data() + o * length * inner);
  }
  const std::size_t after = s[axis] - start - length;
  return make_result(std::move(os), std::move(out), "narrow", {a},
                     [axis, start, after](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{pad_axis(g, axis, start, after)};
                     });
}

Tensor pad_axis(const Tensor& a, std::size_t axis, std::size_t before, std::size_t after) {
  check_axis(a, axis, "pad_axis");
  if (before == 0 && after == 0) return a;
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  Shape os = s;
  os[axis] = s[axis] + before + after;
  std::vector<double> out(shape_numel(os), 0.0);
  const auto d = a.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(d.data() + o * s[axis] * inner, s[axis] * inner, out.data() + (o * os[axis] + before) * inner);
  }
  const std::size_t length = s[axis];
  return make_result(std::move(os), std::move(out), "pad_axis", {a},
                     [axis, before, length](const Tensor&, const Tensor& g, const std::vector<bool>&) {
                       return std::vector<Tensor>{narrow(g, axis, before, length)};
                     });
}

// ---------------------------------------------------------------------------
// Normalization
//
// Forward and first-order backward run as raw loops. When the backward itself
// is being recorded (create_graph), the adjoint is rebuilt from differentiable
// ops with the statistics recomputed from x, so second derivatives are exact.

namespace {

Shape channel_param_shape(const Tensor& x) {
  Shape s(x.rank(), 1);
  s[1] = x.dim(1);
  return s;
}

// x viewed as [B,K,M,S] with channel k*M + m. Statistics are keyed by (b,k)
// when per_batch is set (group norm: K groups of M channels) and by k alone
// otherwise (batch norm: K channels, M = 1).
struct NormView {
  std::size_t b, k, m, s;
  bool per_batch;

  std::size_t keys() const { return per_batch ? b * k : k; }
  std::size_t count() const { return per_batch ? m * s : b * s; }
  std::size_t channels() const { return k * m; }
  // Shape for the graph path: [B,K,M*S] reduced over axis 2 (or 0 and 2).
  Shape view() const { return {b, k, m * s}; }
  std::vector<std::size_t> axes() const { return per_batch ? std::vector<std::size_t>{2} : std::vector<std::size_t>{0, 2}; }

  // f(key, channel, offset of a contiguous run of s elements)
  template <typename F>
  void each_run(F f) const {
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t ki = 0; ki < k; ++ki)
        for (std::size_t mi = 0; mi < m; ++mi) f(per_batch ? bi * k + ki : ki, ki * m + mi, ((bi * k + ki) * m + mi) * s);
  }
};

struct NormStats {
  std::vector<double> mean, var, rstd, xhat;
};

NormStats norm_stats(std::span<const double> x, const NormView& v, double eps) {
  NormStats st;
  const std::size_t nk = v.keys();
  const double inv = 1.0 / static_cast<double>(v.count());
  const std::size_t len = v.s;
  st.mean.assign(nk, 0.0);
  v.each_run([&](std::size_t key, std::size_t, std::size_t o) {
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += x[o + i];
    st.mean[key] += acc;
  });
  for (double& m : st.mean) m *= inv;
  st.xhat.resize(x.size());
  // Second centering pass removes the rounding residue of the first, so a
  // constant slice normalizes to exactly zero.
  std::vector<double> resid(nk, 0.0);
  v.each_run([&](std::size_t key, std::size_t, std::size_t o) {
    const double mu = st.mean[key];
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += (st.xhat[o + i] = x[o + i] - mu);
    resid[key] += acc;
  });
  st.var.assign(nk, 0.0);
  v.each_run([&](std::size_t key, std::size_t, std::size_t o) {
    const double r = resid[key] * inv;
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double c = (st.xhat[o + i] -= r);
      acc += c * c;
    }
    st.var[key] += acc;
  });
  st.rstd.resize(nk);
  for (std::size_t j = 0; j < nk; ++j) {
    st.var[j] *= inv;
    st.rstd[j] = 1.0 / std::sqrt(st.var[j] + eps);
  }
  v.each_run([&](std::size_t key, std::size_t, std::size_t o) {
    const double r = st.rstd[key];
    for (std::size_t i = 0; i < len; ++i) st.xhat[o + i] *= r;
  });
  return st;
}

// Differentiable recomputation of xhat and 1/sqrt(var+eps) in the [P,Q,R] view.
std::pair<Tensor, Tensor> norm_stats_graph(const Tensor& x, const NormView& v, double eps) {
  Tensor xr = reshape(x, v.view());
  const auto axes = v.axes();
  Tensor centered = sub(xr, mean(xr, axes, true));
  centered = sub(centered, mean(centered, axes, true));
  Tensor rstd = pow(add(mean(square(centered), axes, true), eps), -0.5);
  return {mul(centered, rstd), rstd};
}

Tensor fused_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, const NormView& v, double eps,
                  const char* op, std::vector<double>* batch_mean = nullptr, std::vector<double>* batch_var = nullptr) {
  NormStats st = norm_stats(x.data(), v, eps);
  if (batch_mean) *batch_mean = st.mean;
  if (batch_var) *batch_var = st.var;
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<double> out(st.xhat.size());
  v.each_run([&](std::size_t, std::size_t c, std::size_t o) {
    for (std::size_t i = 0; i < v.s; ++i) out[o + i] = st.xhat[o + i] * gd[c] + bd[c];
  });
  const Shape ps = channel_param_shape(x);
  auto xhat = std::make_shared<const std::vector<double>>(std::move(st.xhat));
  auto rstd = std::make_shared<const std::vector<double>>(std::move(st.rstd));
  return make_result(
      x.shape(), std::move(out), op, {x, gamma, beta},
      [x, gamma, beta, v, eps, ps, xhat, rstd](const Tensor&, const Tensor& g, const std::vector<bool>& needs) {
        Tensor gx, gg, gb;
        if (grad_enabled()) {
          auto [xh, rs] = norm_stats_graph(x, v, eps);
          Tensor xh_full = reshape(xh, x.shape());
          if (needs[0]) {
            Tensor gr = reshape(mul(g, reshape(gamma, ps)), v.view());
            const auto axes = v.axes();
            Tensor inner = sub(sub(gr, mean(gr, axes, true)), mul(xh, mean(mul(gr, xh), axes, true)));
            gx = reshape(mul(rs, inner), x.shape());
          }
          if (needs[1]) gg = reshape(sum_to(mul(g, xh_full), ps), gamma.shape());
          if (needs[2]) gb = reshape(sum_to(g, ps), beta.shape());
          return std::vector<Tensor>{gx, gg, gb};
        }
        const auto gdat = g.data();
        const auto gam = gamma.data();
        const std::size_t nk = v.keys();
        const std::size_t len = v.s;
        const auto& xh = *xhat;
        if (needs[0]) {
          std::vector<double> m1(nk, 0.0), m2(nk, 0.0);
          v.each_run([&](std::size_t key, std::size_t c, std::size_t o) {
            double a1 = 0.0, a2 = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
              a1 += gdat[o + i];
              a2 += gdat[o + i] * xh[o + i];
            }
            m1[key] += gam[c] * a1;
            m2[key] += gam[c] * a2;
          });
          const double inv = 1.0 / static_cast<double>(v.count());
          std::vector<double> dx(gdat.size());
          v.each_run([&](std::size_t key, std::size_t c, std::size_t o) {
            const double r = (*rstd)[key], a = m1[key] * inv, b = m2[key] * inv;
            for (std::size_t i = 0; i < len; ++i) dx[o + i] = r * (gdat[o + i] * gam[c] - a - xh[o + i] * b);
          });
          gx = Tensor(x.shape(), std::move(dx));
        }
        if (needs[1] || needs[2]) {
          std::vector<double> dg(v.channels(), 0.0), db(v.channels(), 0.0);
          v.each_run([&](std::size_t, std::size_t c, std::size_t o) {
            double a1 = 0.0, a2 = 0.0;
            for (std::size_t i = 0; i < len; ++i) {
              a1 += gdat[o + i] * xh[o + i];
              a2 += gdat[o + i];
            }
            dg[c] += a1;
            db[c] += a2;
          });
          if (needs[1]) gg = Tensor(gamma.shape(), std::move(dg));
          if (needs[2]) gb = Tensor(beta.shape(), std::move(db));
        }
        return std::vector<Tensor>{gx, gg, gb};
      });
}

}  // namespace

Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 2) throw TensorError("group_norm expects [B,C,...], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0);
  const std::size_t channels = x.dim(1);
  if (groups == 0 || channels % groups != 0) {
    throw TensorError("group_norm: " + std::to_string(channels) + " channels not divisible into " +
                      std::to_string(groups) + " groups");
  }
  if (gamma.numel() != channels || beta.numel() != channels) {
    throw TensorError("group_norm: affine parameters must have one entry per channel");
  }
  if (x.numel() == 0) throw TensorError("group_norm: empty input");
  const NormView v{batch, groups, channels / groups, x.numel() / (batch * channels), true};
  return fused_norm(x, gamma, beta, v, eps, "group_norm");
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                  Tensor& running_var, NormMode mode, double momentum, double eps) {
  if (x.rank() < 2) throw TensorError("batch_norm expects [B,C,...], got " + shape_str(x.shape()));
  const std::size_t channels = x.dim(1);
  if (gamma.numel() != channels || beta.numel() != channels || running_mean.numel() != channels ||
      running_var.numel() != channels) {
    throw TensorError("batch_norm: parameters must have one entry per channel");
  }
  const Shape ps = channel_param_shape(x);
  if (mode == NormMode::train) {
    if (x.numel() == 0) throw TensorError("batch_norm: empty input");
    const std::size_t spatial = x.numel() / (x.dim(0) * channels);
    const NormView v{x.dim(0), channels, 1, spatial, false};
    const std::size_t count = v.count();
    std::vector<double> m, var;
    Tensor y = fused_norm(x, gamma, beta, v, eps, "batch_norm", &m, &var);
    const double unbias = count > 1 ? static_cast<double>(count) / static_cast<double>(count - 1) : 1.0;
    auto rm = running_mean.mutable_data();
    auto rv = running_var.mutable_data();
    for (std::size_t c = 0; c < channels; ++c) {
      rm[c] = (1.0 - momentum) * rm[c] + momentum * m[c];
      rv[c] = (1.0 - momentum) * rv[c] + momentum * var[c] * unbias;
    }
    return y;
  }
  Tensor mu = reshape(running_mean.detach(), ps);
  Tensor var = reshape(running_var.detach(), ps);
  Tensor xhat = div(sub(x, mu), sqrt(add(var, eps)));
  return add(mul(xhat, reshape(gamma, ps)), reshape(beta, ps));
}

}  // namespace smoothsr
