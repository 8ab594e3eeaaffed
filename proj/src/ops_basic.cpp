#include <cmath>
#include <numeric>

#include "abanet/errors.hpp"
#include "abanet/ops.hpp"

namespace abanet {

namespace {

Tape& tape_of(Var v) {
  if (!v.valid()) throw Error("operation on an empty Var");
  return v.tape();
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  auto d = dst->data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

template <class Fwd, class Deriv>
Var unary(Var x, const char* name, Fwd fwd, Deriv deriv) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  auto o = out.data();
  auto in = xv.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(in[i]);
  return tape_of(x).record(std::move(out), {x}, [deriv](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    auto g = ctx.grad_out().data();
    auto xin = ctx.input(0).data();
    auto y = ctx.output().data();
    auto d = gx->data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * deriv(xin[i], y[i]);
  }, name);
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    accumulate(ctx.grad(0), ctx.grad_out());
    accumulate(ctx.grad(1), ctx.grad_out());
  }, "add");
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    accumulate(ctx.grad(0), ctx.grad_out());
    if (Tensor* gb = ctx.grad(1)) {
      auto d = gb->data();
      auto g = ctx.grad_out().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
    }
  }, "sub");
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return tape_of(a).record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    auto g = ctx.grad_out().data();
    if (Tensor* ga = ctx.grad(0)) {
      auto d = ga->data();
      auto bv = ctx.input(1).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (Tensor* gb = ctx.grad(1)) {
      auto d = gb->data();
      auto av = ctx.input(0).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * av[i];
    }
  }, "mul");
}

Var add_bias(Var x, Var b) {
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  if (bv.rank() != 1 || xv.shape().back() != bv.dim(0)) {
    throw DimensionError("add_bias: bias " + shape_str(bv.shape()) + " does not match " + shape_str(xv.shape()));
  }
  const std::size_t d = bv.dim(0);
  Tensor out = xv;
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i % d];
  return tape_of(x).record(std::move(out), {x, b}, [d](const BackwardContext& ctx) {
    accumulate(ctx.grad(0), ctx.grad_out());
    if (Tensor* gb = ctx.grad(1)) {
      auto g = ctx.grad_out().data();
      auto db = gb->data();
      for (std::size_t i = 0; i < g.size(); ++i) db[i % d] += g[i];
    }
  }, "add_bias");
}

Var scale(Var x, double c) {
  return unary(x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Var add_scalar(Var x, double c) {
  return unary(x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var one_minus(Var x) {
  return unary(x, "one_minus", [](double v) { return 1.0 - v; }, [](double, double) { return -1.0; });
}

Var relu(Var x) {
  return unary(x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  return unary(x, "sigmoid",
               [](double v) {
                 if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
                 const double e = std::exp(v);
                 return e / (1.0 + e);
               },
               [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var x) {
  return unary(x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var x) {
  return unary(x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data()) {
    if (!(v > 0.0)) throw NumericalError("log: non-positive input");
  }
  return unary(x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = &bv[p * n];
      double* orow = &o[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected 2-D tensor, got " + shape_str(a.shape()));
  const std::size_t r = a.dim(0), c = a.dim(1);
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out(j, i) = a(i, j);
  }
  return out;
}

Var matmul(Var a, Var b) {
  Tensor out = matmul(a.value(), b.value());
  return tape_of(a).record(std::move(out), {a, b}, [](const BackwardContext& ctx) {
    const Tensor& g = ctx.grad_out();
    if (Tensor* ga = ctx.grad(0)) accumulate(ga, matmul(g, transpose(ctx.input(1))));
    if (Tensor* gb = ctx.grad(1)) accumulate(gb, matmul(transpose(ctx.input(0)), g));
  }, "matmul");
}

Var transpose(Var a) {
  Tensor out = transpose(a.value());
  return tape_of(a).record(std::move(out), {a}, [](const BackwardContext& ctx) {
    if (Tensor* ga = ctx.grad(0)) accumulate(ga, transpose(ctx.grad_out()));
  }, "transpose");
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return tape_of(x).record(std::move(out), {x}, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      auto d = gx->data();
      auto g = ctx.grad_out().data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  }, "reshape");
}

namespace {

// Views a 1-D or 2-D tensor as rows x cols.
std::pair<std::size_t, std::size_t> as_matrix(const Tensor& t, const char* what) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError(std::string(what) + ": expected 1-D or 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Tensor& first = xs[0].value();
  const std::size_t rank = first.rank();
  if (rank > 2 || axis >= rank) throw DimensionError("concat: unsupported axis for shape " + shape_str(first.shape()));
  // Treat 1-D inputs as a single row so that axis 0 means "extend".
  const bool along_cols = (rank == 1) || axis == 1;
  std::vector<std::size_t> widths;
  std::size_t rows = 0, total = 0;
  for (const Var& x : xs) {
    auto [r, c] = as_matrix(x.value(), "concat");
    if (x.value().rank() != rank) throw DimensionError("concat: rank mismatch");
    if (along_cols) {
      if (rows == 0) rows = r;
      if (r != rows) {
        throw DimensionError("concat: row count mismatch " + shape_str(first.shape()) + " vs " +
                             shape_str(x.value().shape()));
      }
      widths.push_back(c);
      total += c;
    } else {
      if (rows == 0) rows = c;
      if (c != rows) {
        throw DimensionError("concat: column count mismatch " + shape_str(first.shape()) + " vs " +
                             shape_str(x.value().shape()));
      }
      widths.push_back(r);
      total += r;
    }
  }
  Tensor out;
  if (along_cols) {
    out = rank == 1 ? Tensor({total}) : Tensor({rows, total});
    std::size_t off = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      auto src = xs[k].value().data();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + off + c] = src[r * widths[k] + c];
      }
      off += widths[k];
    }
  } else {
    out = Tensor({total, rows});
    std::size_t off = 0;
    for (const Var& x : xs) {
      auto src = x.value().data();
      std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
      off += src.size();
    }
  }
  return tape_of(xs[0]).record(std::move(out), xs, [along_cols, rows, total, widths](const BackwardContext& ctx) {
    auto g = ctx.grad_out().data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      Tensor* gk = ctx.grad(k);
      if (gk) {
        auto d = gk->data();
        if (along_cols) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < widths[k]; ++c) d[r * widths[k] + c] += g[r * total + off + c];
          }
        } else {
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[off * rows + i];
        }
      }
      off += widths[k];
    }
  }, "concat");
}

Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  const Tensor& xv = x.value();
  auto [rows, cols] = as_matrix(xv, "slice");
  const bool along_cols = (xv.rank() == 1) || axis == 1;
  if (axis >= xv.rank()) throw DimensionError("slice: axis out of range for " + shape_str(xv.shape()));
  const std::size_t extent = along_cols ? cols : rows;
  if (length == 0 || start + length > extent) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") out of bounds for " + shape_str(xv.shape()));
  }
  Tensor out;
  if (along_cols) {
    out = xv.rank() == 1 ? Tensor({length}) : Tensor({rows, length});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < length; ++c) out[r * length + c] = xv[r * cols + start + c];
    }
  } else {
    out = Tensor({length, cols});
    for (std::size_t i = 0; i < length * cols; ++i) out[i] = xv[start * cols + i];
  }
  return tape_of(x).record(std::move(out), {x}, [along_cols, rows, cols, start, length](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    auto g = ctx.grad_out().data();
    auto d = gx->data();
    if (along_cols) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < length; ++c) d[r * cols + start + c] += g[r * length + c];
      }
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) d[start * cols + i] += g[i];
    }
  }, "slice");
}

Var sum(Var x) {
  const auto v = x.value().data();
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  return tape_of(x).record(Tensor::scalar(s), {x}, [](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) {
      const double g = ctx.grad_out()[0];
      for (double& d : gx->data()) d += g;
    }
  }, "sum");
}

Var pick(Var x, std::size_t flat_index) {
  if (flat_index >= x.value().size()) throw DimensionError("pick: index out of range");
  return tape_of(x).record(Tensor::scalar(x.value()[flat_index]), {x}, [flat_index](const BackwardContext& ctx) {
    if (Tensor* gx = ctx.grad(0)) (*gx)[flat_index] += ctx.grad_out()[0];
  }, "pick");
}

Var mul_scalar_at(Var x, Var s, std::size_t index) {
  const Tensor& sv = s.value();
  if (sv.rank() != 1 || index >= sv.dim(0)) throw DimensionError("mul_scalar_at: index out of range");
  const double c = sv[index];
  Tensor out = x.value();
  for (double& v : out.data()) v *= c;
  return tape_of(x).record(std::move(out), {x, s}, [index](const BackwardContext& ctx) {
    auto g = ctx.grad_out().data();
    if (Tensor* gx = ctx.grad(0)) {
      const double c = ctx.input(1)[index];
      auto d = gx->data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * g[i];
    }
    if (Tensor* gs = ctx.grad(1)) {
      auto xv = ctx.input(0).data();
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      (*gs)[index] += acc;
    }
  }, "mul_scalar_at");
}

}  // namespace abanet
