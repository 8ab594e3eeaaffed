#include <algorithm>
#include <cmath>
#include <limits>

#include "abanet/errors.hpp"
#include "abanet/ops.hpp"

namespace abanet {

namespace {

struct AxisView {
  std::size_t outer, len, inner;
  std::size_t at(std::size_t o, std::size_t k, std::size_t i) const { return (o * len + k) * inner + i; }
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisView v{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

void check_mask(const Tensor& x, const Tensor* mask, const char* what) {
  if (mask && mask->shape() != x.shape()) {
    throw DimensionError(std::string(what) + ": mask shape " + shape_str(mask->shape()) + " does not match " +
                         shape_str(x.shape()));
  }
}

}  // namespace

Var masked_softmax(Var x, const Tensor* mask, std::size_t axis) {
  const Tensor& xv = x.value();
  check_mask(xv, mask, "masked_softmax");
  const AxisView v = axis_view(xv.shape(), axis);
  Tensor out(xv.shape());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (std::size_t k = 0; k < v.len; ++k) {
        const std::size_t idx = v.at(o, k, i);
        if (mask && (*mask)[idx] == 0.0) continue;
        any = true;
        mx = std::max(mx, xv[idx]);
      }
      if (!any) throw NumericalError("masked_softmax: slice with every entry masked (empty sequence?)");
      double z = 0.0;
      for (std::size_t k = 0; k < v.len; ++k) {
        const std::size_t idx = v.at(o, k, i);
        if (mask && (*mask)[idx] == 0.0) continue;
        out[idx] = std::exp(xv[idx] - mx);
        z += out[idx];
      }
      for (std::size_t k = 0; k < v.len; ++k) out[v.at(o, k, i)] /= z;
    }
  }
  return x.tape().record(std::move(out), {x}, [v](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    const Tensor& y = ctx.output();
    const Tensor& g = ctx.grad_out();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < v.len; ++k) dot += g[v.at(o, k, i)] * y[v.at(o, k, i)];
        for (std::size_t k = 0; k < v.len; ++k) {
          const std::size_t idx = v.at(o, k, i);
          (*gx)[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  }, "masked_softmax");
}

Var masked_cross_entropy(Var logits, const Tensor* mask, std::size_t target) {
  const Tensor& xv = logits.value();
  if (xv.rank() != 1) throw DimensionError("masked_cross_entropy: expected 1-D logits, got " + shape_str(xv.shape()));
  check_mask(xv, mask, "masked_cross_entropy");
  if (target >= xv.size()) throw DataError("masked_cross_entropy: target index out of range");
  if (mask && (*mask)[target] == 0.0) throw DataError("masked_cross_entropy: target at a masked position");
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < xv.size(); ++k) {
    if (!mask || (*mask)[k] != 0.0) mx = std::max(mx, xv[k]);
  }
  double z = 0.0;
  for (std::size_t k = 0; k < xv.size(); ++k) {
    if (!mask || (*mask)[k] != 0.0) z += std::exp(xv[k] - mx);
  }
  const double lse = mx + std::log(z);
  Tensor keep = mask ? *mask : Tensor(xv.shape(), 1.0);
  return logits.tape().record(Tensor::scalar(lse - xv[target]), {logits},
                              [target, lse, keep](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    const double g = ctx.grad_out()[0];
    const Tensor& x = ctx.input(0);
    for (std::size_t k = 0; k < x.size(); ++k) {
      if (keep[k] == 0.0) continue;
      (*gx)[k] += g * std::exp(x[k] - lse);
    }
    (*gx)[target] -= g;
  }, "masked_cross_entropy");
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("layer_norm: expected [n x d], got " + shape_str(xv.shape()));
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  if (gain.value().shape() != Shape{d} || bias.value().shape() != Shape{d}) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) + "]");
  }
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += xv(r, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xv(r, c) - mean) * (xv(r, c) - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) out(r, c) = gv[c] * (xv(r, c) - mean) * inv + bv[c];
  }
  return x.tape().record(std::move(out), {x, gain, bias}, [n, d, eps](const BackwardContext& ctx) {
    const Tensor& xin = ctx.input(0);
    const Tensor& gv = ctx.input(1);
    const Tensor& g = ctx.grad_out();
    Tensor* gx = ctx.grad(0);
    Tensor* gg = ctx.grad(1);
    Tensor* gb = ctx.grad(2);
    std::vector<double> xhat(d), dxhat(d);
    for (std::size_t r = 0; r < n; ++r) {
      double mean = 0.0;
      for (std::size_t c = 0; c < d; ++c) mean += xin(r, c);
      mean /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t c = 0; c < d; ++c) var += (xin(r, c) - mean) * (xin(r, c) - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        xhat[c] = (xin(r, c) - mean) * inv;
        dxhat[c] = g(r, c) * gv[c];
        mean_dxhat += dxhat[c];
        mean_dxhat_xhat += dxhat[c] * xhat[c];
        if (gg) (*gg)[c] += g(r, c) * xhat[c];
        if (gb) (*gb)[c] += g(r, c);
      }
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      if (gx) {
        for (std::size_t c = 0; c < d; ++c) (*gx)(r, c) += inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
      }
    }
  }, "layer_norm");
}

Var depthwise_conv1d(Var x, Var dw) {
  const Tensor& xv = x.value();
  const Tensor& kv = dw.value();
  if (xv.rank() != 2 || kv.rank() != 2 || kv.dim(1) != xv.dim(1)) {
    throw DimensionError("depthwise_conv1d: kernel " + shape_str(kv.shape()) + " incompatible with input " +
                         shape_str(xv.shape()));
  }
  const std::size_t k = kv.dim(0);
  if (k % 2 == 0) throw ConfigError("depthwise_conv1d: kernel width must be odd, got " + std::to_string(k));
  const std::size_t n = xv.dim(0), d = xv.dim(1);
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out({n, d});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      for (std::size_t c = 0; c < d; ++c) out(t, c) += xv(static_cast<std::size_t>(src), c) * kv(j, c);
    }
  }
  return x.tape().record(std::move(out), {x, dw}, [n, d, k, half](const BackwardContext& ctx) {
    const Tensor& xin = ctx.input(0);
    const Tensor& kin = ctx.input(1);
    const Tensor& g = ctx.grad_out();
    Tensor* gx = ctx.grad(0);
    Tensor* gk = ctx.grad(1);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t j = 0; j < k; ++j) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
        const auto s = static_cast<std::size_t>(src);
        for (std::size_t c = 0; c < d; ++c) {
          if (gx) (*gx)(s, c) += g(t, c) * kin(j, c);
          if (gk) (*gk)(j, c) += g(t, c) * xin(s, c);
        }
      }
    }
  }, "depthwise_conv1d");
}

Var depthwise_separable_conv1d(Var x, Var dw, Var pw) {
  if (pw.value().rank() != 2 || pw.value().dim(0) != x.value().dim(1)) {
    throw DimensionError("depthwise_separable_conv1d: pointwise " + shape_str(pw.value().shape()) +
                         " incompatible with input " + shape_str(x.value().shape()));
  }
  return matmul(depthwise_conv1d(x, dw), pw);
}

Var char_conv_maxpool(Var x, Var w, Var b) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.rank() != 3 || wv.rank() != 3 || wv.dim(1) != xv.dim(2) || bv.shape() != Shape{wv.dim(2)}) {
    throw DimensionError("char_conv_maxpool: filters " + shape_str(wv.shape()) + " / bias " +
                         shape_str(bv.shape()) + " incompatible with input " + shape_str(xv.shape()));
  }
  const std::size_t n = xv.dim(0), c = xv.dim(1), e = xv.dim(2), k = wv.dim(0), f = wv.dim(2);
  if (c < k) {
    throw ConfigError("char_conv_maxpool: " + std::to_string(c) + " characters per word is less than kernel width " +
                      std::to_string(k));
  }
  const std::size_t positions = c - k + 1;
  Tensor out({n, f});
  std::vector<std::size_t> argmax(n * f, 0);
  std::vector<double> z(f);
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t p = 0; p < positions; ++p) {
      for (std::size_t o = 0; o < f; ++o) z[o] = bv[o];
      for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t i = 0; i < e; ++i) {
          const double xval = xv[(t * c + p + j) * e + i];
          if (xval == 0.0) continue;
          const double* wrow = &wv.data()[(j * e + i) * f];
          for (std::size_t o = 0; o < f; ++o) z[o] += xval * wrow[o];
        }
      }
      for (std::size_t o = 0; o < f; ++o) {
        if (p == 0 || z[o] > out(t, o)) {
          out(t, o) = z[o];
          argmax[t * f + o] = p;
        }
      }
    }
  }
  return x.tape().record(std::move(out), {x, w, b}, [n, c, e, k, f, argmax](const BackwardContext& ctx) {
    const Tensor& xin = ctx.input(0);
    const Tensor& win = ctx.input(1);
    const Tensor& g = ctx.grad_out();
    Tensor* gx = ctx.grad(0);
    Tensor* gw = ctx.grad(1);
    Tensor* gb = ctx.grad(2);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t o = 0; o < f; ++o) {
        const double go = g(t, o);
        if (gb) (*gb)[o] += go;
        const std::size_t p = argmax[t * f + o];
        for (std::size_t j = 0; j < k; ++j) {
          for (std::size_t i = 0; i < e; ++i) {
            const std::size_t xi = (t * c + p + j) * e + i;
            const std::size_t wi = (j * e + i) * f + o;
            if (gw) (*gw)[wi] += go * xin[xi];
            if (gx) (*gx)[xi] += go * win[wi];
          }
        }
      }
    }
  }, "char_conv_maxpool");
}

Var gather_rows(Var table, const std::vector<int>& ids, int pad_id) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("gather_rows: table must be 2-D, got " + shape_str(tv.shape()));
  if (ids.empty()) throw DimensionError("gather_rows: empty id sequence");
  const std::size_t v = tv.dim(0), e = tv.dim(1);
  Tensor out({ids.size(), e});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    const int id = ids[r];
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw DataError("gather_rows: id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(v));
    }
    if (id == pad_id) continue;
    for (std::size_t c = 0; c < e; ++c) out(r, c) = tv(static_cast<std::size_t>(id), c);
  }
  return table.tape().record(std::move(out), {table}, [ids, pad_id, e](const BackwardContext& ctx) {
    Tensor* gt = ctx.grad(0);
    if (!gt) return;
    const Tensor& g = ctx.grad_out();
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] == pad_id) continue;
      const auto row = static_cast<std::size_t>(ids[r]);
      for (std::size_t c = 0; c < e; ++c) (*gt)(row, c) += g(r, c);
    }
  }, "gather_rows");
}

Var dropout(Var x, double rate, const Context& ctx) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
  if (!ctx.training || rate == 0.0) return x;
  if (!ctx.rng) throw ConfigError("dropout: training mode requires a random generator");
  const double keep = 1.0 - rate;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Tensor mask(x.value().shape());
  for (double& m : mask.data()) m = uni(*ctx.rng) < keep ? 1.0 / keep : 0.0;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return x.tape().record(std::move(out), {x}, [mask](const BackwardContext& c) {
    if (Tensor* gx = c.grad(0)) {
      const Tensor& g = c.grad_out();
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * mask[i];
    }
  }, "dropout");
}

Var trilinear(Var p, Var q, Var w) {
  const Tensor& pv = p.value();
  const Tensor& qv = q.value();
  const Tensor& wv = w.value();
  if (pv.rank() != 2 || qv.rank() != 2 || pv.dim(1) != qv.dim(1)) {
    throw DimensionError("trilinear: passage " + shape_str(pv.shape()) + " and question " + shape_str(qv.shape()) +
                         " widths differ");
  }
  const std::size_t n = pv.dim(0), m = qv.dim(0), h = pv.dim(1);
  if (wv.shape() != Shape{3 * h}) {
    throw DimensionError("trilinear: weight must be [" + std::to_string(3 * h) + "], got " + shape_str(wv.shape()));
  }
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    double pi = 0.0;
    for (std::size_t c = 0; c < h; ++c) pi += wv[c] * pv(i, c);
    for (std::size_t j = 0; j < m; ++j) {
      double acc = pi;
      for (std::size_t c = 0; c < h; ++c) acc += wv[h + c] * qv(j, c) + wv[2 * h + c] * pv(i, c) * qv(j, c);
      out(i, j) = acc;
    }
  }
  return p.tape().record(std::move(out), {p, q, w}, [n, m, h](const BackwardContext& ctx) {
    const Tensor& pin = ctx.input(0);
    const Tensor& qin = ctx.input(1);
    const Tensor& win = ctx.input(2);
    const Tensor& g = ctx.grad_out();
    Tensor* gp = ctx.grad(0);
    Tensor* gq = ctx.grad(1);
    Tensor* gw = ctx.grad(2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        const double gij = g(i, j);
        if (gij == 0.0) continue;
        for (std::size_t c = 0; c < h; ++c) {
          if (gp) (*gp)(i, c) += gij * (win[c] + win[2 * h + c] * qin(j, c));
          if (gq) (*gq)(j, c) += gij * (win[h + c] + win[2 * h + c] * pin(i, c));
          if (gw) {
            (*gw)[c] += gij * pin(i, c);
            (*gw)[h + c] += gij * qin(j, c);
            (*gw)[2 * h + c] += gij * pin(i, c) * qin(j, c);
          }
        }
      }
    }
  }, "trilinear");
}

Var squash(Var v) {
  const Tensor& xv = v.value();
  const std::size_t d = xv.shape().back();
  const std::size_t groups = xv.size() / d;
  Tensor out(xv.shape());
  for (std::size_t gidx = 0; gidx < groups; ++gidx) {
    double n2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) n2 += xv[gidx * d + c] * xv[gidx * d + c];
    if (n2 == 0.0) continue;
    const double s = std::sqrt(n2) / (1.0 + n2);
    for (std::size_t c = 0; c < d; ++c) out[gidx * d + c] = s * xv[gidx * d + c];
  }
  return v.tape().record(std::move(out), {v}, [d, groups](const BackwardContext& ctx) {
    Tensor* gx = ctx.grad(0);
    if (!gx) return;
    const Tensor& xin = ctx.input(0);
    const Tensor& g = ctx.grad_out();
    for (std::size_t gidx = 0; gidx < groups; ++gidx) {
      double n2 = 0.0, vg = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        n2 += xin[gidx * d + c] * xin[gidx * d + c];
        vg += xin[gidx * d + c] * g[gidx * d + c];
      }
      if (n2 == 0.0) continue;
      const double norm = std::sqrt(n2);
      const double f = norm / (1.0 + n2);
      const double df = (1.0 - n2) / (2.0 * norm * (1.0 + n2) * (1.0 + n2));
      for (std::size_t c = 0; c < d; ++c) {
        (*gx)[gidx * d + c] += f * g[gidx * d + c] + 2.0 * df * vg * xin[gidx * d + c];
      }
    }
  }, "squash");
}

Var capsule_predict(Var u, Var w) {
  const Tensor& uv = u.value();
  const Tensor& wv = w.value();
  if (uv.rank() != 3 || wv.rank() != 4 || wv.dim(0) != uv.dim(1) || wv.dim(3) != uv.dim(2)) {
    throw DimensionError("capsule_predict: transform " + shape_str(wv.shape()) + " incompatible with capsules " +
                         shape_str(uv.shape()));
  }
  const std::size_t n = uv.dim(0), P = uv.dim(1), p = uv.dim(2), D = wv.dim(1), q = wv.dim(2);
  Tensor out({n, P, D, q});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < P; ++i) {
      const double* ui = &uv.data()[(t * P + i) * p];
      for (std::size_t j = 0; j < D; ++j) {
        for (std::size_t a = 0; a < q; ++a) {
          const double* wrow = &wv.data()[((i * D + j) * q + a) * p];
          double acc = 0.0;
          for (std::size_t b = 0; b < p; ++b) acc += wrow[b] * ui[b];
          out[((t * P + i) * D + j) * q + a] = acc;
        }
      }
    }
  }
  return u.tape().record(std::move(out), {u, w}, [n, P, p, D, q](const BackwardContext& ctx) {
    const Tensor& uin = ctx.input(0);
    const Tensor& win = ctx.input(1);
    const Tensor& g = ctx.grad_out();
    Tensor* gu = ctx.grad(0);
    Tensor* gw = ctx.grad(1);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < D; ++j) {
          for (std::size_t a = 0; a < q; ++a) {
            const double go = g[((t * P + i) * D + j) * q + a];
            if (go == 0.0) continue;
            const std::size_t wbase = ((i * D + j) * q + a) * p;
            for (std::size_t b = 0; b < p; ++b) {
              if (gw) (*gw)[wbase + b] += go * uin[(t * P + i) * p + b];
              if (gu) (*gu)[(t * P + i) * p + b] += go * win[wbase + b];
            }
          }
        }
      }
    }
  }, "capsule_predict");
}

Var capsule_weighted_sum(Var c, Var uhat) {
  const Tensor& cv = c.value();
  const Tensor& uv = uhat.value();
  if (cv.rank() != 3 || uv.rank() != 4 || cv.dim(0) != uv.dim(0) || cv.dim(1) != uv.dim(1) || cv.dim(2) != uv.dim(2)) {
    throw DimensionError("capsule_weighted_sum: couplings " + shape_str(cv.shape()) + " incompatible with predictions " +
                         shape_str(uv.shape()));
  }
  const std::size_t n = uv.dim(0), P = uv.dim(1), D = uv.dim(2), q = uv.dim(3);
  Tensor out({n, D, q});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        const double cij = cv[(t * P + i) * D + j];
        for (std::size_t a = 0; a < q; ++a) out[(t * D + j) * q + a] += cij * uv[((t * P + i) * D + j) * q + a];
      }
    }
  }
  return c.tape().record(std::move(out), {c, uhat}, [n, P, D, q](const BackwardContext& ctx) {
    const Tensor& cin = ctx.input(0);
    const Tensor& uin = ctx.input(1);
    const Tensor& g = ctx.grad_out();
    Tensor* gc = ctx.grad(0);
    Tensor* gu = ctx.grad(1);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < D; ++j) {
          const std::size_t cij = (t * P + i) * D + j;
          double acc = 0.0;
          for (std::size_t a = 0; a < q; ++a) {
            const double ga = g[(t * D + j) * q + a];
            acc += ga * uin[cij * q + a];
            if (gu) (*gu)[cij * q + a] += cin[cij] * ga;
          }
          if (gc) (*gc)[cij] += acc;
        }
      }
    }
  }, "capsule_weighted_sum");
}

Var capsule_agreement(Var uhat, Var v) {
  const Tensor& uv = uhat.value();
  const Tensor& vv = v.value();
  if (uv.rank() != 4 || vv.rank() != 3 || vv.dim(0) != uv.dim(0) || vv.dim(1) != uv.dim(2) || vv.dim(2) != uv.dim(3)) {
    throw DimensionError("capsule_agreement: outputs " + shape_str(vv.shape()) + " incompatible with predictions " +
                         shape_str(uv.shape()));
  }
  const std::size_t n = uv.dim(0), P = uv.dim(1), D = uv.dim(2), q = uv.dim(3);
  Tensor out({n, P, D});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t j = 0; j < D; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < q; ++a) acc += uv[((t * P + i) * D + j) * q + a] * vv[(t * D + j) * q + a];
        out[(t * P + i) * D + j] = acc;
      }
    }
  }
  return uhat.tape().record(std::move(out), {uhat, v}, [n, P, D, q](const BackwardContext& ctx) {
    const Tensor& uin = ctx.input(0);
    const Tensor& vin = ctx.input(1);
    const Tensor& g = ctx.grad_out();
    Tensor* gu = ctx.grad(0);
    Tensor* gv = ctx.grad(1);
    for (std::size_t t = 0; t < n; ++t) {
      for (std::size_t i = 0; i < P; ++i) {
        for (std::size_t j = 0; j < D; ++j) {
          const std::size_t idx = (t * P + i) * D + j;
          const double gij = g[idx];
          for (std::size_t a = 0; a < q; ++a) {
            if (gu) (*gu)[idx * q + a] += gij * vin[(t * D + j) * q + a];
            if (gv) (*gv)[(t * D + j) * q + a] += gij * uin[idx * q + a];
          }
        }
      }
    }
  }, "capsule_agreement");
}

}  // namespace abanet
