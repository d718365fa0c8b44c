#include "capgen/ops.hpp"

#include <algorithm>
#include <cmath>

#include "capgen/kernels.hpp"

namespace capgen {

namespace {

using detail::Storage;
using StoragePtr = std::shared_ptr<Storage>;

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::current()) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// Output storage grad; null means nothing downstream touched this value.
const std::vector<double>* out_grad(const StoragePtr& st) {
  return st->grad.empty() ? nullptr : &st->grad;
}

std::vector<double>& acc_grad(const StoragePtr& st) {
  st->ensure_grad();
  return st->grad;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() < 2 || b.ndim() < 2) {
    throw ShapeError("matmul needs >=2-d operands, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::size_t m = a.dim(a.ndim() - 2), k = a.dim(a.ndim() - 1);
  std::size_t kb = b.dim(b.ndim() - 2), n = b.dim(b.ndim() - 1);
  if (k != kb) {
    throw ShapeError("matmul inner extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::size_t ba = a.size() / (m * k), bb = b.size() / (kb * n);
  if (ba != bb && ba != 1 && bb != 1) {
    throw ShapeError("matmul batch dims incompatible: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  std::size_t batches = std::max(ba, bb);

  Shape out_shape;
  if (ba != bb)
    out_shape = ba > bb ? a.shape() : b.shape();
  else
    out_shape = a.ndim() >= b.ndim() ? a.shape() : b.shape();
  out_shape[out_shape.size() - 2] = m;
  out_shape[out_shape.size() - 1] = n;
  Tensor c(out_shape);

  const auto& K = kernels::active();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t bi = 0; bi < batches; ++bi) {
    const double* A = pa + (ba == 1 ? 0 : bi * m * k);
    const double* B = pb + (bb == 1 ? 0 : bi * k * n);
    double* C = pc + bi * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double* Ai = A + i * k;
      double* Ci = C + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        if (Ai[kk] != 0.0) K.axpy(n, Ai[kk], B + kk * n, Ci);
      }
    }
  }

  if (recording({&a, &b})) {
    c.set_requires_grad(true);
    StoragePtr sa = a.storage(), sb = b.storage(), sc = c.storage();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record([=]() {
      const std::vector<double>* gc = out_grad(sc);
      if (!gc) return;
      const auto& K = kernels::active();
      const double* pa = sa->data.data();
      const double* pb = sb->data.data();
      const double* pgc = gc->data();
      if (ga) {
        auto& gav = acc_grad(sa);
        // dA[i,:] += sum_n dC[i,n] * B[:,n]; go through B^T rows.
        std::vector<double> bt(k * n);
        for (std::size_t bi = 0; bi < batches; ++bi) {
          const double* B = pb + (bb == 1 ? 0 : bi * k * n);
          if (bi == 0 || bb != 1) {
            for (std::size_t kk = 0; kk < k; ++kk)
              for (std::size_t j = 0; j < n; ++j) bt[j * k + kk] = B[kk * n + j];
          }
          const double* GC = pgc + bi * m * n;
          double* GA = gav.data() + (ba == 1 ? 0 : bi * m * k);
          for (std::size_t i = 0; i < m; ++i) {
            const double* gci = GC + i * n;
            double* gai = GA + i * k;
            for (std::size_t j = 0; j < n; ++j) {
              if (gci[j] != 0.0) K.axpy(k, gci[j], bt.data() + j * k, gai);
            }
          }
        }
      }
      if (gb) {
        auto& gbv = acc_grad(sb);
        for (std::size_t bi = 0; bi < batches; ++bi) {
          const double* A = pa + (ba == 1 ? 0 : bi * m * k);
          const double* GC = pgc + bi * m * n;
          double* GB = gbv.data() + (bb == 1 ? 0 : bi * k * n);
          for (std::size_t i = 0; i < m; ++i) {
            const double* Ai = A + i * k;
            const double* gci = GC + i * n;
            for (std::size_t kk = 0; kk < k; ++kk) {
              if (Ai[kk] != 0.0) K.axpy(n, Ai[kk], gci, GB + kk * n);
            }
          }
        }
      }
    });
  }
  return c;
}

Tensor gather(const Tensor& x, std::shared_ptr<const IndexMap> map, Shape out_shape) {
  if (map->size() != shape_numel(out_shape)) {
    throw ShapeError("gather map size " + std::to_string(map->size()) + " vs out " +
                     shape_str(out_shape));
  }
  Tensor out(std::move(out_shape));
  const double* px = x.data();
  double* po = out.data();
  const IndexMap& m = *map;
  for (std::size_t j = 0; j < m.size(); ++j) po[j] = px[m[j]];

  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so, map]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      auto& gx = acc_grad(sx);
      const IndexMap& m = *map;
      for (std::size_t j = 0; j < m.size(); ++j) gx[m[j]] += (*go)[j];
    });
  }
  return out;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes) {
  if (axes.size() != x.ndim()) throw ShapeError("permute rank mismatch");
  std::size_t nd = axes.size();
  Shape out_shape(nd);
  for (std::size_t i = 0; i < nd; ++i) out_shape[i] = x.dim(axes[i]);

  std::vector<std::size_t> in_strides(nd, 1);
  for (std::size_t i = nd - 1; i > 0; --i) in_strides[i - 1] = in_strides[i] * x.dim(i);

  auto map = std::make_shared<IndexMap>(x.size());
  std::vector<std::size_t> idx(nd, 0);
  for (std::size_t j = 0; j < map->size(); ++j) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < nd; ++i) src += idx[i] * in_strides[axes[i]];
    (*map)[j] = src;
    for (std::size_t i = nd; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  return gather(x, map, out_shape);
}

Tensor transpose_last2(const Tensor& x) {
  std::vector<std::size_t> axes(x.ndim());
  for (std::size_t i = 0; i < axes.size(); ++i) axes[i] = i;
  std::swap(axes[axes.size() - 1], axes[axes.size() - 2]);
  return permute(x, axes);
}

namespace {

Tensor elementwise2(const Tensor& a, const Tensor& b, int mode) {
  if (a.size() != b.size()) {
    throw ShapeError("elementwise op shapes differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Tensor out(a.shape());
  const auto& K = kernels::active();
  if (mode == 0)
    K.add(a.size(), a.data(), b.data(), out.data());
  else if (mode == 1)
    K.sub(a.size(), a.data(), b.data(), out.data());
  else
    K.mul(a.size(), a.data(), b.data(), out.data());

  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    StoragePtr sa = a.storage(), sb = b.storage(), so = out.storage();
    bool ga = a.requires_grad(), gb = b.requires_grad();
    Tape::current()->record([=]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      const auto& K = kernels::active();
      std::size_t n = go->size();
      if (mode == 2) {
        if (ga) K.mul_acc(n, go->data(), sb->data.data(), acc_grad(sa).data());
        if (gb) K.mul_acc(n, go->data(), sa->data.data(), acc_grad(sb).data());
      } else {
        if (ga) K.axpy(n, 1.0, go->data(), acc_grad(sa).data());
        if (gb) K.axpy(n, mode == 1 ? -1.0 : 1.0, go->data(), acc_grad(sb).data());
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return elementwise2(a, b, 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise2(a, b, 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise2(a, b, 2); }

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  std::size_t nb = bias.size();
  if (nb == 0 || x.size() % nb != 0) {
    throw ShapeError("add_bias: bias " + shape_str(bias.shape()) + " does not tile " +
                     shape_str(x.shape()));
  }
  Tensor out(x.shape());
  const auto& K = kernels::active();
  std::size_t reps = x.size() / nb;
  for (std::size_t r = 0; r < reps; ++r)
    K.add(nb, x.data() + r * nb, bias.data(), out.data() + r * nb);

  if (recording({&x, &bias})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), sb = bias.storage(), so = out.storage();
    bool gx = x.requires_grad(), gb = bias.requires_grad();
    Tape::current()->record([=]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      const auto& K = kernels::active();
      if (gx) K.axpy(go->size(), 1.0, go->data(), acc_grad(sx).data());
      if (gb) {
        auto& g = acc_grad(sb);
        for (std::size_t r = 0; r < reps; ++r) K.axpy(nb, 1.0, go->data() + r * nb, g.data());
      }
    });
  }
  return out;
}

Tensor add_mask(const Tensor& x, const Tensor& c) {
  std::size_t nc = c.size();
  if (nc == 0 || x.size() % nc != 0) {
    throw ShapeError("add_mask: mask " + shape_str(c.shape()) + " does not tile " +
                     shape_str(x.shape()));
  }
  Tensor out(x.shape());
  const auto& K = kernels::active();
  std::size_t reps = x.size() / nc;
  for (std::size_t r = 0; r < reps; ++r)
    K.add(nc, x.data() + r * nc, c.data(), out.data() + r * nc);

  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      kernels::active().axpy(go->size(), 1.0, go->data(), acc_grad(sx).data());
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double a) {
  Tensor out(x.shape());
  kernels::active().scale(x.size(), a, x.data(), out.data());
  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so, a]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      kernels::active().axpy(go->size(), a, go->data(), acc_grad(sx).data());
    });
  }
  return out;
}

Tensor gelu(const Tensor& x) {
  Tensor out(x.shape());
  const double inv_sqrt2 = 0.70710678118654752440;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x.data()[i];
    out.data()[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      auto& g = acc_grad(sx);
      const double inv_sqrt2 = 0.70710678118654752440;
      const double inv_sqrt2pi = 0.39894228040143267794;
      for (std::size_t i = 0; i < go->size(); ++i) {
        double v = sx->data[i];
        double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
        double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
        g[i] += (*go)[i] * (cdf + v * pdf);
      }
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.ndim()) throw ShapeError("softmax axis out of range");
  std::size_t len = x.dim(axis);
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
  std::size_t outer = x.size() / (len * inner);

  Tensor out(x.shape());
  const double* px = x.data();
  double* po = out.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const double* xr = px + o * len * inner + in;
      double* yr = po + o * len * inner + in;
      double mx = xr[0];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, xr[i * inner]);
      if (std::isnan(mx)) throw NumericError("softmax: NaN input");
      double s = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        double e = std::exp(xr[i * inner] - mx);
        yr[i * inner] = e;
        s += e;
      }
      double inv = 1.0 / s;
      for (std::size_t i = 0; i < len; ++i) yr[i * inner] *= inv;
    }
  }

  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so, len, inner, outer]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      auto& g = acc_grad(sx);
      const double* y = so->data.data();
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
          std::size_t base = o * len * inner + in;
          double dot = 0.0;
          for (std::size_t i = 0; i < len; ++i)
            dot += (*go)[base + i * inner] * y[base + i * inner];
          for (std::size_t i = 0; i < len; ++i) {
            std::size_t p = base + i * inner;
            g[p] += y[p] * ((*go)[p] - dot);
          }
        }
      }
    });
  }
  return out;
}

Tensor log_softmax_last(const Tensor& x) {
  std::size_t len = x.dim(x.ndim() - 1);
  std::size_t rows = x.size() / len;
  Tensor out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * len;
    double* yr = out.data() + r * len;
    double mx = *std::max_element(xr, xr + len);
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) s += std::exp(xr[i] - mx);
    double lse = mx + std::log(s);
    for (std::size_t i = 0; i < len; ++i) yr[i] = xr[i] - lse;
  }
  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so, len, rows]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      auto& g = acc_grad(sx);
      const double* y = so->data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t i = 0; i < len; ++i) s += (*go)[r * len + i];
        for (std::size_t i = 0; i < len; ++i) {
          std::size_t p = r * len + i;
          g[p] += (*go)[p] - std::exp(y[p]) * s;
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0.0) throw ContractError("layer_norm eps must be > 0");
  std::size_t h = x.dim(x.ndim() - 1);
  if (gain.size() != h || bias.size() != h) {
    throw ShapeError("layer_norm affine params must match last axis " + std::to_string(h));
  }
  std::size_t rows = x.size() / h;
  Tensor out(x.shape());
  std::vector<double> inv_std(rows), mu(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * h;
    double m = 0.0;
    for (std::size_t i = 0; i < h; ++i) m += xr[i];
    m /= static_cast<double>(h);
    double v = 0.0;
    for (std::size_t i = 0; i < h; ++i) {
      double d = xr[i] - m;
      v += d * d;
    }
    v /= static_cast<double>(h);
    double is = 1.0 / std::sqrt(v + eps);
    mu[r] = m;
    inv_std[r] = is;
    double* yr = out.data() + r * h;
    for (std::size_t i = 0; i < h; ++i) yr[i] = (xr[i] - m) * is * gain.data()[i] + bias.data()[i];
  }

  if (recording({&x, &gain, &bias})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), sg = gain.storage(), sb = bias.storage(), so = out.storage();
    bool gx = x.requires_grad(), gg = gain.requires_grad(), gb = bias.requires_grad();
    auto mu_s = std::make_shared<std::vector<double>>(std::move(mu));
    auto is_s = std::make_shared<std::vector<double>>(std::move(inv_std));
    Tape::current()->record([=]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      const double* gv = sg->data.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = sx->data.data() + r * h;
        const double* gor = go->data() + r * h;
        double m = (*mu_s)[r], is = (*is_s)[r];
        if (gg || gb) {
          for (std::size_t i = 0; i < h; ++i) {
            double xhat = (xr[i] - m) * is;
            if (gg) acc_grad(sg)[i] += gor[i] * xhat;
            if (gb) acc_grad(sb)[i] += gor[i];
          }
        }
        if (gx) {
          double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
          for (std::size_t i = 0; i < h; ++i) {
            double xhat = (xr[i] - m) * is;
            double dxhat = gor[i] * gv[i];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xhat;
          }
          mean_dxhat /= static_cast<double>(h);
          mean_dxhat_xhat /= static_cast<double>(h);
          auto& g = acc_grad(sx);
          for (std::size_t i = 0; i < h; ++i) {
            double xhat = (xr[i] - m) * is;
            double dxhat = gor[i] * gv[i];
            g[r * h + i] += is * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
          }
        }
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& x, double p, Rng& rng, bool training) {
  if (!training || p <= 0.0) return x;
  if (p >= 1.0) throw ContractError("dropout p must be < 1");
  auto mask = std::make_shared<std::vector<double>>(x.size());
  double keep = 1.0 - p;
  for (std::size_t i = 0; i < x.size(); ++i)
    (*mask)[i] = rng.uniform() < p ? 0.0 : 1.0 / keep;
  Tensor out(x.shape());
  kernels::active().mul(x.size(), x.data(), mask->data(), out.data());
  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so, mask]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      kernels::active().mul_acc(go->size(), go->data(), mask->data(), acc_grad(sx).data());
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
  if (logits.ndim() != 2) throw ShapeError("cross_entropy expects [N,V] logits");
  std::size_t rows = logits.dim(0), v = logits.dim(1);
  if (targets.size() != rows) throw ShapeError("cross_entropy target count mismatch");

  auto probs = std::make_shared<std::vector<double>>(rows * v, 0.0);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    int t = targets[r];
    if (t == ignore_index) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw DataError("cross_entropy target " + std::to_string(t) + " out of range [0," +
                      std::to_string(v) + ")");
    }
    const double* lr = logits.data() + r * v;
    double mx = *std::max_element(lr, lr + v);
    double s = 0.0;
    for (std::size_t i = 0; i < v; ++i) s += std::exp(lr[i] - mx);
    double lse = mx + std::log(s);
    total += lse - lr[t];
    double inv = 1.0 / s;
    for (std::size_t i = 0; i < v; ++i) (*probs)[r * v + i] = std::exp(lr[i] - mx) * inv;
    ++count;
  }
  Tensor loss = Tensor::scalar(count ? total / static_cast<double>(count) : 0.0);

  if (count > 0 && recording({&logits})) {
    loss.set_requires_grad(true);
    StoragePtr sl = logits.storage(), so = loss.storage();
    auto tgt = std::make_shared<std::vector<int>>(targets);
    Tape::current()->record([sl, so, probs, tgt, rows, v, ignore_index, count]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      double g0 = (*go)[0] / static_cast<double>(count);
      auto& g = acc_grad(sl);
      for (std::size_t r = 0; r < rows; ++r) {
        int t = (*tgt)[r];
        if (t == ignore_index) continue;
        for (std::size_t i = 0; i < v; ++i) g[r * v + i] += g0 * (*probs)[r * v + i];
        g[r * v + static_cast<std::size_t>(t)] -= g0;
      }
    });
  }
  return loss;
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.data()[i];
  Tensor out = Tensor::scalar(s);
  if (recording({&x})) {
    out.set_requires_grad(true);
    StoragePtr sx = x.storage(), so = out.storage();
    Tape::current()->record([sx, so]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      auto& g = acc_grad(sx);
      for (double& v : g) v += (*go)[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor embedding(const Tensor& table, const std::vector<int>& ids) {
  if (table.ndim() != 2) throw ShapeError("embedding table must be [V,D]");
  std::size_t v = table.dim(0), d = table.dim(1);
  Tensor out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    int id = ids[i];
    if (id < 0 || static_cast<std::size_t>(id) >= v) {
      throw DataError("embedding id " + std::to_string(id) + " out of range [0," +
                      std::to_string(v) + ")");
    }
    std::copy_n(table.data() + static_cast<std::size_t>(id) * d, d, out.data() + i * d);
  }
  if (recording({&table})) {
    out.set_requires_grad(true);
    StoragePtr st = table.storage(), so = out.storage();
    auto ids_s = std::make_shared<std::vector<int>>(ids);
    Tape::current()->record([st, so, ids_s, d]() {
      const std::vector<double>* go = out_grad(so);
      if (!go) return;
      auto& g = acc_grad(st);
      for (std::size_t i = 0; i < ids_s->size(); ++i) {
        kernels::active().axpy(d, 1.0, go->data() + i * d,
                               g.data() + static_cast<std::size_t>((*ids_s)[i]) * d);
      }
    });
  }
  return out;
}

}  // namespace capgen
