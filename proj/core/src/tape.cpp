#include "fend/tape.hpp"

#include <cmath>
#include <string>

#include "fend/errors.hpp"

namespace fend::num {

namespace {

double sigmoid_stable(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// y[0..n) += a * x[0..n)
inline void axpy(double a, const double* x, double* y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

constexpr double kLayerNormEps = 1e-5;

}  // namespace

Tape::Id Tape::push(Node n, const char* opname) {
  if (!n.val.all_finite()) {
    throw NumericError(std::string("non-finite result in op ") + opname);
  }
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

void Tape::check(Id id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
    throw ContractError("tape id out of range: " + std::to_string(id));
  }
}

Tape::Id Tape::param(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.scalar = 1.0;  // marks "requires grad"
  n.val = std::move(t);
  return push(std::move(n), "param");
}

Tape::Id Tape::constant(Tensor t) {
  Node n;
  n.op = Op::kLeaf;
  n.val = std::move(t);
  return push(std::move(n), "constant");
}

Tape::Id Tape::add(Id a, Id b) {
  check(a); check(b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  if (!x.same_shape(y)) {
    throw DimensionError("add: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  }
  Node n;
  n.op = Op::kAdd; n.a = a; n.b = b;
  n.val = x;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] += y[i];
  return push(std::move(n), "add");
}

Tape::Id Tape::sub(Id a, Id b) {
  check(a); check(b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  if (!x.same_shape(y)) {
    throw DimensionError("sub: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  }
  Node n;
  n.op = Op::kSub; n.a = a; n.b = b;
  n.val = x;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] -= y[i];
  return push(std::move(n), "sub");
}

Tape::Id Tape::mul(Id a, Id b) {
  check(a); check(b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  if (!x.same_shape(y)) {
    throw DimensionError("mul: shape mismatch " + x.shape_str() + " vs " + y.shape_str());
  }
  Node n;
  n.op = Op::kMul; n.a = a; n.b = b;
  n.val = x;
  for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] *= y[i];
  return push(std::move(n), "mul");
}

Tape::Id Tape::scale(Id a, double c) {
  check(a);
  Node n;
  n.op = Op::kScale; n.a = a; n.scalar = c;
  n.val = nodes_[a].val;
  for (auto& v : n.val.vec()) v *= c;
  return push(std::move(n), "scale");
}

Tape::Id Tape::add_const(Id a, double c) {
  check(a);
  Node n;
  n.op = Op::kAddConst; n.a = a; n.scalar = c;
  n.val = nodes_[a].val;
  for (auto& v : n.val.vec()) v += c;
  return push(std::move(n), "add_const");
}

Tape::Id Tape::tanh(Id a) {
  check(a);
  Node n;
  n.op = Op::kTanh; n.a = a;
  n.val = nodes_[a].val;
  for (auto& v : n.val.vec()) v = std::tanh(v);
  return push(std::move(n), "tanh");
}

Tape::Id Tape::sigmoid(Id a) {
  check(a);
  Node n;
  n.op = Op::kSigmoid; n.a = a;
  n.val = nodes_[a].val;
  for (auto& v : n.val.vec()) v = sigmoid_stable(v);
  return push(std::move(n), "sigmoid");
}

Tape::Id Tape::sqrt(Id a) {
  check(a);
  Node n;
  n.op = Op::kSqrt; n.a = a;
  n.val = nodes_[a].val;
  for (auto& v : n.val.vec()) v = std::sqrt(v);
  return push(std::move(n), "sqrt");
}

Tape::Id Tape::matmul(Id a, Id b) {
  check(a); check(b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + x.shape_str() + " * " + y.shape_str());
  }
  const std::size_t m = x.dim(0), k = x.dim(1), w = y.dim(1);
  Node n;
  n.op = Op::kMatmul; n.a = a; n.b = b;
  n.val = Tensor({m, w});
  for (std::size_t i = 0; i < m; ++i) {
    double* out = n.val.data() + i * w;
    const double* xi = x.data() + i * k;
    for (std::size_t l = 0; l < k; ++l) {
      axpy(xi[l], y.data() + l * w, out, w);
    }
  }
  return push(std::move(n), "matmul");
}

Tape::Id Tape::matmul_nt(Id a, Id b) {
  check(a); check(b);
  const Tensor& x = nodes_[a].val;
  const Tensor& y = nodes_[b].val;
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != y.dim(1)) {
    throw DimensionError("matmul_nt: incompatible shapes " + x.shape_str() + " * " +
                         y.shape_str() + "^T");
  }
  const std::size_t r = x.dim(0), d = x.dim(1), s = y.dim(0);
  Node n;
  n.op = Op::kMatmulNT; n.a = a; n.b = b;
  n.val = Tensor({r, s});
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = x.data() + i * d;
    double* out = n.val.data() + i * s;
    for (std::size_t j = 0; j < s; ++j) {
      out[j] = dot(xi, y.data() + j * d, d);
    }
  }
  return push(std::move(n), "matmul_nt");
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  check(x); check(w);
  const Tensor& xv = nodes_[x].val;
  const Tensor& wv = nodes_[w].val;
  if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1)) {
    throw DimensionError("linear: incompatible shapes x=" + xv.shape_str() +
                         " w=" + wv.shape_str());
  }
  const std::size_t r = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  const Tensor* bv = nullptr;
  if (b != kNone) {
    check(b);
    bv = &nodes_[b].val;
    if (bv->rank() != 1 || bv->dim(0) != out) {
      throw DimensionError("linear: bias shape " + bv->shape_str());
    }
  }
  Node n;
  n.op = Op::kLinear; n.a = x; n.b = w; n.c = b;
  n.val = Tensor({r, out});
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.data() + i * in;
    double* yi = n.val.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) {
      yi[o] = dot(xi, wv.data() + o * in, in) + (bv ? (*bv)[o] : 0.0);
    }
  }
  return push(std::move(n), "linear");
}

Tape::Id Tape::row_sum(Id x) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  if (xv.rank() != 2) throw DimensionError("row_sum: want rank 2, got " + xv.shape_str());
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Node n;
  n.op = Op::kRowSum; n.a = x;
  n.val = Tensor({r});
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    const double* xi = xv.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) acc += xi[j];
    n.val[i] = acc;
  }
  return push(std::move(n), "row_sum");
}

Tape::Id Tape::lse_rows(Id x) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  if (xv.rank() != 2) throw DimensionError("lse_rows: want rank 2, got " + xv.shape_str());
  const std::size_t r = xv.dim(0), c = xv.dim(1);
  Node n;
  n.op = Op::kLseRows; n.a = x;
  n.val = Tensor({r});
  for (std::size_t i = 0; i < r; ++i) {
    const double* xi = xv.data() + i * c;
    double m = xi[0];
    for (std::size_t j = 1; j < c; ++j) m = std::max(m, xi[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(xi[j] - m);
    n.val[i] = m + std::log(s);
  }
  return push(std::move(n), "lse_rows");
}

Tape::Id Tape::weighted_sum(Id x, Tensor w) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  if (!xv.same_shape(w)) {
    throw DimensionError("weighted_sum: weight shape " + w.shape_str() + " vs " +
                         xv.shape_str());
  }
  Node n;
  n.op = Op::kWeightedSum; n.a = x;
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * xv[i];
  n.val = Tensor::scalar(acc);
  n.aux = std::move(w);
  return push(std::move(n), "weighted_sum");
}

Tape::Id Tape::sum(Id x) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  Node n;
  n.op = Op::kSum; n.a = x;
  n.scalar = 1.0;
  double acc = 0.0;
  for (double v : xv.vec()) acc += v;
  n.val = Tensor::scalar(acc);
  return push(std::move(n), "sum");
}

Tape::Id Tape::mean(Id x) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  if (xv.size() == 0) throw DimensionError("mean of empty tensor");
  Node n;
  n.op = Op::kSum; n.a = x;
  n.scalar = 1.0 / static_cast<double>(xv.size());
  double acc = 0.0;
  for (double v : xv.vec()) acc += v;
  n.val = Tensor::scalar(acc * n.scalar);
  return push(std::move(n), "mean");
}

Tape::Id Tape::layer_norm(Id x) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  std::size_t r = 1, c = 0;
  if (xv.rank() == 1) {
    c = xv.dim(0);
  } else if (xv.rank() == 2) {
    r = xv.dim(0);
    c = xv.dim(1);
  } else {
    throw DimensionError("layer_norm: want rank 1 or 2, got " + xv.shape_str());
  }
  if (c < 2) throw DimensionError("layer_norm: need at least 2 elements per row");
  Node n;
  n.op = Op::kLayerNorm; n.a = x;
  n.val = xv;
  n.aux = Tensor({r});  // 1/std per row
  for (std::size_t i = 0; i < r; ++i) {
    double* row = n.val.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t j = 0; j < c; ++j) row[j] = (row[j] - mu) * inv_std;
    n.aux[i] = inv_std;
  }
  return push(std::move(n), "layer_norm");
}

Tape::Id Tape::div_rows(Id x, Id d) {
  check(x); check(d);
  const Tensor& xv = nodes_[x].val;
  const Tensor& dv = nodes_[d].val;
  std::size_t r = 1, c = 0;
  if (xv.rank() == 1) {
    c = xv.dim(0);
  } else if (xv.rank() == 2) {
    r = xv.dim(0);
    c = xv.dim(1);
  } else {
    throw DimensionError("div_rows: want rank 1 or 2, got " + xv.shape_str());
  }
  if (dv.rank() != 1 || dv.dim(0) != r) {
    throw DimensionError("div_rows: divisor shape " + dv.shape_str() + " for x " +
                         xv.shape_str());
  }
  Node n;
  n.op = Op::kDivRows; n.a = x; n.b = d;
  n.val = xv;
  for (std::size_t i = 0; i < r; ++i) {
    const double inv = 1.0 / dv[i];
    double* row = n.val.data() + i * c;
    for (std::size_t j = 0; j < c; ++j) row[j] *= inv;
  }
  return push(std::move(n), "div_rows");
}

Tape::Id Tape::conv1d_same(Id x, Id w, Id b) {
  check(x); check(w);
  const Tensor& xv = nodes_[x].val;
  const Tensor& wv = nodes_[w].val;
  if (xv.rank() != 3 || wv.rank() != 3 || xv.dim(2) != wv.dim(1) || wv.dim(2) % 2 == 0) {
    throw DimensionError("conv1d_same: shapes x=" + xv.shape_str() + " w=" + wv.shape_str());
  }
  const std::size_t r = xv.dim(0), tlen = xv.dim(1), cin = xv.dim(2);
  const std::size_t cout = wv.dim(0), k = wv.dim(2), pad = k / 2;
  const Tensor* bv = nullptr;
  if (b != kNone) {
    check(b);
    bv = &nodes_[b].val;
    if (bv->rank() != 1 || bv->dim(0) != cout) {
      throw DimensionError("conv1d_same: bias shape " + bv->shape_str());
    }
  }
  Node n;
  n.op = Op::kConv1d; n.a = x; n.b = w; n.c = b;
  n.val = Tensor({r, tlen, cout});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t t = 0; t < tlen; ++t) {
      for (std::size_t o = 0; o < cout; ++o) {
        double acc = bv ? (*bv)[o] : 0.0;
        for (std::size_t dk = 0; dk < k; ++dk) {
          const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + dk) -
                                     static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(tlen)) continue;
          for (std::size_t ci = 0; ci < cin; ++ci) {
            acc += xv.at3(i, static_cast<std::size_t>(src), ci) * wv.at3(o, ci, dk);
          }
        }
        n.val.at3(i, t, o) = acc;
      }
    }
  }
  return push(std::move(n), "conv1d_same");
}

Tape::Id Tape::time_slice(Id x, std::size_t t) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  if (xv.rank() != 3 || t >= xv.dim(1)) {
    throw DimensionError("time_slice: t=" + std::to_string(t) + " on " + xv.shape_str());
  }
  const std::size_t r = xv.dim(0), c = xv.dim(2);
  Node n;
  n.op = Op::kTimeSlice; n.a = x; n.lo = t;
  n.val = Tensor({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) n.val.at2(i, j) = xv.at3(i, t, j);
  }
  return push(std::move(n), "time_slice");
}

Tape::Id Tape::col_slice(Id x, std::size_t lo, std::size_t hi) {
  check(x);
  const Tensor& xv = nodes_[x].val;
  if (xv.rank() != 2 || lo >= hi || hi > xv.dim(1)) {
    throw DimensionError("col_slice: [" + std::to_string(lo) + "," + std::to_string(hi) +
                         ") on " + xv.shape_str());
  }
  const std::size_t r = xv.dim(0), c = xv.dim(1), w = hi - lo;
  Node n;
  n.op = Op::kColSlice; n.a = x; n.lo = lo; n.hi = hi;
  n.val = Tensor({r, w});
  for (std::size_t i = 0; i < r; ++i) {
    const double* src = xv.data() + i * c + lo;
    double* dst = n.val.data() + i * w;
    for (std::size_t j = 0; j < w; ++j) dst[j] = src[j];
  }
  return push(std::move(n), "col_slice");
}

void Tape::backward(Id loss) {
  check(loss);
  if (ran_backward_) throw ContractError("backward() called twice on one tape");
  ran_backward_ = true;
  if (nodes_[loss].val.size() != 1) {
    throw ContractError("backward: loss must be scalar, got " + nodes_[loss].val.shape_str());
  }
  grads_.clear();
  grads_.reserve(nodes_.size());
  for (const Node& n : nodes_) grads_.emplace_back(Tensor::zeros(n.val.shape()));
  grads_[loss][0] = 1.0;

  for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
    const Node& n = nodes_[id];
    const Tensor& g = grads_[id];
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd: {
        Tensor& ga = grads_[n.a];
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::kSub: {
        Tensor& ga = grads_[n.a];
        Tensor& gb = grads_[n.b];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::kMul: {
        Tensor& ga = grads_[n.a];
        Tensor& gb = grads_[n.b];
        const Tensor& av = nodes_[n.a].val;
        const Tensor& bv = nodes_[n.b].val;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * bv[i];
          gb[i] += g[i] * av[i];
        }
        break;
      }
      case Op::kScale: {
        Tensor& ga = grads_[n.a];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.scalar;
        break;
      }
      case Op::kAddConst: {
        Tensor& ga = grads_[n.a];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::kTanh: {
        Tensor& ga = grads_[n.a];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
        }
        break;
      }
      case Op::kSigmoid: {
        Tensor& ga = grads_[n.a];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
        }
        break;
      }
      case Op::kSqrt: {
        Tensor& ga = grads_[n.a];
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i] * 0.5 / n.val[i];
        }
        break;
      }
      case Op::kMatmul: {
        // Y = A B.  dA += G B^T; dB += A^T G.
        const Tensor& av = nodes_[n.a].val;
        const Tensor& bv = nodes_[n.b].val;
        Tensor& ga = grads_[n.a];
        Tensor& gb = grads_[n.b];
        const std::size_t m = av.dim(0), k = av.dim(1), w = bv.dim(1);
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g.data() + i * w;
          for (std::size_t l = 0; l < k; ++l) {
            ga.data()[i * k + l] += dot(gi, bv.data() + l * w, w);
          }
        }
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g.data() + i * w;
          const double* ai = av.data() + i * k;
          for (std::size_t l = 0; l < k; ++l) {
            axpy(ai[l], gi, gb.data() + l * w, w);
          }
        }
        break;
      }
      case Op::kMatmulNT: {
        // Y = A B^T.  dA += G B; dB += G^T A.
        const Tensor& av = nodes_[n.a].val;
        const Tensor& bv = nodes_[n.b].val;
        Tensor& ga = grads_[n.a];
        Tensor& gb = grads_[n.b];
        const std::size_t r = av.dim(0), d = av.dim(1), s = bv.dim(0);
        for (std::size_t i = 0; i < r; ++i) {
          const double* gi = g.data() + i * s;
          double* gai = ga.data() + i * d;
          const double* ai = av.data() + i * d;
          for (std::size_t j = 0; j < s; ++j) {
            axpy(gi[j], bv.data() + j * d, gai, d);
            axpy(gi[j], ai, gb.data() + j * d, d);
          }
        }
        break;
      }
      case Op::kLinear: {
        // Y = X W^T + b.  dX += G W; dW += G^T X; db += colsum(G).
        const Tensor& xv = nodes_[n.a].val;
        const Tensor& wv = nodes_[n.b].val;
        Tensor& gx = grads_[n.a];
        Tensor& gw = grads_[n.b];
        const std::size_t r = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
        for (std::size_t i = 0; i < r; ++i) {
          const double* gi = g.data() + i * out;
          double* gxi = gx.data() + i * in;
          const double* xi = xv.data() + i * in;
          for (std::size_t o = 0; o < out; ++o) {
            axpy(gi[o], wv.data() + o * in, gxi, in);
            axpy(gi[o], xi, gw.data() + o * in, in);
          }
        }
        if (n.c != kNone) {
          Tensor& gb = grads_[n.c];
          for (std::size_t i = 0; i < r; ++i) {
            const double* gi = g.data() + i * out;
            for (std::size_t o = 0; o < out; ++o) gb[o] += gi[o];
          }
        }
        break;
      }
      case Op::kRowSum: {
        Tensor& ga = grads_[n.a];
        const std::size_t r = nodes_[n.a].val.dim(0), c = nodes_[n.a].val.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
          double* gai = ga.data() + i * c;
          for (std::size_t j = 0; j < c; ++j) gai[j] += g[i];
        }
        break;
      }
      case Op::kLseRows: {
        const Tensor& xv = nodes_[n.a].val;
        Tensor& ga = grads_[n.a];
        const std::size_t r = xv.dim(0), c = xv.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
          const double* xi = xv.data() + i * c;
          double* gai = ga.data() + i * c;
          const double li = n.val[i];
          for (std::size_t j = 0; j < c; ++j) {
            gai[j] += g[i] * std::exp(xi[j] - li);
          }
        }
        break;
      }
      case Op::kWeightedSum: {
        Tensor& ga = grads_[n.a];
        const double gs = g[0];
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs * n.aux[i];
        break;
      }
      case Op::kSum: {
        Tensor& ga = grads_[n.a];
        const double gs = g[0] * n.scalar;
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gs;
        break;
      }
      case Op::kLayerNorm: {
        // y = (x - mu) * inv_std;  dx = inv_std * (g - mean(g) - y * mean(g*y))
        Tensor& ga = grads_[n.a];
        const std::size_t r = n.aux.dim(0);
        const std::size_t c = n.val.size() / r;
        for (std::size_t i = 0; i < r; ++i) {
          const double* yi = n.val.data() + i * c;
          const double* gi = g.data() + i * c;
          double* gai = ga.data() + i * c;
          double gmean = 0.0, gymean = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            gmean += gi[j];
            gymean += gi[j] * yi[j];
          }
          gmean /= static_cast<double>(c);
          gymean /= static_cast<double>(c);
          const double inv_std = n.aux[i];
          for (std::size_t j = 0; j < c; ++j) {
            gai[j] += inv_std * (gi[j] - gmean - yi[j] * gymean);
          }
        }
        break;
      }
      case Op::kDivRows: {
        const Tensor& dv = nodes_[n.b].val;
        Tensor& gx = grads_[n.a];
        Tensor& gd = grads_[n.b];
        const std::size_t r = dv.dim(0);
        const std::size_t c = n.val.size() / r;
        for (std::size_t i = 0; i < r; ++i) {
          const double inv = 1.0 / dv[i];
          const double* gi = g.data() + i * c;
          const double* yi = n.val.data() + i * c;
          double* gxi = gx.data() + i * c;
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            gxi[j] += gi[j] * inv;
            acc += gi[j] * yi[j];
          }
          gd[i] -= acc * inv;
        }
        break;
      }
      case Op::kConv1d: {
        const Tensor& xv = nodes_[n.a].val;
        const Tensor& wv = nodes_[n.b].val;
        Tensor& gx = grads_[n.a];
        Tensor& gw = grads_[n.b];
        const std::size_t r = xv.dim(0), tlen = xv.dim(1), cin = xv.dim(2);
        const std::size_t cout = wv.dim(0), k = wv.dim(2), pad = k / 2;
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t t = 0; t < tlen; ++t) {
            for (std::size_t o = 0; o < cout; ++o) {
              const double go = g.data()[(i * tlen + t) * cout + o];
              if (go == 0.0) continue;
              for (std::size_t dk = 0; dk < k; ++dk) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + dk) -
                                           static_cast<std::ptrdiff_t>(pad);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(tlen)) continue;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                  gx.at3(i, static_cast<std::size_t>(src), ci) += go * wv.at3(o, ci, dk);
                  gw.at3(o, ci, dk) += go * xv.at3(i, static_cast<std::size_t>(src), ci);
                }
              }
            }
          }
        }
        if (n.c != kNone) {
          Tensor& gb = grads_[n.c];
          for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t t = 0; t < tlen; ++t) {
              for (std::size_t o = 0; o < cout; ++o) {
                gb[o] += g.data()[(i * tlen + t) * cout + o];
              }
            }
          }
        }
        break;
      }
      case Op::kTimeSlice: {
        Tensor& ga = grads_[n.a];
        const std::size_t r = n.val.dim(0), c = n.val.dim(1);
        const std::size_t tlen = nodes_[n.a].val.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) {
            ga.data()[(i * tlen + n.lo) * c + j] += g.at2(i, j);
          }
        }
        break;
      }
      case Op::kColSlice: {
        Tensor& ga = grads_[n.a];
        const std::size_t r = n.val.dim(0), w = n.val.dim(1);
        const std::size_t c = nodes_[n.a].val.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
          const double* gi = g.data() + i * w;
          double* gai = ga.data() + i * c + n.lo;
          for (std::size_t j = 0; j < w; ++j) gai[j] += gi[j];
        }
        break;
      }
    }
  }
}

}  // namespace fend::num
