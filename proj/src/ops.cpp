#include "phonogan/ops.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <stdexcept>
#include <string>

namespace phonogan::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

// Unary op whose derivative is an elementwise coefficient fixed at forward
// time (correct first-order VJP; these ops never sit inside a graph that is
// differentiated twice).
Tensor unary_const_coeff(const Tensor& a, Array value, Array coeff, const char* op) {
  Shape shape = a.shape();
  Tensor coeff_leaf = Tensor::leaf(shape, std::move(coeff));
  return make_node(std::move(value), shape, {a},
                   [coeff_leaf](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{mul(cot, coeff_leaf)};
                   },
                   op);
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

struct ConvDims {
  int ci, t, co, k, t_out, pad_left;
};

ConvDims conv_dims(const Tensor& x, const Tensor& kernels, int stride, const char* op) {
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
  if (x.rank() != 2)
    throw std::invalid_argument(std::string(op) + ": input must be [channels x frames], got " +
                                shape_str(x.shape()));
  if (kernels.rank() != 3)
    throw std::invalid_argument(std::string(op) + ": kernels must be rank 3, got " +
                                shape_str(kernels.shape()));
  ConvDims d;
  d.ci = x.dim(0);
  d.t = x.dim(1);
  d.co = kernels.dim(0);
  d.k = kernels.dim(2);
  if (kernels.dim(1) != d.ci)
    throw std::invalid_argument(std::string(op) + ": kernels " + shape_str(kernels.shape()) +
                                " expect " + std::to_string(kernels.dim(1)) +
                                " input channels but input is " + shape_str(x.shape()));
  d.t_out = ceil_div(d.t, stride);
  int span = (d.t_out - 1) * stride + d.k;
  int pad = std::max(0, span - d.t);
  d.pad_left = pad / 2;
  return d;
}

// Column i*K+kk, frame t' holds x[ci, t'*stride + kk - pad_left] (zero
// outside the signal).
MatrixXd im2col(const double* x, int ci, int t, int k, int stride, int t_out, int pad_left) {
  MatrixXd cols = MatrixXd::Zero(static_cast<long>(ci) * k, t_out);
  for (int col = 0; col < t_out; ++col) {
    int base = col * stride - pad_left;
    for (int c = 0; c < ci; ++c) {
      const double* xc = x + static_cast<long>(c) * t;
      double* out = cols.col(col).data() + static_cast<long>(c) * k;
      for (int kk = 0; kk < k; ++kk) {
        int pos = base + kk;
        if (pos >= 0 && pos < t) out[kk] = xc[pos];
      }
    }
  }
  return cols;
}

// Values computed on the flat arrays; graph wiring happens in the public ops.
Array conv_fwd_value(const Tensor& x, const Tensor& kr, int stride, const ConvDims& d) {
  MatrixXd cols = im2col(x.values().data(), d.ci, d.t, d.k, stride, d.t_out, d.pad_left);
  Array out(static_cast<long>(d.co) * d.t_out);
  Eigen::Map<const RowMat> kmat(kr.values().data(), d.co, static_cast<long>(d.ci) * d.k);
  Eigen::Map<RowMat> ymap(out.data(), d.co, d.t_out);
  ymap.noalias() = kmat * cols;
  return out;
}

Array conv_gx_value(const Tensor& gy, const Tensor& kr, int stride, int t_in, const ConvDims& d) {
  Eigen::Map<const RowMat> kmat(kr.values().data(), d.co, static_cast<long>(d.ci) * d.k);
  Eigen::Map<const RowMat> gmap(gy.values().data(), d.co, d.t_out);
  MatrixXd tmp = kmat.transpose() * gmap;  // (Ci*K) x T'
  Array gx = Array::Zero(static_cast<long>(d.ci) * t_in);
  for (int col = 0; col < d.t_out; ++col) {
    int base = col * stride - d.pad_left;
    for (int c = 0; c < d.ci; ++c) {
      double* dst = gx.data() + static_cast<long>(c) * t_in;
      const double* src = tmp.col(col).data() + static_cast<long>(c) * d.k;
      for (int kk = 0; kk < d.k; ++kk) {
        int pos = base + kk;
        if (pos >= 0 && pos < t_in) dst[pos] += src[kk];
      }
    }
  }
  return gx;
}

Array conv_gk_value(const Tensor& x, const Tensor& gy, int stride, const ConvDims& d) {
  MatrixXd cols = im2col(x.values().data(), d.ci, d.t, d.k, stride, d.t_out, d.pad_left);
  Eigen::Map<const RowMat> gmap(gy.values().data(), d.co, d.t_out);
  Array gk(static_cast<long>(d.co) * d.ci * d.k);
  Eigen::Map<RowMat> gkmap(gk.data(), d.co, static_cast<long>(d.ci) * d.k);
  gkmap.noalias() = gmap * cols.transpose();
  return gk;
}

struct TConvDims {
  int ci, t, co, k, t_out, offset;  // out[tau] = full[tau + offset]
};

TConvDims tconv_dims(const Tensor& x, const Tensor& kernels, int stride, const char* op) {
  if (stride < 1) throw std::invalid_argument(std::string(op) + ": stride must be >= 1");
  if (x.rank() != 2)
    throw std::invalid_argument(std::string(op) + ": input must be [channels x frames], got " +
                                shape_str(x.shape()));
  if (kernels.rank() != 3)
    throw std::invalid_argument(std::string(op) + ": kernels must be rank 3, got " +
                                shape_str(kernels.shape()));
  TConvDims d;
  d.ci = x.dim(0);
  d.t = x.dim(1);
  d.co = kernels.dim(1);
  d.k = kernels.dim(2);
  if (kernels.dim(0) != d.ci)
    throw std::invalid_argument(std::string(op) + ": kernels " + shape_str(kernels.shape()) +
                                " expect " + std::to_string(kernels.dim(0)) +
                                " input channels but input is " + shape_str(x.shape()));
  d.t_out = d.t * stride;
  int delta = d.k - stride;
  d.offset = delta >= 0 ? delta / 2 : -((-delta) / 2);
  return d;
}

void warn_kernel_gap(int k, int stride) {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true))
    std::cerr << "phonogan: conv1d_transpose kernel width " << k << " < stride " << stride
              << "; some output samples are unreachable and stay zero\n";
}

// (Co*K) x T matrix holding gy'[co, t*stride + kk] where gy' is gy embedded
// into full-scatter coordinates (shifted by offset, zero outside).
MatrixXd tconv_cols(const double* gy, const TConvDims& d, int stride) {
  MatrixXd cols = MatrixXd::Zero(static_cast<long>(d.co) * d.k, d.t);
  for (int t = 0; t < d.t; ++t) {
    int base = t * stride;
    for (int c = 0; c < d.co; ++c) {
      const double* gc = gy + static_cast<long>(c) * d.t_out;
      double* out = cols.col(t).data() + static_cast<long>(c) * d.k;
      for (int kk = 0; kk < d.k; ++kk) {
        int tau = base + kk - d.offset;
        if (tau >= 0 && tau < d.t_out) out[kk] = gc[tau];
      }
    }
  }
  return cols;
}

Array tconv_fwd_value(const Tensor& x, const Tensor& kr, int stride, const TConvDims& d) {
  // kmat2[(co*K+kk), ci] = k[ci, co, kk]
  MatrixXd kmat2(static_cast<long>(d.co) * d.k, d.ci);
  const double* kd = kr.values().data();
  for (int ci = 0; ci < d.ci; ++ci)
    for (int co = 0; co < d.co; ++co)
      for (int kk = 0; kk < d.k; ++kk)
        kmat2(static_cast<long>(co) * d.k + kk, ci) = kd[(static_cast<long>(ci) * d.co + co) * d.k + kk];
  Eigen::Map<const RowMat> xmap(x.values().data(), d.ci, d.t);
  MatrixXd m = kmat2 * xmap;  // (Co*K) x T
  Array out = Array::Zero(static_cast<long>(d.co) * d.t_out);
  for (int t = 0; t < d.t; ++t) {
    int base = t * stride;
    for (int co = 0; co < d.co; ++co) {
      double* dst = out.data() + static_cast<long>(co) * d.t_out;
      const double* src = m.col(t).data() + static_cast<long>(co) * d.k;
      for (int kk = 0; kk < d.k; ++kk) {
        int tau = base + kk - d.offset;
        if (tau >= 0 && tau < d.t_out) dst[tau] += src[kk];
      }
    }
  }
  return out;
}

Array tconv_gx_value(const Tensor& gy, const Tensor& kr, int stride, int t_in, TConvDims d) {
  d.t = t_in;
  d.t_out = t_in * stride;
  MatrixXd cols = tconv_cols(gy.values().data(), d, stride);
  Eigen::Map<const RowMat> kmat(kr.values().data(), d.ci, static_cast<long>(d.co) * d.k);
  Array gx(static_cast<long>(d.ci) * t_in);
  Eigen::Map<RowMat> gmap(gx.data(), d.ci, t_in);
  gmap.noalias() = kmat * cols;
  return gx;
}

Array tconv_gk_value(const Tensor& x, const Tensor& gy, int stride, TConvDims d) {
  MatrixXd cols = tconv_cols(gy.values().data(), d, stride);
  Eigen::Map<const RowMat> xmap(x.values().data(), d.ci, d.t);
  Array gk(static_cast<long>(d.ci) * d.co * d.k);
  Eigen::Map<RowMat> gkmap(gk.data(), d.ci, static_cast<long>(d.co) * d.k);
  gkmap.noalias() = xmap * cols.transpose();
  return gk;
}

int reflect_index(int j, int t) {
  while (j < 0 || j >= t) {
    if (j < 0) j = -1 - j;
    if (j >= t) j = 2 * t - 1 - j;
  }
  return j;
}

Array shift_value(const Array& x, int c, int t, int shift) {
  Array out(x.size());
  for (int ch = 0; ch < c; ++ch) {
    const double* src = x.data() + static_cast<long>(ch) * t;
    double* dst = out.data() + static_cast<long>(ch) * t;
    for (int i = 0; i < t; ++i) dst[i] = src[reflect_index(i - shift, t)];
  }
  return out;
}

Array shift_adjoint_value(const Array& g, int c, int t, int shift) {
  Array out = Array::Zero(g.size());
  for (int ch = 0; ch < c; ++ch) {
    const double* src = g.data() + static_cast<long>(ch) * t;
    double* dst = out.data() + static_cast<long>(ch) * t;
    for (int i = 0; i < t; ++i) dst[reflect_index(i - shift, t)] += src[i];
  }
  return out;
}

Tensor time_shift_adjoint(const Tensor& g, int shift);

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  return make_node(a.values() + b.values(), a.shape(), {a, b},
                   [](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{cot, cot};
                   },
                   "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  return make_node(a.values() - b.values(), a.shape(), {a, b},
                   [](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = cot;
                     if (need[1]) g[1] = neg(cot);
                     return g;
                   },
                   "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  return make_node(a.values() * b.values(), a.shape(), {a, b},
                   [a, b](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = mul(cot, b);
                     if (need[1]) g[1] = mul(cot, a);
                     return g;
                   },
                   "mul");
}

Tensor scale(const Tensor& a, double c) {
  return make_node(a.values() * c, a.shape(), {a},
                   [c](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{scale(cot, c)};
                   },
                   "scale");
}

Tensor add_scalar(const Tensor& a, double c) {
  return make_node(a.values() + c, a.shape(), {a},
                   [](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{cot};
                   },
                   "add_scalar");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor square(const Tensor& a) {
  return make_node(a.values().square(), a.shape(), {a},
                   [a](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{scale(mul(cot, a), 2.0)};
                   },
                   "square");
}

Tensor sqrt_(const Tensor& a) {
  Array v = a.values().sqrt();
  return unary_const_coeff(a, v, 0.5 / v.max(1e-300), "sqrt");
}

Tensor exp_(const Tensor& a) {
  Array v = a.values().exp();
  Array coeff = v;
  return unary_const_coeff(a, std::move(v), std::move(coeff), "exp");
}

Tensor log_(const Tensor& a) {
  return unary_const_coeff(a, a.values().log(), a.values().inverse(), "log");
}

Tensor relu(const Tensor& a) {
  Array mask = (a.values() > 0.0).cast<double>();
  return make_node(a.values().max(0.0), a.shape(), {a},
                   [mask_leaf = Tensor::leaf(a.shape(), mask)](const Tensor& cot,
                                                               const std::vector<char>&) {
                     return std::vector<Tensor>{mul(cot, mask_leaf)};
                   },
                   "relu");
}

Tensor leaky_relu(const Tensor& a, double slope) {
  Array mask = (a.values() > 0.0).select(Array::Constant(a.numel(), 1.0),
                                         Array::Constant(a.numel(), slope));
  Array v = a.values() * mask;
  return make_node(std::move(v), a.shape(), {a},
                   [mask_leaf = Tensor::leaf(a.shape(), mask)](const Tensor& cot,
                                                               const std::vector<char>&) {
                     return std::vector<Tensor>{mul(cot, mask_leaf)};
                   },
                   "leaky_relu");
}

Tensor tanh_(const Tensor& a) {
  Array v = a.values().tanh();
  Array coeff = 1.0 - v.square();
  return unary_const_coeff(a, std::move(v), std::move(coeff), "tanh");
}

Tensor nonlinearity(const Tensor& a, Nonlin kind) {
  switch (kind) {
    case Nonlin::relu: return relu(a);
    case Nonlin::leaky_relu: return leaky_relu(a, 0.2);
    case Nonlin::tanh: return tanh_(a);
  }
  throw std::invalid_argument("nonlinearity: unknown kind");
}

Tensor sum(const Tensor& a) {
  Array v(1);
  v[0] = a.values().sum();
  Shape in_shape = a.shape();
  return make_node(std::move(v), {1}, {a},
                   [in_shape](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{broadcast_fill(cot, in_shape)};
                   },
                   "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor broadcast_fill(const Tensor& s, Shape shape) {
  if (s.numel() != 1) throw std::invalid_argument("broadcast_fill: source must be scalar");
  long n = numel(shape);
  return make_node(Array::Constant(n, s.value_at(0)), shape, {s},
                   [](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{sum(cot)};
                   },
                   "broadcast_fill");
}

Tensor rowsum(const Tensor& x) {
  if (x.rank() != 2) throw std::invalid_argument("rowsum: expected rank 2, got " + shape_str(x.shape()));
  int c = x.dim(0), t = x.dim(1);
  Array v(c);
  for (int i = 0; i < c; ++i)
    v[i] = x.values().segment(static_cast<long>(i) * t, t).sum();
  return make_node(std::move(v), {c}, {x},
                   [t](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{broadcast_col(cot, t)};
                   },
                   "rowsum");
}

Tensor broadcast_col(const Tensor& b, int cols) {
  if (b.rank() != 1) throw std::invalid_argument("broadcast_col: expected rank 1, got " + shape_str(b.shape()));
  int c = b.dim(0);
  Array v(static_cast<long>(c) * cols);
  for (int i = 0; i < c; ++i)
    v.segment(static_cast<long>(i) * cols, cols).setConstant(b.value_at(i));
  return make_node(std::move(v), {c, cols}, {b},
                   [](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{rowsum(cot)};
                   },
                   "broadcast_col");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel())
    throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Shape in_shape = a.shape();
  return make_node(a.values(), std::move(shape), {a},
                   [in_shape](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{reshape(cot, in_shape)};
                   },
                   "reshape");
}

Tensor pick(const Tensor& x, long i) {
  if (x.rank() != 1) throw std::invalid_argument("pick: expected rank 1, got " + shape_str(x.shape()));
  long n = x.numel();
  if (i < 0 || i >= n) throw std::invalid_argument("pick: index out of range");
  Array v(1);
  v[0] = x.value_at(i);
  return make_node(std::move(v), {1}, {x},
                   [n, i](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{scatter1(cot, n, i)};
                   },
                   "pick");
}

Tensor scatter1(const Tensor& s, long n, long i) {
  if (s.numel() != 1) throw std::invalid_argument("scatter1: source must be scalar");
  if (i < 0 || i >= n) throw std::invalid_argument("scatter1: index out of range");
  Array v = Array::Zero(n);
  v[i] = s.value_at(0);
  return make_node(std::move(v), {static_cast<int>(n)}, {s},
                   [i](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{pick(cot, i)};
                   },
                   "scatter1");
}

Tensor matvec(const Tensor& w, const Tensor& x) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0))
    throw std::invalid_argument("matvec: weight " + shape_str(w.shape()) +
                                " incompatible with input " + shape_str(x.shape()));
  int m = w.dim(0), n = w.dim(1);
  Array v(m);
  Eigen::Map<const RowMat> wm(w.values().data(), m, n);
  Eigen::Map<const VectorXd> xv(x.values().data(), n);
  Eigen::Map<VectorXd>(v.data(), m).noalias() = wm * xv;
  return make_node(std::move(v), {m}, {w, x},
                   [w, x](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = outer(cot, x);
                     if (need[1]) g[1] = matvec_t(w, cot);
                     return g;
                   },
                   "matvec");
}

Tensor matvec_t(const Tensor& w, const Tensor& y) {
  if (w.rank() != 2 || y.rank() != 1 || w.dim(0) != y.dim(0))
    throw std::invalid_argument("matvec_t: weight " + shape_str(w.shape()) +
                                " incompatible with input " + shape_str(y.shape()));
  int m = w.dim(0), n = w.dim(1);
  Array v(n);
  Eigen::Map<const RowMat> wm(w.values().data(), m, n);
  Eigen::Map<const VectorXd> yv(y.values().data(), m);
  Eigen::Map<VectorXd>(v.data(), n).noalias() = wm.transpose() * yv;
  return make_node(std::move(v), {n}, {w, y},
                   [w, y](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = outer(y, cot);
                     if (need[1]) g[1] = matvec(w, cot);
                     return g;
                   },
                   "matvec_t");
}

Tensor outer(const Tensor& u, const Tensor& v) {
  if (u.rank() != 1 || v.rank() != 1)
    throw std::invalid_argument("outer: expected two vectors, got " + shape_str(u.shape()) +
                                " and " + shape_str(v.shape()));
  int m = u.dim(0), n = v.dim(0);
  Array out(static_cast<long>(m) * n);
  Eigen::Map<const VectorXd> uv(u.values().data(), m);
  Eigen::Map<const VectorXd> vv(v.values().data(), n);
  Eigen::Map<RowMat>(out.data(), m, n).noalias() = uv * vv.transpose();
  return make_node(std::move(out), {m, n}, {u, v},
                   [u, v](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = matvec(cot, v);
                     if (need[1]) g[1] = matvec_t(cot, u);
                     return g;
                   },
                   "outer");
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2 || x.rank() != 1 || w.dim(1) != x.dim(0))
    throw std::invalid_argument("dense: weight " + shape_str(w.shape()) +
                                " incompatible with input " + shape_str(x.shape()));
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw std::invalid_argument("dense: bias " + shape_str(b.shape()) +
                                " incompatible with weight " + shape_str(w.shape()));
  return add(matvec(w, x), b);
}

Tensor conv1d(const Tensor& x, const Tensor& kernels, int stride) {
  ConvDims d = conv_dims(x, kernels, stride, "conv1d");
  Array v = conv_fwd_value(x, kernels, stride, d);
  return make_node(std::move(v), {d.co, d.t_out}, {x, kernels},
                   [x, kernels, stride, t = d.t, k = d.k](const Tensor& cot,
                                                          const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = conv1d_grad_input(cot, kernels, stride, t);
                     if (need[1]) g[1] = conv1d_grad_kernel(x, cot, stride, k);
                     return g;
                   },
                   "conv1d");
}

Tensor conv1d_grad_input(const Tensor& gy, const Tensor& kernels, int stride, int t_in) {
  if (gy.rank() != 2 || kernels.rank() != 3 || gy.dim(0) != kernels.dim(0))
    throw std::invalid_argument("conv1d_grad_input: cotangent " + shape_str(gy.shape()) +
                                " incompatible with kernels " + shape_str(kernels.shape()));
  ConvDims d;
  d.co = kernels.dim(0);
  d.ci = kernels.dim(1);
  d.k = kernels.dim(2);
  d.t = t_in;
  d.t_out = gy.dim(1);
  if (d.t_out != ceil_div(t_in, stride))
    throw std::invalid_argument("conv1d_grad_input: cotangent frames do not match t_in");
  int span = (d.t_out - 1) * stride + d.k;
  d.pad_left = std::max(0, span - d.t) / 2;
  Array v = conv_gx_value(gy, kernels, stride, t_in, d);
  return make_node(std::move(v), {d.ci, t_in}, {gy, kernels},
                   [gy, kernels, stride, k = d.k](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = conv1d(cot, kernels, stride);
                     if (need[1]) g[1] = conv1d_grad_kernel(cot, gy, stride, k);
                     return g;
                   },
                   "conv1d_grad_input");
}

Tensor conv1d_grad_kernel(const Tensor& x, const Tensor& gy, int stride, int k_width) {
  if (x.rank() != 2 || gy.rank() != 2)
    throw std::invalid_argument("conv1d_grad_kernel: expected rank-2 operands");
  ConvDims d;
  d.ci = x.dim(0);
  d.t = x.dim(1);
  d.co = gy.dim(0);
  d.k = k_width;
  d.t_out = gy.dim(1);
  if (d.t_out != ceil_div(d.t, stride))
    throw std::invalid_argument("conv1d_grad_kernel: cotangent frames do not match input");
  int span = (d.t_out - 1) * stride + d.k;
  d.pad_left = std::max(0, span - d.t) / 2;
  Array v = conv_gk_value(x, gy, stride, d);
  return make_node(std::move(v), {d.co, d.ci, d.k}, {x, gy},
                   [x, gy, stride, t = d.t](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = conv1d_grad_input(gy, cot, stride, t);
                     if (need[1]) g[1] = conv1d(x, cot, stride);
                     return g;
                   },
                   "conv1d_grad_kernel");
}

Tensor conv1d_transpose(const Tensor& x, const Tensor& kernels, int stride) {
  TConvDims d = tconv_dims(x, kernels, stride, "conv1d_transpose");
  if (d.k < stride) warn_kernel_gap(d.k, stride);
  Array v = tconv_fwd_value(x, kernels, stride, d);
  return make_node(std::move(v), {d.co, d.t_out}, {x, kernels},
                   [x, kernels, stride, t = d.t, k = d.k](const Tensor& cot,
                                                          const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = conv1d_transpose_grad_input(cot, kernels, stride, t);
                     if (need[1]) g[1] = conv1d_transpose_grad_kernel(x, cot, stride, k);
                     return g;
                   },
                   "conv1d_transpose");
}

Tensor conv1d_transpose_grad_input(const Tensor& gy, const Tensor& kernels, int stride, int t_in) {
  if (gy.rank() != 2 || kernels.rank() != 3 || gy.dim(0) != kernels.dim(1))
    throw std::invalid_argument("conv1d_transpose_grad_input: cotangent " + shape_str(gy.shape()) +
                                " incompatible with kernels " + shape_str(kernels.shape()));
  if (gy.dim(1) != t_in * stride)
    throw std::invalid_argument("conv1d_transpose_grad_input: cotangent frames do not match t_in");
  TConvDims d;
  d.ci = kernels.dim(0);
  d.co = kernels.dim(1);
  d.k = kernels.dim(2);
  d.t = t_in;
  d.t_out = t_in * stride;
  int delta = d.k - stride;
  d.offset = delta >= 0 ? delta / 2 : -((-delta) / 2);
  Array v = tconv_gx_value(gy, kernels, stride, t_in, d);
  return make_node(std::move(v), {d.ci, t_in}, {gy, kernels},
                   [gy, kernels, stride, k = d.k](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = conv1d_transpose(cot, kernels, stride);
                     if (need[1]) g[1] = conv1d_transpose_grad_kernel(cot, gy, stride, k);
                     return g;
                   },
                   "conv1d_transpose_grad_input");
}

Tensor conv1d_transpose_grad_kernel(const Tensor& x, const Tensor& gy, int stride, int k_width) {
  if (x.rank() != 2 || gy.rank() != 2)
    throw std::invalid_argument("conv1d_transpose_grad_kernel: expected rank-2 operands");
  TConvDims d;
  d.ci = x.dim(0);
  d.t = x.dim(1);
  d.co = gy.dim(0);
  d.k = k_width;
  d.t_out = gy.dim(1);
  if (d.t_out != d.t * stride)
    throw std::invalid_argument("conv1d_transpose_grad_kernel: cotangent frames do not match input");
  int delta = d.k - stride;
  d.offset = delta >= 0 ? delta / 2 : -((-delta) / 2);
  Array v = tconv_gk_value(x, gy, stride, d);
  return make_node(std::move(v), {d.ci, d.co, d.k}, {x, gy},
                   [x, gy, stride, t = d.t](const Tensor& cot, const std::vector<char>& need) {
                     std::vector<Tensor> g(2);
                     if (need[0]) g[0] = conv1d_transpose_grad_input(gy, cot, stride, t);
                     if (need[1]) g[1] = conv1d_transpose(x, cot, stride);
                     return g;
                   },
                   "conv1d_transpose_grad_kernel");
}

namespace {

Tensor time_shift_adjoint(const Tensor& g, int shift) {
  int c = g.dim(0), t = g.dim(1);
  return make_node(shift_adjoint_value(g.values(), c, t, shift), g.shape(), {g},
                   [shift](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{time_shift_reflect(cot, shift)};
                   },
                   "time_shift_adjoint");
}

}  // namespace

Tensor time_shift_reflect(const Tensor& x, int shift) {
  if (x.rank() != 2)
    throw std::invalid_argument("time_shift_reflect: expected [C x T], got " + shape_str(x.shape()));
  int c = x.dim(0), t = x.dim(1);
  return make_node(shift_value(x.values(), c, t, shift), x.shape(), {x},
                   [shift](const Tensor& cot, const std::vector<char>&) {
                     return std::vector<Tensor>{time_shift_adjoint(cot, shift)};
                   },
                   "time_shift_reflect");
}

Tensor phase_shuffle(const Tensor& x, int n, Rng& rng) {
  if (n < 0) throw std::invalid_argument("phase_shuffle: n must be >= 0");
  if (n == 0) return x;
  int shift = static_cast<int>(rng.uniform_int(-n, n));
  return time_shift_reflect(x, shift);
}

}  // namespace phonogan::nn
