#include <cmath>
#include <stdexcept>

#include "pianotx/kernels.hpp"
#include "pianotx/ops.hpp"

namespace pianotx::ops {

using autograd::Node;
using autograd::make_node;

namespace {

// db[j] += sum over rows of g[r, j]
void add_colsum(double* db, const double* g, size_t rows, int cols) {
  for (size_t r = 0; r < rows; ++r) {
    const double* row = g + r * cols;
    for (int j = 0; j < cols; ++j) db[j] += row[j];
  }
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (w.rank() != 2) throw std::invalid_argument("linear: weight must be [Din,Dout]");
  const int din = w.dim(0), dout = w.dim(1);
  if (x.shape().back() != din)
    throw std::invalid_argument("linear: input width " +
                                std::to_string(x.shape().back()) +
                                " != weight Din " + std::to_string(din));
  if (b.defined() && (b.rank() != 1 || b.dim(0) != dout))
    throw std::invalid_argument("linear: bias shape mismatch");
  const size_t rows = x.numel() / (size_t)din;

  std::vector<double> out(rows * (size_t)dout);
  kernels::gemm_nn(out.data(), x.ptr(), w.ptr(), (int)rows, dout, din);
  if (b.defined()) {
    const double* bp = b.ptr();
    for (size_t r = 0; r < rows; ++r) {
      double* o = out.data() + r * dout;
      for (int j = 0; j < dout; ++j) o[j] += bp[j];
    }
  }
  Shape oshape = x.shape();
  oshape.back() = dout;

  std::vector<std::shared_ptr<Node>> parents{x.node_, w.node_};
  if (b.defined()) parents.push_back(b.node_);
  return make_node(std::move(oshape), std::move(out), std::move(parents),
                   [rows, din, dout](Node& node) {
                     Node& px = *node.parents[0];
                     Node& pw = *node.parents[1];
                     const double* g = node.grad.data();
                     if (px.requires_grad) {
                       std::vector<double> wt((size_t)din * dout);
                       kernels::transpose(wt.data(), pw.value.data(), din, dout);
                       std::vector<double> dx(px.value.size());
                       kernels::gemm_nn(dx.data(), g, wt.data(), (int)rows, din, dout);
                       auto& pg = px.ensure_grad();
                       for (size_t i = 0; i < pg.size(); ++i) pg[i] += dx[i];
                     }
                     if (pw.requires_grad)
                       kernels::gemm_tn(pw.ensure_grad().data(), px.value.data(), g,
                                        (int)rows, din, dout);
                     if (node.parents.size() > 2 && node.parents[2]->requires_grad)
                       add_colsum(node.parents[2]->ensure_grad().data(), g, rows, dout);
                   });
}

namespace {

void check_bmm(const Tensor& a, const Tensor& b, bool bt, const char* op) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
    throw std::invalid_argument(std::string(op) + ": expects [N,·,·] pairs");
  const int ka = a.dim(2), kb = bt ? b.dim(2) : b.dim(1);
  if (ka != kb) throw std::invalid_argument(std::string(op) + ": inner dim mismatch");
}

}  // namespace

Tensor matmul_batched(const Tensor& a, const Tensor& b) {
  check_bmm(a, b, false, "matmul_batched");
  const int nb = a.dim(0), p = a.dim(1), k = a.dim(2), q = b.dim(2);
  std::vector<double> out((size_t)nb * p * q);
  for (int i = 0; i < nb; ++i)
    kernels::gemm_nn(out.data() + (size_t)i * p * q, a.ptr() + (size_t)i * p * k,
                     b.ptr() + (size_t)i * k * q, p, q, k);
  return make_node({nb, p, q}, std::move(out), {a.node_, b.node_},
                   [nb, p, k, q](Node& node) {
                     Node& pa = *node.parents[0];
                     Node& pb = *node.parents[1];
                     const double* g = node.grad.data();
                     if (pa.requires_grad) {
                       auto& ga = pa.ensure_grad();
                       std::vector<double> bt((size_t)k * q);
                       std::vector<double> da((size_t)p * k);
                       for (int i = 0; i < nb; ++i) {
                         kernels::transpose(bt.data(), pb.value.data() + (size_t)i * k * q, k, q);
                         kernels::gemm_nn(da.data(), g + (size_t)i * p * q, bt.data(), p, k, q);
                         double* dst = ga.data() + (size_t)i * p * k;
                         for (size_t j = 0; j < da.size(); ++j) dst[j] += da[j];
                       }
                     }
                     if (pb.requires_grad) {
                       auto& gb = pb.ensure_grad();
                       for (int i = 0; i < nb; ++i)
                         kernels::gemm_tn(gb.data() + (size_t)i * k * q,
                                          pa.value.data() + (size_t)i * p * k,
                                          g + (size_t)i * p * q, p, k, q);
                     }
                   });
}

Tensor matmul_batched_nt(const Tensor& a, const Tensor& b) {
  check_bmm(a, b, true, "matmul_batched_nt");
  const int nb = a.dim(0), p = a.dim(1), k = a.dim(2), q = b.dim(1);
  std::vector<double> out((size_t)nb * p * q);
  std::vector<double> bt((size_t)k * q);
  for (int i = 0; i < nb; ++i) {
    kernels::transpose(bt.data(), b.ptr() + (size_t)i * q * k, q, k);
    kernels::gemm_nn(out.data() + (size_t)i * p * q, a.ptr() + (size_t)i * p * k,
                     bt.data(), p, q, k);
  }
  return make_node({nb, p, q}, std::move(out), {a.node_, b.node_},
                   [nb, p, k, q](Node& node) {
                     Node& pa = *node.parents[0];
                     Node& pb = *node.parents[1];
                     const double* g = node.grad.data();
                     if (pa.requires_grad) {
                       auto& ga = pa.ensure_grad();
                       std::vector<double> da((size_t)p * k);
                       for (int i = 0; i < nb; ++i) {
                         kernels::gemm_nn(da.data(), g + (size_t)i * p * q,
                                          pb.value.data() + (size_t)i * q * k, p, k, q);
                         double* dst = ga.data() + (size_t)i * p * k;
                         for (size_t j = 0; j < da.size(); ++j) dst[j] += da[j];
                       }
                     }
                     if (pb.requires_grad) {
                       auto& gb = pb.ensure_grad();
                       for (int i = 0; i < nb; ++i)
                         kernels::gemm_tn(gb.data() + (size_t)i * q * k,
                                          g + (size_t)i * p * q,
                                          pa.value.data() + (size_t)i * p * k, p, q, k);
                     }
                   });
}

Tensor split_heads(const Tensor& x, int heads) {
  if (x.rank() != 3) throw std::invalid_argument("split_heads: expects [B,T,D]");
  const int b = x.dim(0), t = x.dim(1), d = x.dim(2);
  if (d % heads != 0)
    throw std::invalid_argument("split_heads: width not divisible by head count");
  const int dh = d / heads;
  std::vector<double> out(x.numel());
  const double* xp = x.ptr();
  for (int bi = 0; bi < b; ++bi)
    for (int h = 0; h < heads; ++h)
      for (int ti = 0; ti < t; ++ti) {
        const double* src = xp + ((size_t)bi * t + ti) * d + (size_t)h * dh;
        double* dst = out.data() + (((size_t)(bi * heads + h) * t) + ti) * dh;
        std::copy(src, src + dh, dst);
      }
  return make_node({b * heads, t, dh}, std::move(out), {x.node_},
                   [b, t, d, heads, dh](Node& node) {
                     auto& pg = node.parents[0]->ensure_grad();
                     const double* g = node.grad.data();
                     for (int bi = 0; bi < b; ++bi)
                       for (int h = 0; h < heads; ++h)
                         for (int ti = 0; ti < t; ++ti) {
                           const double* src = g + (((size_t)(bi * heads + h) * t) + ti) * dh;
                           double* dst = pg.data() + ((size_t)bi * t + ti) * d + (size_t)h * dh;
                           for (int j = 0; j < dh; ++j) dst[j] += src[j];
                         }
                   });
}

Tensor merge_heads(const Tensor& x, int heads) {
  if (x.rank() != 3 || x.dim(0) % heads != 0)
    throw std::invalid_argument("merge_heads: expects [B*h,T,d]");
  const int b = x.dim(0) / heads, t = x.dim(1), dh = x.dim(2);
  const int d = dh * heads;
  std::vector<double> out(x.numel());
  const double* xp = x.ptr();
  for (int bi = 0; bi < b; ++bi)
    for (int h = 0; h < heads; ++h)
      for (int ti = 0; ti < t; ++ti) {
        const double* src = xp + (((size_t)(bi * heads + h) * t) + ti) * dh;
        double* dst = out.data() + ((size_t)bi * t + ti) * d + (size_t)h * dh;
        std::copy(src, src + dh, dst);
      }
  return make_node({b, t, d}, std::move(out), {x.node_},
                   [b, t, d, heads, dh](Node& node) {
                     auto& pg = node.parents[0]->ensure_grad();
                     const double* g = node.grad.data();
                     for (int bi = 0; bi < b; ++bi)
                       for (int h = 0; h < heads; ++h)
                         for (int ti = 0; ti < t; ++ti) {
                           const double* src = g + ((size_t)bi * t + ti) * d + (size_t)h * dh;
                           double* dst = pg.data() + (((size_t)(bi * heads + h) * t) + ti) * dh;
                           for (int j = 0; j < dh; ++j) dst[j] += src[j];
                         }
                   });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const int d = x.shape().back();
  if (d < 2) throw std::invalid_argument("layer_norm: last dim must be >= 2");
  if (gamma.numel() != (size_t)d || beta.numel() != (size_t)d)
    throw std::invalid_argument("layer_norm: affine parameter size mismatch");
  const size_t rows = x.numel() / (size_t)d;

  auto inv_std = std::make_shared<std::vector<double>>(rows);
  auto mean = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  const double* xp = x.ptr();
  const double* gp = gamma.ptr();
  const double* bp = beta.ptr();
  for (size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double m = 0.0;
    for (int j = 0; j < d; ++j) m += row[j];
    m /= d;
    double v = 0.0;
    for (int j = 0; j < d; ++j) v += (row[j] - m) * (row[j] - m);
    v /= d;
    const double is = 1.0 / std::sqrt(v + eps);
    (*mean)[r] = m;
    (*inv_std)[r] = is;
    double* o = out.data() + r * d;
    for (int j = 0; j < d; ++j) o[j] = (row[j] - m) * is * gp[j] + bp[j];
  }
  return make_node(x.shape(), std::move(out), {x.node_, gamma.node_, beta.node_},
                   [rows, d, mean, inv_std](Node& node) {
                     Node& px = *node.parents[0];
                     Node& pgm = *node.parents[1];
                     Node& pbt = *node.parents[2];
                     const double* g = node.grad.data();
                     const double* xp = px.value.data();
                     const double* gp = pgm.value.data();
                     double* dgamma = pgm.requires_grad ? pgm.ensure_grad().data() : nullptr;
                     double* dbeta = pbt.requires_grad ? pbt.ensure_grad().data() : nullptr;
                     double* dx = px.requires_grad ? px.ensure_grad().data() : nullptr;
                     for (size_t r = 0; r < rows; ++r) {
                       const double m = (*mean)[r], is = (*inv_std)[r];
                       const double* xr = xp + r * d;
                       const double* gr = g + r * d;
                       double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                       for (int j = 0; j < d; ++j) {
                         const double xhat = (xr[j] - m) * is;
                         const double dxhat = gr[j] * gp[j];
                         sum_dxhat += dxhat;
                         sum_dxhat_xhat += dxhat * xhat;
                         if (dgamma) dgamma[j] += gr[j] * xhat;
                         if (dbeta) dbeta[j] += gr[j];
                       }
                       if (dx) {
                         double* dxr = dx + r * d;
                         for (int j = 0; j < d; ++j) {
                           const double xhat = (xr[j] - m) * is;
                           const double dxhat = gr[j] * gp[j];
                           dxr[j] += is * (dxhat - sum_dxhat / d - xhat * sum_dxhat_xhat / d);
                         }
                       }
                     }
                   });
}

}  // namespace pianotx::ops
