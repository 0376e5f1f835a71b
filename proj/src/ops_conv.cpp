#include <cmath>
#include <stdexcept>

#include "pianotx/kernels.hpp"
#include "pianotx/ops.hpp"

namespace pianotx::ops {

using autograd::Node;
using autograd::make_node;

Tensor conv2d_nhwc(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.rank() != 4) throw std::invalid_argument("conv2d: input must be [B,T,F,C]");
  if (w.rank() != 4 || w.dim(0) != 3 || w.dim(1) != 3)
    throw std::invalid_argument("conv2d: kernel must be [3,3,C,M]");
  const int bs = x.dim(0), t = x.dim(1), f = x.dim(2), c = x.dim(3);
  const int m = w.dim(3);
  if (w.dim(2) != c)
    throw std::invalid_argument("conv2d: input has " + std::to_string(c) +
                                " channels, kernel expects " + std::to_string(w.dim(2)));
  if (b.defined() && b.numel() != (size_t)m)
    throw std::invalid_argument("conv2d: bias size mismatch");

  const size_t in_stride = (size_t)t * f * c;
  const size_t out_stride = (size_t)t * f * m;
  const size_t pad_size = (size_t)(t + 2) * (f + 2) * c;
  std::vector<double> out((size_t)bs * out_stride);
  std::vector<double> padded(pad_size);
  for (int bi = 0; bi < bs; ++bi) {
    kernels::pad_nhwc(padded.data(), x.ptr() + bi * in_stride, t, f, c);
    kernels::conv3x3_nhwc(out.data() + bi * out_stride, padded.data(), w.ptr(),
                          b.defined() ? b.ptr() : nullptr, t, f, c, m);
  }

  std::vector<std::shared_ptr<Node>> parents{x.node_, w.node_};
  if (b.defined()) parents.push_back(b.node_);
  return make_node({bs, t, f, m}, std::move(out), std::move(parents),
                   [bs, t, f, c, m, in_stride, out_stride](Node& node) {
                     Node& px = *node.parents[0];
                     Node& pw = *node.parents[1];
                     const double* g = node.grad.data();
                     if (px.requires_grad) {
                       // dx = conv(dy, kernel transposed and spatially flipped)
                       std::vector<double> wt(9 * (size_t)m * c);
                       const double* wp = pw.value.data();
                       for (int dt = 0; dt < 3; ++dt)
                         for (int df = 0; df < 3; ++df) {
                           const double* src = wp + ((size_t)(2 - dt) * 3 + (2 - df)) * c * m;
                           double* dst = wt.data() + ((size_t)dt * 3 + df) * m * c;
                           kernels::transpose(dst, src, c, m);
                         }
                       std::vector<double> dy_pad((size_t)(t + 2) * (f + 2) * m);
                       std::vector<double> dx(in_stride);
                       auto& pg = px.ensure_grad();
                       for (int bi = 0; bi < bs; ++bi) {
                         kernels::pad_nhwc(dy_pad.data(), g + bi * out_stride, t, f, m);
                         kernels::conv3x3_nhwc(dx.data(), dy_pad.data(), wt.data(),
                                               nullptr, t, f, m, c);
                         double* dst = pg.data() + bi * in_stride;
                         for (size_t i = 0; i < in_stride; ++i) dst[i] += dx[i];
                       }
                     }
                     if (pw.requires_grad) {
                       std::vector<double> padded((size_t)(t + 2) * (f + 2) * c);
                       auto& wg = pw.ensure_grad();
                       for (int bi = 0; bi < bs; ++bi) {
                         kernels::pad_nhwc(padded.data(), px.value.data() + bi * in_stride,
                                           t, f, c);
                         kernels::conv3x3_nhwc_grad_kernel(wg.data(), padded.data(),
                                                           g + bi * out_stride, t, f, c, m);
                       }
                     }
                     if (node.parents.size() > 2 && node.parents[2]->requires_grad) {
                       auto& bg = node.parents[2]->ensure_grad();
                       const size_t rows = (size_t)bs * t * f;
                       for (size_t r = 0; r < rows; ++r) {
                         const double* row = g + r * m;
                         for (int j = 0; j < m; ++j) bg[j] += row[j];
                       }
                     }
                   });
}

Tensor avg_pool_freq(const Tensor& x) {
  if (x.rank() != 4) throw std::invalid_argument("avg_pool_freq: input must be [B,T,F,C]");
  const int bs = x.dim(0), t = x.dim(1), f = x.dim(2), c = x.dim(3);
  if (f < 2) throw std::invalid_argument("avg_pool_freq: needs at least 2 bins");
  const int fo = f / 2;  // trailing odd bin dropped
  std::vector<double> out((size_t)bs * t * fo * c);
  const double* xp = x.ptr();
  for (size_t bt = 0; bt < (size_t)bs * t; ++bt) {
    const double* src = xp + bt * f * c;
    double* dst = out.data() + bt * fo * c;
    for (int j = 0; j < fo; ++j)
      for (int ch = 0; ch < c; ++ch)
        dst[(size_t)j * c + ch] =
            0.5 * (src[(size_t)(2 * j) * c + ch] + src[(size_t)(2 * j + 1) * c + ch]);
  }
  return make_node({bs, t, fo, c}, std::move(out), {x.node_},
                   [bs, t, f, fo, c](Node& node) {
                     auto& pg = node.parents[0]->ensure_grad();
                     const double* g = node.grad.data();
                     for (size_t bt = 0; bt < (size_t)bs * t; ++bt) {
                       const double* gr = g + bt * fo * c;
                       double* dst = pg.data() + bt * f * c;
                       for (int j = 0; j < fo; ++j)
                         for (int ch = 0; ch < c; ++ch) {
                           const double half = 0.5 * gr[(size_t)j * c + ch];
                           dst[(size_t)(2 * j) * c + ch] += half;
                           dst[(size_t)(2 * j + 1) * c + ch] += half;
                         }
                     }
                   });
}

Tensor batch_norm_nhwc(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       BatchNormState& state, bool training, double momentum,
                       double eps) {
  if (x.rank() != 4) throw std::invalid_argument("batch_norm: input must be [B,T,F,C]");
  const int c = x.dim(3);
  const size_t rows = x.numel() / (size_t)c;
  if (gamma.numel() != (size_t)c || beta.numel() != (size_t)c)
    throw std::invalid_argument("batch_norm: affine parameter size mismatch");
  if (state.running_mean.empty()) {
    state.running_mean.assign(c, 0.0);
    state.running_var.assign(c, 1.0);
  }
  if (!training && state.batches_tracked == 0)
    throw std::logic_error("batch_norm: eval mode before any running statistics");

  auto mean = std::make_shared<std::vector<double>>(c, 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(c);
  const double* xp = x.ptr();
  if (training) {
    std::vector<double> sum(c, 0.0), sumsq(c, 0.0);
    for (size_t r = 0; r < rows; ++r) {
      const double* row = xp + r * c;
      for (int j = 0; j < c; ++j) {
        sum[j] += row[j];
        sumsq[j] += row[j] * row[j];
      }
    }
    for (int j = 0; j < c; ++j) {
      const double m = sum[j] / rows;
      double v = sumsq[j] / rows - m * m;
      if (v < 0.0) v = 0.0;
      (*mean)[j] = m;
      (*inv_std)[j] = 1.0 / std::sqrt(v + eps);
      // unbiased running variance, matching the usual momentum update
      const double vu = rows > 1 ? v * rows / (rows - 1.0) : v;
      state.running_mean[j] = (1.0 - momentum) * state.running_mean[j] + momentum * m;
      state.running_var[j] = (1.0 - momentum) * state.running_var[j] + momentum * vu;
    }
    state.batches_tracked += 1;
  } else {
    for (int j = 0; j < c; ++j) {
      (*mean)[j] = state.running_mean[j];
      (*inv_std)[j] = 1.0 / std::sqrt(state.running_var[j] + eps);
    }
  }

  std::vector<double> out(x.numel());
  const double* gp = gamma.ptr();
  const double* bp = beta.ptr();
  for (size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * c;
    double* o = out.data() + r * c;
    for (int j = 0; j < c; ++j)
      o[j] = (row[j] - (*mean)[j]) * (*inv_std)[j] * gp[j] + bp[j];
  }
  return make_node(
      x.shape(), std::move(out), {x.node_, gamma.node_, beta.node_},
      [rows, c, mean, inv_std, training](Node& node) {
        Node& px = *node.parents[0];
        Node& pgm = *node.parents[1];
        Node& pbt = *node.parents[2];
        const double* g = node.grad.data();
        const double* xp = px.value.data();
        const double* gp = pgm.value.data();
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (size_t r = 0; r < rows; ++r) {
          const double* gr = g + r * c;
          const double* xr = xp + r * c;
          for (int j = 0; j < c; ++j) {
            sum_dy[j] += gr[j];
            sum_dy_xhat[j] += gr[j] * (xr[j] - (*mean)[j]) * (*inv_std)[j];
          }
        }
        if (pgm.requires_grad) {
          auto& dg = pgm.ensure_grad();
          for (int j = 0; j < c; ++j) dg[j] += sum_dy_xhat[j];
        }
        if (pbt.requires_grad) {
          auto& db = pbt.ensure_grad();
          for (int j = 0; j < c; ++j) db[j] += sum_dy[j];
        }
        if (px.requires_grad) {
          auto& dx = px.ensure_grad();
          if (training) {
            for (size_t r = 0; r < rows; ++r) {
              const double* gr = g + r * c;
              const double* xr = xp + r * c;
              double* dr = dx.data() + r * c;
              for (int j = 0; j < c; ++j) {
                const double xhat = (xr[j] - (*mean)[j]) * (*inv_std)[j];
                dr[j] += gp[j] * (*inv_std)[j] *
                         (gr[j] - sum_dy[j] / rows - xhat * sum_dy_xhat[j] / rows);
              }
            }
          } else {
            for (size_t r = 0; r < rows; ++r) {
              const double* gr = g + r * c;
              double* dr = dx.data() + r * c;
              for (int j = 0; j < c; ++j) dr[j] += gr[j] * gp[j] * (*inv_std)[j];
            }
          }
        }
      });
}

}  // namespace pianotx::ops
