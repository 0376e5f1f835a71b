#include <array>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "pianotx/kernels.hpp"
#include "pianotx/ops.hpp"

namespace pianotx::ops {

using autograd::Node;
using autograd::make_node;

namespace {

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// per-direction activations saved for the backward pass, all [T x B x H]
// except states which holds T+1 entries in processing order
struct GruSave {
  std::vector<double> z, r, hc, states;
};

}  // namespace

Tensor bigru(const Tensor& x, const Tensor& wx_f, const Tensor& wh_zr_f,
             const Tensor& wh_h_f, const Tensor& b_f, const Tensor& wx_b,
             const Tensor& wh_zr_b, const Tensor& wh_h_b, const Tensor& b_b) {
  if (x.rank() != 3) throw std::invalid_argument("bigru: input must be [B,T,D]");
  const int bs = x.dim(0), t_len = x.dim(1), din = x.dim(2);
  const int h = wh_h_f.dim(0);
  for (const Tensor* w : {&wx_f, &wx_b})
    if (w->rank() != 2 || w->dim(0) != din || w->dim(1) != 3 * h)
      throw std::invalid_argument("bigru: wx must be [Din,3H]");
  for (const Tensor* w : {&wh_zr_f, &wh_zr_b})
    if (w->rank() != 2 || w->dim(0) != h || w->dim(1) != 2 * h)
      throw std::invalid_argument("bigru: wh_zr must be [H,2H]");
  for (const Tensor* w : {&wh_h_f, &wh_h_b})
    if (w->rank() != 2 || w->dim(0) != h || w->dim(1) != h)
      throw std::invalid_argument("bigru: wh_h must be [H,H]");
  for (const Tensor* b : {&b_f, &b_b})
    if (b->numel() != (size_t)3 * h) throw std::invalid_argument("bigru: bias must be [3H]");

  const size_t rows = (size_t)bs * t_len;
  const size_t bh = (size_t)bs * h;
  std::vector<double> out(rows * (size_t)2 * h);
  auto saves = std::make_shared<std::array<GruSave, 2>>();
  const Tensor* wx[2] = {&wx_f, &wx_b};
  const Tensor* wzr[2] = {&wh_zr_f, &wh_zr_b};
  const Tensor* whh[2] = {&wh_h_f, &wh_h_b};
  const Tensor* bias[2] = {&b_f, &b_b};

  for (int dir = 0; dir < 2; ++dir) {
    GruSave& sv = (*saves)[dir];
    sv.z.assign((size_t)t_len * bh, 0.0);
    sv.r.assign((size_t)t_len * bh, 0.0);
    sv.hc.assign((size_t)t_len * bh, 0.0);
    sv.states.assign((size_t)(t_len + 1) * bh, 0.0);

    // input projection for all steps at once
    std::vector<double> gates(rows * (size_t)3 * h);
    kernels::gemm_nn(gates.data(), x.ptr(), wx[dir]->ptr(), (int)rows, 3 * h, din);
    const double* bp = bias[dir]->ptr();
    for (size_t rI = 0; rI < rows; ++rI) {
      double* gr = gates.data() + rI * 3 * h;
      for (int j = 0; j < 3 * h; ++j) gr[j] += bp[j];
    }

    const double* wzr_p = wzr[dir]->ptr();
    const double* whh_p = whh[dir]->ptr();
    std::vector<double> azr((size_t)bs * 2 * h), ah(bh), rh(bh);
    for (int s = 0; s < t_len; ++s) {
      const int tau = dir == 0 ? s : t_len - 1 - s;
      const double* hp = sv.states.data() + (size_t)s * bh;
      double* hn = sv.states.data() + (size_t)(s + 1) * bh;
      double* zs = sv.z.data() + (size_t)s * bh;
      double* rs = sv.r.data() + (size_t)s * bh;
      double* hcs = sv.hc.data() + (size_t)s * bh;
      for (int b = 0; b < bs; ++b) {
        const double* g = gates.data() + ((size_t)b * t_len + tau) * 3 * h;
        const double* hprev = hp + (size_t)b * h;
        double* a = azr.data() + (size_t)b * 2 * h;
        for (int j = 0; j < 2 * h; ++j) a[j] = g[j];
        for (int i = 0; i < h; ++i) {
          const double hv = hprev[i];
          const double* wr = wzr_p + (size_t)i * 2 * h;
          for (int j = 0; j < 2 * h; ++j) a[j] += hv * wr[j];
        }
        double* zb = zs + (size_t)b * h;
        double* rb = rs + (size_t)b * h;
        for (int j = 0; j < h; ++j) {
          zb[j] = stable_sigmoid(a[j]);
          rb[j] = stable_sigmoid(a[h + j]);
        }
        double* rhb = rh.data() + (size_t)b * h;
        for (int j = 0; j < h; ++j) rhb[j] = rb[j] * hprev[j];
        double* ab = ah.data() + (size_t)b * h;
        for (int j = 0; j < h; ++j) ab[j] = g[2 * h + j];
        for (int i = 0; i < h; ++i) {
          const double rv = rhb[i];
          const double* wr = whh_p + (size_t)i * h;
          for (int j = 0; j < h; ++j) ab[j] += rv * wr[j];
        }
        double* hcb = hcs + (size_t)b * h;
        double* hnb = hn + (size_t)b * h;
        double* yb = out.data() + ((size_t)b * t_len + tau) * 2 * h + (size_t)dir * h;
        for (int j = 0; j < h; ++j) {
          hcb[j] = std::tanh(ab[j]);
          hnb[j] = (1.0 - zb[j]) * hprev[j] + zb[j] * hcb[j];
          yb[j] = hnb[j];
        }
      }
    }
  }

  return make_node(
      {bs, t_len, 2 * h}, std::move(out),
      {x.node_, wx_f.node_, wh_zr_f.node_, wh_h_f.node_, b_f.node_, wx_b.node_,
       wh_zr_b.node_, wh_h_b.node_, b_b.node_},
      [bs, t_len, din, h, saves, bh, rows](Node& node) {
        Node& px = *node.parents[0];
        const double* g = node.grad.data();
        for (int dir = 0; dir < 2; ++dir) {
          const GruSave& sv = (*saves)[dir];
          Node& pwx = *node.parents[1 + 4 * dir];
          Node& pwzr = *node.parents[2 + 4 * dir];
          Node& pwhh = *node.parents[3 + 4 * dir];
          Node& pb = *node.parents[4 + 4 * dir];
          const double* wzr_p = pwzr.value.data();
          const double* whh_p = pwhh.value.data();
          double* dwzr = pwzr.requires_grad ? pwzr.ensure_grad().data() : nullptr;
          double* dwhh = pwhh.requires_grad ? pwhh.ensure_grad().data() : nullptr;

          std::vector<double> da(rows * (size_t)3 * h, 0.0);  // [z|r|h] per row
          std::vector<double> dh(bh, 0.0);
          std::vector<double> drh(bh), dhp(bh);
          for (int s = t_len - 1; s >= 0; --s) {
            const int tau = dir == 0 ? s : t_len - 1 - s;
            const double* hp = sv.states.data() + (size_t)s * bh;
            const double* zs = sv.z.data() + (size_t)s * bh;
            const double* rs = sv.r.data() + (size_t)s * bh;
            const double* hcs = sv.hc.data() + (size_t)s * bh;
            for (int b = 0; b < bs; ++b) {
              const double* hprev = hp + (size_t)b * h;
              const double* zb = zs + (size_t)b * h;
              const double* rb = rs + (size_t)b * h;
              const double* hcb = hcs + (size_t)b * h;
              double* dhb = dh.data() + (size_t)b * h;
              const double* gy = g + ((size_t)b * t_len + tau) * 2 * h + (size_t)dir * h;
              double* dab = da.data() + ((size_t)b * t_len + tau) * 3 * h;
              double* drhb = drh.data() + (size_t)b * h;
              double* dhpb = dhp.data() + (size_t)b * h;
              for (int j = 0; j < h; ++j) {
                const double dhv = dhb[j] + gy[j];
                const double dz = dhv * (hcb[j] - hprev[j]);
                const double dhc = dhv * zb[j];
                dhpb[j] = dhv * (1.0 - zb[j]);
                dab[2 * h + j] = dhc * (1.0 - hcb[j] * hcb[j]);
                dab[j] = dz * zb[j] * (1.0 - zb[j]);
              }
              // backprop through Uh (r*h_prev) path
              for (int i = 0; i < h; ++i) {
                const double* wr = whh_p + (size_t)i * h;
                double acc = 0.0;
                for (int j = 0; j < h; ++j) acc += dab[2 * h + j] * wr[j];
                drhb[i] = acc;
              }
              for (int j = 0; j < h; ++j) {
                const double dr = drhb[j] * hprev[j];
                dhpb[j] += drhb[j] * rb[j];
                dab[h + j] = dr * rb[j] * (1.0 - rb[j]);
              }
              // recurrent weight grads and carry into h_prev
              if (dwzr)
                for (int i = 0; i < h; ++i) {
                  const double hv = hprev[i];
                  double* wr = dwzr + (size_t)i * 2 * h;
                  for (int j = 0; j < 2 * h; ++j) wr[j] += hv * dab[j];
                }
              if (dwhh)
                for (int i = 0; i < h; ++i) {
                  const double rv = rb[i] * hprev[i];
                  double* wr = dwhh + (size_t)i * h;
                  for (int j = 0; j < h; ++j) wr[j] += rv * dab[2 * h + j];
                }
              for (int i = 0; i < h; ++i) {
                const double* wr = wzr_p + (size_t)i * 2 * h;
                double acc = dhpb[i];
                for (int j = 0; j < 2 * h; ++j) acc += dab[j] * wr[j];
                dhb[i] = acc;
              }
            }
          }
          if (pwx.requires_grad)
            kernels::gemm_tn(pwx.ensure_grad().data(), px.value.data(), da.data(),
                             (int)rows, din, 3 * h);
          if (pb.requires_grad) {
            auto& bg = pb.ensure_grad();
            for (size_t rI = 0; rI < rows; ++rI) {
              const double* row = da.data() + rI * 3 * h;
              for (int j = 0; j < 3 * h; ++j) bg[j] += row[j];
            }
          }
          if (px.requires_grad) {
            std::vector<double> wxt((size_t)din * 3 * h);
            kernels::transpose(wxt.data(), pwx.value.data(), din, 3 * h);
            std::vector<double> dx(px.value.size());
            kernels::gemm_nn(dx.data(), da.data(), wxt.data(), (int)rows, din, 3 * h);
            auto& pg = px.ensure_grad();
            for (size_t i = 0; i < pg.size(); ++i) pg[i] += dx[i];
          }
        }
      });
}

}  // namespace pianotx::ops
