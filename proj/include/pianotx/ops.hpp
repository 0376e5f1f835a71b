#pragma once

#include <random>
#include <vector>

#include "pianotx/tensor.hpp"

// Differentiable operations. Tensors are dense row-major; the conv/pool stage
// uses channels-last [B,T,F,C] layout, sequence ops use [B,T,D].

namespace pianotx::ops {

// ---- elementwise / shape ----------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);  // same shape, or b broadcast
                                               // over leading dims of a
Tensor mul(const Tensor& a, const Tensor& b);  // same shape
Tensor scale(const Tensor& x, double c);
Tensor sum(const Tensor& x);  // scalar
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor softmax(const Tensor& x);  // over last dim, max-subtracted
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_last(const std::vector<Tensor>& xs);

// ---- linear algebra ---------------------------------------------------------
// w is [Din, Dout] (input-major); bias optional (pass undefined Tensor)
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul_batched(const Tensor& a, const Tensor& b);     // [N,P,K]x[N,K,Q]
Tensor matmul_batched_nt(const Tensor& a, const Tensor& b);  // [N,P,K]x[N,Q,K]
Tensor split_heads(const Tensor& x, int heads);  // [B,T,D] -> [B*h,T,D/h]
Tensor merge_heads(const Tensor& x, int heads);  // [B*h,T,d] -> [B,T,h*d]

// ---- normalization ----------------------------------------------------------
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

struct BatchNormState {
  std::vector<double> running_mean, running_var;
  long batches_tracked = 0;
};

Tensor batch_norm_nhwc(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       BatchNormState& state, bool training,
                       double momentum = 0.1, double eps = 1e-10);

// ---- convolution stage ------------------------------------------------------
Tensor conv2d_nhwc(const Tensor& x, const Tensor& w, const Tensor& b);  // w [3,3,C,M]
Tensor avg_pool_freq(const Tensor& x);  // [B,T,F,C] -> [B,T,floor(F/2),C]

// ---- recurrent --------------------------------------------------------------
// Bidirectional GRU. Per direction: wx [Din,3H], wh_zr [H,2H], wh_h [H,H],
// bias [3H]; gate order along the 3H axis is [update | reset | candidate]:
//   z_t = sigmoid(Wz x_t + Uz h_prev + bz)
//   r_t = sigmoid(Wr x_t + Ur h_prev + br)
//   hc_t = tanh(Wh x_t + Uh (r_t * h_prev) + bh)
//   h_t = (1 - z_t) * h_prev + z_t * hc_t,  h_0 = 0
// Forward and backward passes are concatenated along the feature axis.
Tensor bigru(const Tensor& x, const Tensor& wx_f, const Tensor& wh_zr_f,
             const Tensor& wh_h_f, const Tensor& b_f, const Tensor& wx_b,
             const Tensor& wh_zr_b, const Tensor& wh_h_b, const Tensor& b_b);

// ---- losses -----------------------------------------------------------------
// Mean binary cross entropy over elements where mask != 0 (all elements when
// mask is undefined). Predictions are clamped to [1e-7, 1 - 1e-7].
Tensor bce_loss(const Tensor& pred, const Tensor& target, const Tensor& mask);
bool bce_last_mask_empty();  // true when the previous bce_loss saw no active element

// ---- constants --------------------------------------------------------------
Tensor positional_encoding(int t_len, int d_model);

}  // namespace pianotx::ops
