#include "pianotx/nn.hpp"

#include <cmath>

namespace pianotx::nn {

double uniform_symmetric(std::mt19937_64& rng, double a) {
  const double u = (double)(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * a;
}

namespace {

Tensor init_uniform(Shape shape, double a, std::mt19937_64& rng) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = uniform_symmetric(rng, a);
  return Tensor::from_vector(std::move(shape), std::move(v), true);
}

Tensor init_const(Shape shape, double c) {
  return Tensor::full(std::move(shape), c, true);
}

}  // namespace

// ---- Linear -----------------------------------------------------------------

Linear::Linear(const std::string& prefix, int din, int dout, std::mt19937_64& rng,
               bool bias)
    : has_bias(bias) {
  const double a = std::sqrt(6.0 / (din + dout));
  w = {prefix + ".w", init_uniform({din, dout}, a, rng)};
  if (bias) b = {prefix + ".b", init_const({dout}, 0.0)};
}

Tensor Linear::forward(const Tensor& x) const {
  return ops::linear(x, w.value, has_bias ? b.value : Tensor());
}

void Linear::collect(ParamRefs& out) {
  out.push_back(&w);
  if (has_bias) out.push_back(&b);
}

size_t Linear::param_count() const {
  return w.value.numel() + (has_bias ? b.value.numel() : 0);
}

// ---- Conv3x3 ----------------------------------------------------------------

Conv3x3::Conv3x3(const std::string& prefix, int c_in, int m_out,
                 std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / (9.0 * c_in + 9.0 * m_out));
  w = {prefix + ".w", init_uniform({3, 3, c_in, m_out}, a, rng)};
  b = {prefix + ".b", init_const({m_out}, 0.0)};
}

Tensor Conv3x3::forward(const Tensor& x) const {
  return ops::conv2d_nhwc(x, w.value, b.value);
}

void Conv3x3::collect(ParamRefs& out) {
  out.push_back(&w);
  out.push_back(&b);
}

size_t Conv3x3::param_count() const { return w.value.numel() + b.value.numel(); }

// ---- BatchNorm --------------------------------------------------------------

BatchNorm::BatchNorm(const std::string& prefix_, int channels) : prefix(prefix_) {
  gamma = {prefix + ".gamma", init_const({channels}, 1.0)};
  beta = {prefix + ".beta", init_const({channels}, 0.0)};
  state.running_mean.assign(channels, 0.0);
  state.running_var.assign(channels, 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
  return ops::batch_norm_nhwc(x, gamma.value, beta.value, state, training);
}

void BatchNorm::collect(ParamRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm::set_stats_initialized() {
  if (state.batches_tracked == 0) state.batches_tracked = 1;
}

void BatchNorm::collect_buffers(BufferRefs& out) {
  out.push_back({prefix + ".running_mean", &state.running_mean});
  out.push_back({prefix + ".running_var", &state.running_var});
}

size_t BatchNorm::param_count() const {
  return gamma.value.numel() + beta.value.numel();
}

// ---- LayerNorm --------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& prefix, int dim) {
  gamma = {prefix + ".gamma", init_const({dim}, 1.0)};
  beta = {prefix + ".beta", init_const({dim}, 0.0)};
}

Tensor LayerNorm::forward(const Tensor& x) const {
  return ops::layer_norm(x, gamma.value, beta.value);
}

void LayerNorm::collect(ParamRefs& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

size_t LayerNorm::param_count() const {
  return gamma.value.numel() + beta.value.numel();
}

// ---- BiGru ------------------------------------------------------------------

BiGru::BiGru(const std::string& prefix, int din, int hidden_, std::mt19937_64& rng)
    : hidden(hidden_) {
  const double ax = std::sqrt(6.0 / (din + 3 * hidden));
  const double ah = 1.0 / std::sqrt((double)hidden);
  wx_f = {prefix + ".fwd.wx", init_uniform({din, 3 * hidden}, ax, rng)};
  wh_zr_f = {prefix + ".fwd.wh_zr", init_uniform({hidden, 2 * hidden}, ah, rng)};
  wh_h_f = {prefix + ".fwd.wh_h", init_uniform({hidden, hidden}, ah, rng)};
  b_f = {prefix + ".fwd.b", init_const({3 * hidden}, 0.0)};
  wx_b = {prefix + ".bwd.wx", init_uniform({din, 3 * hidden}, ax, rng)};
  wh_zr_b = {prefix + ".bwd.wh_zr", init_uniform({hidden, 2 * hidden}, ah, rng)};
  wh_h_b = {prefix + ".bwd.wh_h", init_uniform({hidden, hidden}, ah, rng)};
  b_b = {prefix + ".bwd.b", init_const({3 * hidden}, 0.0)};
}

Tensor BiGru::forward(const Tensor& x) const {
  return ops::bigru(x, wx_f.value, wh_zr_f.value, wh_h_f.value, b_f.value,
                    wx_b.value, wh_zr_b.value, wh_h_b.value, b_b.value);
}

void BiGru::collect(ParamRefs& out) {
  for (Parameter* p : {&wx_f, &wh_zr_f, &wh_h_f, &b_f, &wx_b, &wh_zr_b, &wh_h_b, &b_b})
    out.push_back(p);
}

size_t BiGru::param_count() const {
  size_t n = 0;
  for (const Parameter* p :
       {&wx_f, &wh_zr_f, &wh_h_f, &b_f, &wx_b, &wh_zr_b, &wh_h_b, &b_b})
    n += p->value.numel();
  return n;
}

// ---- TransformerBlock -------------------------------------------------------

TransformerBlock::TransformerBlock(const std::string& prefix, int d_model, int d_ff,
                                   int heads_, double dropout_p_, bool residual_,
                                   std::mt19937_64& rng)
    : heads(heads_), dropout_p(dropout_p_), residual(residual_) {
  wq = Linear(prefix + ".attn.q", d_model, d_model, rng);
  wk = Linear(prefix + ".attn.k", d_model, d_model, rng);
  wv = Linear(prefix + ".attn.v", d_model, d_model, rng);
  wo = Linear(prefix + ".attn.out", d_model, d_model, rng);
  ln1 = LayerNorm(prefix + ".ln1", d_model);
  ff1 = Linear(prefix + ".ff1", d_model, d_ff, rng);
  ff2 = Linear(prefix + ".ff2", d_ff, d_model, rng);
  ln2 = LayerNorm(prefix + ".ln2", d_model);
}

Tensor TransformerBlock::forward(const Tensor& x, bool training,
                                 std::mt19937_64& rng) const {
  const int d = x.shape().back();
  const int dh = d / heads;
  Tensor q = ops::split_heads(wq.forward(x), heads);
  Tensor k = ops::split_heads(wk.forward(x), heads);
  Tensor v = ops::split_heads(wv.forward(x), heads);
  Tensor scores = ops::scale(ops::matmul_batched_nt(q, k), 1.0 / std::sqrt((double)dh));
  Tensor attn = ops::softmax(scores);
  attn = ops::dropout(attn, dropout_p, training, rng);
  Tensor ctx = ops::merge_heads(ops::matmul_batched(attn, v), heads);
  Tensor attn_out = wo.forward(ctx);
  Tensor x1 = ln1.forward(residual ? ops::add(attn_out, x) : attn_out);
  Tensor ff = ff2.forward(ops::relu(ff1.forward(x1)));
  ff = ops::dropout(ff, dropout_p, training, rng);
  return ln2.forward(residual ? ops::add(ff, x1) : ff);
}

void TransformerBlock::collect(ParamRefs& out) {
  wq.collect(out);
  wk.collect(out);
  wv.collect(out);
  wo.collect(out);
  ln1.collect(out);
  ff1.collect(out);
  ff2.collect(out);
  ln2.collect(out);
}

size_t TransformerBlock::param_count() const {
  return wq.param_count() + wk.param_count() + wv.param_count() + wo.param_count() +
         ln1.param_count() + ff1.param_count() + ff2.param_count() + ln2.param_count();
}

// ---- ConvStack --------------------------------------------------------------

ConvStack::ConvStack(const std::string& prefix, const std::vector<int>& channels,
                     double dropout_p_, std::mt19937_64& rng)
    : dropout_p(dropout_p_) {
  int c_in = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    const std::string bp = prefix + ".block" + std::to_string(i + 1);
    Block blk;
    blk.conv1 = Conv3x3(bp + ".conv1", c_in, channels[i], rng);
    blk.bn1 = BatchNorm(bp + ".bn1", channels[i]);
    blk.conv2 = Conv3x3(bp + ".conv2", channels[i], channels[i], rng);
    blk.bn2 = BatchNorm(bp + ".bn2", channels[i]);
    blocks.push_back(std::move(blk));
    c_in = channels[i];
  }
}

Tensor ConvStack::forward(const Tensor& x, bool training, std::mt19937_64& rng) {
  Tensor h = x;
  for (auto& blk : blocks) {
    h = ops::relu(blk.bn1.forward(blk.conv1.forward(h), training));
    h = ops::relu(blk.bn2.forward(blk.conv2.forward(h), training));
    h = ops::avg_pool_freq(h);
    h = ops::dropout(h, dropout_p, training, rng);
  }
  return h;
}

void ConvStack::collect(ParamRefs& out) {
  for (auto& blk : blocks) {
    blk.conv1.collect(out);
    blk.bn1.collect(out);
    blk.conv2.collect(out);
    blk.bn2.collect(out);
  }
}

void ConvStack::set_stats_initialized() {
  for (auto& blk : blocks) {
    blk.bn1.set_stats_initialized();
    blk.bn2.set_stats_initialized();
  }
}

void ConvStack::collect_buffers(BufferRefs& out) {
  for (auto& blk : blocks) {
    blk.bn1.collect_buffers(out);
    blk.bn2.collect_buffers(out);
  }
}

size_t ConvStack::param_count() const {
  size_t n = 0;
  for (const auto& blk : blocks)
    n += blk.conv1.param_count() + blk.bn1.param_count() + blk.conv2.param_count() +
         blk.bn2.param_count();
  return n;
}

}  // namespace pianotx::nn
