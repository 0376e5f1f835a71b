#pragma once

#include <random>
#include <string>
#include <vector>

#include "pianotx/ops.hpp"
#include "pianotx/tensor.hpp"

namespace pianotx::nn {

struct Parameter {
  std::string name;
  Tensor value;
};

// Named non-trainable state (batch-norm running statistics).
struct NamedBuffer {
  std::string name;
  std::vector<double>* data;
};

using ParamRefs = std::vector<Parameter*>;
using BufferRefs = std::vector<NamedBuffer>;

// Uniform draw in (-a, a) from portable 53-bit mantissa bits.
double uniform_symmetric(std::mt19937_64& rng, double a);

struct Linear {
  Parameter w, b;
  bool has_bias = true;

  Linear() = default;
  Linear(const std::string& prefix, int din, int dout, std::mt19937_64& rng,
         bool bias = true);
  Tensor forward(const Tensor& x) const;
  void collect(ParamRefs& out);
  size_t param_count() const;
};

struct Conv3x3 {
  Parameter w, b;  // w [3,3,C,M]

  Conv3x3() = default;
  Conv3x3(const std::string& prefix, int c_in, int m_out, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;
  void collect(ParamRefs& out);
  size_t param_count() const;
};

struct BatchNorm {
  Parameter gamma, beta;
  ops::BatchNormState state;
  std::string prefix;

  BatchNorm() = default;
  BatchNorm(const std::string& prefix, int channels);
  Tensor forward(const Tensor& x, bool training);
  void collect(ParamRefs& out);
  void collect_buffers(BufferRefs& out);
  // running statistics restored from a checkpoint count as initialized
  void set_stats_initialized();
  size_t param_count() const;
};

struct LayerNorm {
  Parameter gamma, beta;

  LayerNorm() = default;
  LayerNorm(const std::string& prefix, int dim);
  Tensor forward(const Tensor& x) const;
  void collect(ParamRefs& out);
  size_t param_count() const;
};

struct BiGru {
  Parameter wx_f, wh_zr_f, wh_h_f, b_f;
  Parameter wx_b, wh_zr_b, wh_h_b, b_b;
  int hidden = 0;

  BiGru() = default;
  BiGru(const std::string& prefix, int din, int hidden, std::mt19937_64& rng);
  Tensor forward(const Tensor& x) const;  // [B,T,Din] -> [B,T,2H]
  void collect(ParamRefs& out);
  size_t param_count() const;
};

// Post-norm encoder block: self-attention + residual + layer norm, then a
// two-layer position-wise feed-forward + residual + layer norm.
struct TransformerBlock {
  Linear wq, wk, wv, wo, ff1, ff2;
  LayerNorm ln1, ln2;
  int heads = 1;
  double dropout_p = 0.1;
  bool residual = true;

  TransformerBlock() = default;
  TransformerBlock(const std::string& prefix, int d_model, int d_ff, int heads,
                   double dropout_p, bool residual, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng) const;
  void collect(ParamRefs& out);
  size_t param_count() const;
};

// Four [conv-bn-relu x2 + freq pool] blocks with dropout between blocks;
// 229 mel bins shrink to 14 while the time axis is preserved.
struct ConvStack {
  struct Block {
    Conv3x3 conv1, conv2;
    BatchNorm bn1, bn2;
  };
  std::vector<Block> blocks;
  double dropout_p = 0.2;

  ConvStack() = default;
  ConvStack(const std::string& prefix, const std::vector<int>& channels,
            double dropout_p, std::mt19937_64& rng);
  Tensor forward(const Tensor& x, bool training, std::mt19937_64& rng);
  void collect(ParamRefs& out);
  void collect_buffers(BufferRefs& out);
  void set_stats_initialized();
  size_t param_count() const;
};

}  // namespace pianotx::nn
