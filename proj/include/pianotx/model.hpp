#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pianotx/nn.hpp"

namespace pianotx {

enum class HeadType { kGru, kTransformer };

HeadType head_type_from_string(const std::string& s);
std::string to_string(HeadType t);

struct ModelConfig {
  int d_model = 512;
  int d_ff = 2048;
  int heads = 4;
  int transformer_blocks = 4;
  int gru_hidden = 256;  // per direction
  std::vector<int> conv_channels = {48, 64, 96, 128};
  int n_mels = 229;
  int pitches = 88;
  HeadType head_onset = HeadType::kGru;
  HeadType head_offset = HeadType::kGru;
  HeadType head_frame = HeadType::kGru;
  HeadType head_velocity = HeadType::kTransformer;
  bool positional_encoding = true;
  bool conditioning = true;
  bool detach_conditioning = true;
  bool residual = true;
  double conv_dropout = 0.2;
  double seq_dropout = 0.1;

  void validate() const;
  // Shrinks widths by `divisor` for desk-scale runs, rounding up so head
  // splits and vector kernels stay aligned.
  ModelConfig scaled(int divisor) const;
  std::string canonical_text() const;
  uint64_t hash() const;
  // frequency extent after the four freq-halving pools, times last channels
  int feature_dim() const;
};

struct OutputRolls {
  Tensor onset, offset, frame, velocity;  // each [B,T,88], post-sigmoid
};

// Sequence model of one branch. Feature embedding, a recurrent or
// self-attention main stage, an optional conditioned final stage fed with
// other branches' rolls, and the per-pitch projection.
class SequenceHead {
 public:
  SequenceHead() = default;
  SequenceHead(const std::string& prefix, HeadType type, int feat_dim, int cond_dim,
               const ModelConfig& cfg, std::mt19937_64& rng);

  Tensor forward(const Tensor& features, const std::vector<Tensor>& conds,
                 bool training, std::mt19937_64& rng) const;
  void collect(nn::ParamRefs& out);
  size_t param_count() const;

  HeadType type() const { return type_; }

 private:
  HeadType type_ = HeadType::kGru;
  int cond_dim_ = 0;
  int embed_dim_ = 0;
  bool use_pe_ = true;
  double dropout_p_ = 0.1;
  nn::Linear embed_;
  nn::LayerNorm embed_ln_;                     // transformer path
  std::vector<nn::TransformerBlock> blocks_;   // transformer main stage
  nn::BiGru gru1_;                             // gru main stage
  nn::Linear cond_proj_;                       // transformer conditioned stage
  nn::LayerNorm cond_ln_;
  nn::TransformerBlock final_block_;
  nn::BiGru gru2_;                             // gru conditioned stage
  nn::Linear out_;
};

// Four-branch acoustic model. Velocity and offset run unconditioned; the
// onset branch sees the velocity roll, the frame branch sees onset and
// offset rolls (concatenated before each branch's final sequence stage).
class TranscriptionNet {
 public:
  TranscriptionNet(const ModelConfig& cfg, uint64_t seed);

  // spec: [B,T,n_mels] log-mel values
  OutputRolls forward(const Tensor& spec, bool training, std::mt19937_64& rng);

  nn::ParamRefs parameters();
  nn::BufferRefs buffers();
  void mark_stats_loaded();  // after restoring buffers from a checkpoint
  size_t param_count() const;
  const ModelConfig& config() const { return cfg_; }

 private:
  struct Branch {
    nn::ConvStack conv;
    SequenceHead head;
  };
  Tensor branch_features(Branch& b, const Tensor& x4, bool training,
                         std::mt19937_64& rng);

  ModelConfig cfg_;
  Branch onset_, offset_, frame_, velocity_;
};

}  // namespace pianotx
