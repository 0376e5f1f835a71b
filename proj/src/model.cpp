#include "pianotx/model.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace pianotx {

HeadType head_type_from_string(const std::string& s) {
  if (s == "gru") return HeadType::kGru;
  if (s == "transformer") return HeadType::kTransformer;
  throw std::invalid_argument("unknown head type '" + s + "' (gru|transformer)");
}

std::string to_string(HeadType t) {
  return t == HeadType::kGru ? "gru" : "transformer";
}

void ModelConfig::validate() const {
  if (d_model % heads != 0)
    throw std::invalid_argument("model: d_model must be divisible by heads");
  if (d_model % 2 != 0)
    throw std::invalid_argument("model: d_model must be even");
  if (pitches != 88) throw std::invalid_argument("model: pitches must be 88");
  if (conv_channels.size() != 4)
    throw std::invalid_argument("model: conv_channels must have 4 entries");
  if (transformer_blocks < 1 || gru_hidden < 1 || d_ff < 1)
    throw std::invalid_argument("model: widths must be positive");
}

namespace {
int round_up(int v, int mult) { return (v + mult - 1) / mult * mult; }
}  // namespace

ModelConfig ModelConfig::scaled(int divisor) const {
  if (divisor <= 1) return *this;
  ModelConfig s = *this;
  const int dm_mult = heads % 2 == 0 ? heads : 2 * heads;
  s.d_model = std::max(dm_mult, round_up(d_model / divisor, dm_mult));
  s.d_ff = std::max(4, round_up(d_ff / divisor, 4));
  s.gru_hidden = std::max(2, round_up(gru_hidden / divisor, 2));
  for (int& c : s.conv_channels) c = std::max(4, round_up(c / divisor, 4));
  return s;
}

std::string ModelConfig::canonical_text() const {
  std::ostringstream os;
  os << "d_model=" << d_model << "\nd_ff=" << d_ff << "\nheads=" << heads
     << "\ntransformer_blocks=" << transformer_blocks << "\ngru_hidden=" << gru_hidden
     << "\nconv_channels=";
  for (size_t i = 0; i < conv_channels.size(); ++i)
    os << (i ? "," : "") << conv_channels[i];
  os << "\nn_mels=" << n_mels << "\npitches=" << pitches
     << "\nhead_onset=" << to_string(head_onset)
     << "\nhead_offset=" << to_string(head_offset)
     << "\nhead_frame=" << to_string(head_frame)
     << "\nhead_velocity=" << to_string(head_velocity)
     << "\npositional_encoding=" << (positional_encoding ? 1 : 0)
     << "\nconditioning=" << (conditioning ? 1 : 0)
     << "\ndetach_conditioning=" << (detach_conditioning ? 1 : 0)
     << "\nresidual=" << (residual ? 1 : 0) << "\nconv_dropout=" << conv_dropout
     << "\nseq_dropout=" << seq_dropout << "\n";
  return os.str();
}

uint64_t ModelConfig::hash() const {
  // FNV-1a over the canonical text
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical_text()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

int ModelConfig::feature_dim() const {
  int f = n_mels;
  for (size_t i = 0; i < conv_channels.size(); ++i) f /= 2;
  return f * conv_channels.back();
}

// ---- SequenceHead -----------------------------------------------------------

SequenceHead::SequenceHead(const std::string& prefix, HeadType type, int feat_dim,
                           int cond_dim, const ModelConfig& cfg, std::mt19937_64& rng)
    : type_(type),
      cond_dim_(cond_dim),
      use_pe_(cfg.positional_encoding),
      dropout_p_(cfg.seq_dropout) {
  embed_dim_ = type == HeadType::kGru ? 2 * cfg.gru_hidden : cfg.d_model;
  embed_ = nn::Linear(prefix + ".embed", feat_dim, embed_dim_, rng);
  if (type == HeadType::kTransformer) {
    embed_ln_ = nn::LayerNorm(prefix + ".embed_ln", embed_dim_);
    for (int i = 0; i < cfg.transformer_blocks; ++i)
      blocks_.emplace_back(prefix + ".block" + std::to_string(i + 1), cfg.d_model,
                           cfg.d_ff, cfg.heads, cfg.seq_dropout, cfg.residual, rng);
    if (cond_dim > 0) {
      cond_proj_ = nn::Linear(prefix + ".cond_proj", embed_dim_ + cond_dim,
                              embed_dim_, rng);
      cond_ln_ = nn::LayerNorm(prefix + ".cond_ln", embed_dim_);
      final_block_ = nn::TransformerBlock(prefix + ".final_block", cfg.d_model,
                                          cfg.d_ff, cfg.heads, cfg.seq_dropout,
                                          cfg.residual, rng);
    }
  } else {
    gru1_ = nn::BiGru(prefix + ".gru1", embed_dim_, cfg.gru_hidden, rng);
    if (cond_dim > 0)
      gru2_ = nn::BiGru(prefix + ".gru2", embed_dim_ + cond_dim, cfg.gru_hidden, rng);
  }
  out_ = nn::Linear(prefix + ".out", embed_dim_, cfg.pitches, rng);
}

Tensor SequenceHead::forward(const Tensor& features, const std::vector<Tensor>& conds,
                             bool training, std::mt19937_64& rng) const {
  if ((int)conds.size() > 0 && cond_dim_ == 0)
    throw std::invalid_argument("sequence head built unconditioned got conditions");
  Tensor h = embed_.forward(features);
  if (type_ == HeadType::kTransformer) {
    h = embed_ln_.forward(h);
    if (use_pe_) h = ops::add(h, ops::positional_encoding(h.dim(1), embed_dim_));
    for (const auto& blk : blocks_) h = blk.forward(h, training, rng);
    if (!conds.empty()) {
      std::vector<Tensor> cat{h};
      cat.insert(cat.end(), conds.begin(), conds.end());
      h = cond_ln_.forward(cond_proj_.forward(ops::concat_last(cat)));
      h = final_block_.forward(h, training, rng);
    }
  } else {
    h = gru1_.forward(h);
    if (!conds.empty()) {
      std::vector<Tensor> cat{h};
      cat.insert(cat.end(), conds.begin(), conds.end());
      h = gru2_.forward(ops::concat_last(cat));
    }
  }
  return ops::sigmoid(out_.forward(h));
}

void SequenceHead::collect(nn::ParamRefs& out) {
  embed_.collect(out);
  if (type_ == HeadType::kTransformer) {
    embed_ln_.collect(out);
    for (auto& b : blocks_) b.collect(out);
    if (cond_dim_ > 0) {
      cond_proj_.collect(out);
      cond_ln_.collect(out);
      final_block_.collect(out);
    }
  } else {
    gru1_.collect(out);
    if (cond_dim_ > 0) gru2_.collect(out);
  }
  out_.collect(out);
}

size_t SequenceHead::param_count() const {
  size_t n = embed_.param_count() + out_.param_count();
  if (type_ == HeadType::kTransformer) {
    n += embed_ln_.param_count();
    for (const auto& b : blocks_) n += b.param_count();
    if (cond_dim_ > 0)
      n += cond_proj_.param_count() + cond_ln_.param_count() +
           final_block_.param_count();
  } else {
    n += gru1_.param_count();
    if (cond_dim_ > 0) n += gru2_.param_count();
  }
  return n;
}

// ---- TranscriptionNet -------------------------------------------------------

TranscriptionNet::TranscriptionNet(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const int feat = cfg_.feature_dim();
  const int cond_onset = cfg_.conditioning ? cfg_.pitches : 0;
  const int cond_frame = cfg_.conditioning ? 2 * cfg_.pitches : 0;
  onset_.conv = nn::ConvStack("onset.conv", cfg_.conv_channels, cfg_.conv_dropout, rng);
  onset_.head = SequenceHead("onset.head", cfg_.head_onset, feat, cond_onset, cfg_, rng);
  offset_.conv = nn::ConvStack("offset.conv", cfg_.conv_channels, cfg_.conv_dropout, rng);
  offset_.head = SequenceHead("offset.head", cfg_.head_offset, feat, 0, cfg_, rng);
  frame_.conv = nn::ConvStack("frame.conv", cfg_.conv_channels, cfg_.conv_dropout, rng);
  frame_.head = SequenceHead("frame.head", cfg_.head_frame, feat, cond_frame, cfg_, rng);
  velocity_.conv =
      nn::ConvStack("velocity.conv", cfg_.conv_channels, cfg_.conv_dropout, rng);
  velocity_.head =
      SequenceHead("velocity.head", cfg_.head_velocity, feat, 0, cfg_, rng);
}

Tensor TranscriptionNet::branch_features(Branch& b, const Tensor& x4, bool training,
                                         std::mt19937_64& rng) {
  Tensor h = b.conv.forward(x4, training, rng);  // [B,T,14,C]
  return ops::reshape(h, {h.dim(0), h.dim(1), h.dim(2) * h.dim(3)});
}

OutputRolls TranscriptionNet::forward(const Tensor& spec, bool training,
                                      std::mt19937_64& rng) {
  if (spec.rank() != 3 || spec.dim(2) != cfg_.n_mels)
    throw std::invalid_argument("forward: expected [B,T," +
                                std::to_string(cfg_.n_mels) + "] input, got " +
                                shape_str(spec.shape()));
  Tensor x4 = ops::reshape(spec, {spec.dim(0), spec.dim(1), spec.dim(2), 1});

  OutputRolls out;
  // velocity and offset run unconditioned, then feed the other branches
  {
    Tensor f = branch_features(velocity_, x4, training, rng);
    out.velocity = velocity_.head.forward(f, {}, training, rng);
  }
  {
    Tensor f = branch_features(offset_, x4, training, rng);
    out.offset = offset_.head.forward(f, {}, training, rng);
  }
  {
    Tensor f = branch_features(onset_, x4, training, rng);
    std::vector<Tensor> conds;
    if (cfg_.conditioning)
      conds.push_back(cfg_.detach_conditioning ? out.velocity.detach() : out.velocity);
    out.onset = onset_.head.forward(f, conds, training, rng);
  }
  {
    Tensor f = branch_features(frame_, x4, training, rng);
    std::vector<Tensor> conds;
    if (cfg_.conditioning) {
      conds.push_back(cfg_.detach_conditioning ? out.onset.detach() : out.onset);
      conds.push_back(cfg_.detach_conditioning ? out.offset.detach() : out.offset);
    }
    out.frame = frame_.head.forward(f, conds, training, rng);
  }
  return out;
}

nn::ParamRefs TranscriptionNet::parameters() {
  nn::ParamRefs refs;
  for (Branch* b : {&onset_, &offset_, &frame_, &velocity_}) {
    b->conv.collect(refs);
    b->head.collect(refs);
  }
  return refs;
}

nn::BufferRefs TranscriptionNet::buffers() {
  nn::BufferRefs refs;
  for (Branch* b : {&onset_, &offset_, &frame_, &velocity_}) b->conv.collect_buffers(refs);
  return refs;
}

void TranscriptionNet::mark_stats_loaded() {
  for (Branch* b : {&onset_, &offset_, &frame_, &velocity_})
    b->conv.set_stats_initialized();
}

size_t TranscriptionNet::param_count() const {
  size_t n = 0;
  for (const Branch* b : {&onset_, &offset_, &frame_, &velocity_})
    n += b->conv.param_count() + b->head.param_count();
  return n;
}

}  // namespace pianotx
