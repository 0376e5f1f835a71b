#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pianotx/kernels.hpp"
#include "pianotx/ops.hpp"

namespace pianotx::ops {

using autograd::Node;
using autograd::make_node;

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

bool is_trailing_shape(const Shape& big, const Shape& small) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const size_t n = a.numel(), m = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  if (a.shape() == b.shape()) {
    const double* bp = b.ptr();
    for (size_t i = 0; i < n; ++i) out[i] += bp[i];
    return make_node(a.shape(), std::move(out), {a.node_, b.node_}, [](Node& node) {
      const auto& g = node.grad;
      for (int pi = 0; pi < 2; ++pi) {
        Node& p = *node.parents[pi];
        if (!p.requires_grad) continue;
        auto& pg = p.ensure_grad();
        for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
      }
    });
  }
  if (!is_trailing_shape(a.shape(), b.shape()))
    throw std::invalid_argument("add: operand shapes not broadcastable " +
                                shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const double* bp = b.ptr();
  for (size_t i = 0; i < n; ++i) out[i] += bp[i % m];
  return make_node(a.shape(), std::move(out), {a.node_, b.node_}, [m](Node& node) {
    const auto& g = node.grad;
    if (node.parents[0]->requires_grad) {
      auto& pg = node.parents[0]->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
    if (node.parents[1]->requires_grad) {
      auto& pg = node.parents[1]->ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) pg[i % m] += g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const size_t n = a.numel();
  std::vector<double> out(n);
  const double* ap = a.ptr();
  const double* bp = b.ptr();
  for (size_t i = 0; i < n; ++i) out[i] = ap[i] * bp[i];
  return make_node(a.shape(), std::move(out), {a.node_, b.node_}, [](Node& node) {
    const auto& g = node.grad;
    Node& pa = *node.parents[0];
    Node& pb = *node.parents[1];
    if (pa.requires_grad) {
      auto& pg = pa.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& pg = pb.ensure_grad();
      for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i] * pa.value[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  const size_t n = x.numel();
  std::vector<double> out(n);
  const double* xp = x.ptr();
  for (size_t i = 0; i < n; ++i) out[i] = xp[i] * c;
  return make_node(x.shape(), std::move(out), {x.node_}, [c](Node& node) {
    auto& pg = node.parents[0]->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) pg[i] += node.grad[i] * c;
  });
}

Tensor sum(const Tensor& x) {
  double s = kernels::deterministic_sum(x.ptr(), x.numel());
  return make_node({1}, {s}, {x.node_}, [](Node& node) {
    const double g = node.grad[0];
    auto& pg = node.parents[0]->ensure_grad();
    for (double& v : pg) v += g;
  });
}

Tensor relu(const Tensor& x) {
  const size_t n = x.numel();
  std::vector<double> out(n);
  const double* xp = x.ptr();
  for (size_t i = 0; i < n; ++i) out[i] = xp[i] > 0.0 ? xp[i] : 0.0;
  return make_node(x.shape(), std::move(out), {x.node_}, [](Node& node) {
    auto& pg = node.parents[0]->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i)
      if (node.value[i] > 0.0) pg[i] += node.grad[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  const size_t n = x.numel();
  std::vector<double> out(n);
  const double* xp = x.ptr();
  for (size_t i = 0; i < n; ++i) out[i] = stable_sigmoid(xp[i]);
  return make_node(x.shape(), std::move(out), {x.node_}, [](Node& node) {
    auto& pg = node.parents[0]->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) {
      const double y = node.value[i];
      pg[i] += node.grad[i] * y * (1.0 - y);
    }
  });
}

Tensor softmax(const Tensor& x) {
  const int d = x.shape().back();
  if (d < 1) throw std::invalid_argument("softmax: empty last dim");
  const size_t rows = x.numel() / (size_t)d;
  std::vector<double> out(x.numel());
  const double* xp = x.ptr();
  for (size_t r = 0; r < rows; ++r) {
    const double* row = xp + r * d;
    double* o = out.data() + r * d;
    double mx = row[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int j = 0; j < d; ++j) {
      o[j] = std::exp(row[j] - mx);
      z += o[j];
    }
    const double inv = 1.0 / z;
    for (int j = 0; j < d; ++j) o[j] *= inv;
  }
  return make_node(x.shape(), std::move(out), {x.node_}, [d, rows](Node& node) {
    auto& pg = node.parents[0]->ensure_grad();
    for (size_t r = 0; r < rows; ++r) {
      const double* y = node.value.data() + r * d;
      const double* g = node.grad.data() + r * d;
      double dot = 0.0;
      for (int j = 0; j < d; ++j) dot += y[j] * g[j];
      double* pgr = pg.data() + r * d;
      for (int j = 0; j < d; ++j) pgr[j] += y[j] * (g[j] - dot);
    }
  });
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p outside [0,1)");
  if (!training || p == 0.0) return x;
  const size_t n = x.numel();
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(n);
  std::vector<double> out(n);
  const double* xp = x.ptr();
  for (size_t i = 0; i < n; ++i) {
    // 53-bit uniform draw, portable across standard libraries
    const double u = (double)(rng() >> 11) * 0x1.0p-53;
    const double mv = u < p ? 0.0 : keep_scale;
    (*mask)[i] = mv;
    out[i] = xp[i] * mv;
  }
  return make_node(x.shape(), std::move(out), {x.node_}, [mask](Node& node) {
    auto& pg = node.parents[0]->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) pg[i] += node.grad[i] * (*mask)[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw std::invalid_argument("reshape: element count mismatch");
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_node(std::move(shape), std::move(out), {x.node_}, [](Node& node) {
    auto& pg = node.parents[0]->ensure_grad();
    for (size_t i = 0; i < node.grad.size(); ++i) pg[i] += node.grad[i];
  });
}

Tensor concat_last(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_last: no inputs");
  Shape lead(xs[0].shape().begin(), xs[0].shape().end() - 1);
  int dtotal = 0;
  std::vector<int> widths;
  for (const auto& t : xs) {
    Shape l(t.shape().begin(), t.shape().end() - 1);
    if (l != lead) throw std::invalid_argument("concat_last: leading dims differ");
    widths.push_back(t.shape().back());
    dtotal += widths.back();
  }
  const size_t rows = shape_numel(lead);
  std::vector<double> out(rows * (size_t)dtotal);
  std::vector<std::shared_ptr<Node>> parents;
  int off = 0;
  for (size_t k = 0; k < xs.size(); ++k) {
    const int w = widths[k];
    const double* src = xs[k].ptr();
    for (size_t r = 0; r < rows; ++r)
      std::copy(src + r * w, src + (r + 1) * w, out.data() + r * dtotal + off);
    off += w;
    parents.push_back(xs[k].node_);
  }
  Shape oshape = lead;
  oshape.push_back(dtotal);
  return make_node(std::move(oshape), std::move(out), std::move(parents),
                   [widths, rows, dtotal](Node& node) {
                     int off = 0;
                     for (size_t k = 0; k < widths.size(); ++k) {
                       const int w = widths[k];
                       Node& p = *node.parents[k];
                       if (p.requires_grad) {
                         auto& pg = p.ensure_grad();
                         for (size_t r = 0; r < rows; ++r) {
                           const double* g = node.grad.data() + r * dtotal + off;
                           double* d = pg.data() + r * w;
                           for (int j = 0; j < w; ++j) d[j] += g[j];
                         }
                       }
                       off += w;
                     }
                   });
}

namespace {
thread_local bool t_bce_mask_empty = false;
constexpr double kBceLo = 1e-7;
constexpr double kBceHi = 1.0 - 1e-7;
}  // namespace

bool bce_last_mask_empty() { return t_bce_mask_empty; }

Tensor bce_loss(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  check_same_shape(pred, target, "bce_loss");
  if (mask.defined()) check_same_shape(pred, mask, "bce_loss(mask)");
  constexpr double lo = kBceLo, hi = kBceHi;
  const size_t n = pred.numel();
  const double* pp = pred.ptr();
  const double* tp = target.ptr();
  const double* mp = mask.defined() ? mask.ptr() : nullptr;

  double count = 0.0;
  if (mp) {
    for (size_t i = 0; i < n; ++i) count += mp[i] != 0.0 ? 1.0 : 0.0;
  } else {
    count = (double)n;
  }
  t_bce_mask_empty = count == 0.0;
  if (t_bce_mask_empty) return make_node({1}, {0.0}, {pred.node_}, [](Node&) {});

  std::vector<double> terms(n);
  for (size_t i = 0; i < n; ++i) {
    if (mp && mp[i] == 0.0) {
      terms[i] = 0.0;
      continue;
    }
    const double p = std::clamp(pp[i], lo, hi);
    terms[i] = -(tp[i] * std::log(p) + (1.0 - tp[i]) * std::log(1.0 - p));
  }
  const double loss = kernels::deterministic_sum(terms.data(), n) / count;

  auto tgt = target.node_;
  auto msk = mask.defined() ? mask.node_ : nullptr;
  return make_node({1}, {loss}, {pred.node_}, [tgt, msk, count, n](Node& node) {
    const double g = node.grad[0] / count;
    Node& p = *node.parents[0];
    if (!p.requires_grad) return;
    auto& pg = p.ensure_grad();
    const double* pp = p.value.data();
    const double* tp = tgt->value.data();
    const double* mp = msk ? msk->value.data() : nullptr;
    for (size_t i = 0; i < n; ++i) {
      if (mp && mp[i] == 0.0) continue;
      if (pp[i] < kBceLo || pp[i] > kBceHi) continue;  // clamped: zero slope
      pg[i] += g * (pp[i] - tp[i]) / (pp[i] * (1.0 - pp[i]));
    }
  });
}

Tensor positional_encoding(int t_len, int d_model) {
  if (d_model % 2 != 0)
    throw std::invalid_argument("positional_encoding: d_model must be even");
  std::vector<double> pe((size_t)t_len * d_model);
  for (int pos = 0; pos < t_len; ++pos)
    for (int i = 0; i < d_model / 2; ++i) {
      const double angle = pos * std::pow(10000.0, -2.0 * i / d_model);
      pe[(size_t)pos * d_model + 2 * i] = std::sin(angle);
      pe[(size_t)pos * d_model + 2 * i + 1] = std::cos(angle);
    }
  autograd::NoGradGuard guard;
  return Tensor::from_vector({t_len, d_model}, std::move(pe));
}

}  // namespace pianotx::ops
