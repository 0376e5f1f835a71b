#pragma once

#include <cstddef>
#include <vector>

namespace pianotx {

// Plain row-major matrix for rolls and spectrogram data outside the autodiff
// graph.
struct RowMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  RowMatrix() = default;
  RowMatrix(int r, int c, double fill = 0.0) : rows(r), cols(c), v((size_t)r * c, fill) {}

  double& at(int r, int c) { return v[(size_t)r * cols + c]; }
  double at(int r, int c) const { return v[(size_t)r * cols + c]; }
  double* row(int r) { return v.data() + (size_t)r * cols; }
  const double* row(int r) const { return v.data() + (size_t)r * cols; }
  size_t numel() const { return v.size(); }
};

}  // namespace pianotx
