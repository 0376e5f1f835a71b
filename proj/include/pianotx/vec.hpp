#pragma once

// Small SIMD helpers built on the GCC/Clang vector extension. Every helper
// preserves per-element accumulation order, so vectorized kernels produce
// bit-identical results to their scalar counterparts looping over lanes.

#if defined(__GNUC__) || defined(__clang__)
#define PIANOTX_VEC_EXT 1
#else
#define PIANOTX_VEC_EXT 0
#endif

namespace pianotx {

#if PIANOTX_VEC_EXT

typedef double v8d __attribute__((vector_size(64)));
typedef double v8d_u __attribute__((vector_size(64), aligned(8)));
typedef double v4d __attribute__((vector_size(32)));
typedef double v4d_u __attribute__((vector_size(32), aligned(8)));

inline v8d v8_load(const double* p) { return *reinterpret_cast<const v8d_u*>(p); }
inline void v8_store(double* p, v8d v) { *reinterpret_cast<v8d_u*>(p) = v; }
inline v8d v8_set(double x) { return v8d{} + x; }

inline v4d v4_load(const double* p) { return *reinterpret_cast<const v4d_u*>(p); }
inline void v4_store(double* p, v4d v) { *reinterpret_cast<v4d_u*>(p) = v; }
inline v4d v4_set(double x) { return v4d{} + x; }

#endif

}  // namespace pianotx
