#include "cross/kernels/gemm.h"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cross::kernels {
namespace {

constexpr std::size_t kTile = 4;
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

// Rows [tile_begin*4, tile_end*4) of c = a*b, clipped to n.
void nn_tiles(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
              std::size_t m, bool accumulate, std::size_t tile_begin, std::size_t tile_end) {
  for (std::size_t t = tile_begin; t < tile_end; ++t) {
    const std::size_t i = t * kTile;
    if (i + kTile <= n) {
      double* c0 = c + (i + 0) * m;
      double* c1 = c + (i + 1) * m;
      double* c2 = c + (i + 2) * m;
      double* c3 = c + (i + 3) * m;
      if (!accumulate) {
        std::fill(c0, c0 + kTile * m, 0.0);
      }
      const double* a0 = a + (i + 0) * k;
      const double* a1 = a + (i + 1) * k;
      const double* a2 = a + (i + 2) * k;
      const double* a3 = a + (i + 3) * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
        if (v0 == 0.0 && v1 == 0.0 && v2 == 0.0 && v3 == 0.0) continue;
        const double* bp = b + p * m;
        for (std::size_t j = 0; j < m; ++j) {
          const double bj = bp[j];
          c0[j] += v0 * bj;
          c1[j] += v1 * bj;
          c2[j] += v2 * bj;
          c3[j] += v3 * bj;
        }
      }
    } else {
      for (std::size_t r = i; r < n; ++r) {
        double* cr = c + r * m;
        if (!accumulate) std::fill(cr, cr + m, 0.0);
        const double* ar = a + r * k;
        for (std::size_t p = 0; p < k; ++p) {
          const double v = ar[p];
          if (v == 0.0) continue;
          const double* bp = b + p * m;
          for (std::size_t j = 0; j < m; ++j) cr[j] += v * bp[j];
        }
      }
    }
  }
}

// Rows [tile_begin*4, tile_end*4) of c = a^T*b, clipped to k.
void tn_tiles(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
              std::size_t m, bool accumulate, std::size_t tile_begin, std::size_t tile_end) {
  for (std::size_t t = tile_begin; t < tile_end; ++t) {
    const std::size_t i = t * kTile;
    const std::size_t rows = std::min(kTile, k - i);
    double* ci = c + i * m;
    if (!accumulate) std::fill(ci, ci + rows * m, 0.0);
    if (rows == kTile) {
      double* c0 = ci;
      double* c1 = ci + m;
      double* c2 = ci + 2 * m;
      double* c3 = ci + 3 * m;
      for (std::size_t r = 0; r < n; ++r) {
        const double* ar = a + r * k + i;
        const double v0 = ar[0], v1 = ar[1], v2 = ar[2], v3 = ar[3];
        if (v0 == 0.0 && v1 == 0.0 && v2 == 0.0 && v3 == 0.0) continue;
        const double* br = b + r * m;
        for (std::size_t j = 0; j < m; ++j) {
          const double bj = br[j];
          c0[j] += v0 * bj;
          c1[j] += v1 * bj;
          c2[j] += v2 * bj;
          c3[j] += v3 * bj;
        }
      }
    } else {
      for (std::size_t q = 0; q < rows; ++q) {
        double* cq = ci + q * m;
        for (std::size_t r = 0; r < n; ++r) {
          const double v = a[r * k + i + q];
          if (v == 0.0) continue;
          const double* br = b + r * m;
          for (std::size_t j = 0; j < m; ++j) cq[j] += v * br[j];
        }
      }
    }
  }
}

std::vector<double> transpose(const double* b, std::size_t rows, std::size_t cols) {
  std::vector<double> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t q = 0; q < cols; ++q) out[q * rows + r] = b[r * cols + q];
  return out;
}

std::size_t tiles(std::size_t rows) { return (rows + kTile - 1) / kTile; }

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate) {
  nn_tiles(a, b, c, n, k, m, accumulate, 0, tiles(n));
}

void gemm_nn_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                      std::size_t m, bool accumulate) {
  const auto count = static_cast<long long>(tiles(n));
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < count; ++t) {
    nn_tiles(a, b, c, n, k, m, accumulate, static_cast<std::size_t>(t),
             static_cast<std::size_t>(t) + 1);
  }
}

void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate) {
  tn_tiles(a, b, c, n, k, m, accumulate, 0, tiles(k));
}

void gemm_tn_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                      std::size_t m, bool accumulate) {
  const auto count = static_cast<long long>(tiles(k));
#pragma omp parallel for schedule(static)
  for (long long t = 0; t < count; ++t) {
    tn_tiles(a, b, c, n, k, m, accumulate, static_cast<std::size_t>(t),
             static_cast<std::size_t>(t) + 1);
  }
}

void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                    std::size_t k, bool accumulate) {
  const auto bt = transpose(b, k, m);
  gemm_nn_serial(a, bt.data(), c, n, m, k, accumulate);
}

void gemm_nt_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                      std::size_t k, bool accumulate) {
  const auto bt = transpose(b, k, m);
  gemm_nn_parallel(a, bt.data(), c, n, m, k, accumulate);
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  if (max_threads() > 1 && n * k * m >= kParallelWork && n >= 2 * kTile) {
    gemm_nn_parallel(a, b, c, n, k, m, accumulate);
  } else {
    gemm_nn_serial(a, b, c, n, k, m, accumulate);
  }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate) {
  if (max_threads() > 1 && n * k * m >= kParallelWork && k >= 2 * kTile) {
    gemm_tn_parallel(a, b, c, n, k, m, accumulate);
  } else {
    gemm_tn_serial(a, b, c, n, k, m, accumulate);
  }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k, bool accumulate) {
  if (max_threads() > 1 && n * k * m >= kParallelWork && n >= 2 * kTile) {
    gemm_nt_parallel(a, b, c, n, m, k, accumulate);
  } else {
    gemm_nt_serial(a, b, c, n, m, k, accumulate);
  }
}

}  // namespace cross::kernels
