#pragma once

#include <cstddef>

// Dense row-major GEMM kernels. Every kernel comes in a serial reference form
// and an OpenMP form. The OpenMP form partitions output rows only, so each
// output element is reduced in the same order as the serial form and the two
// agree bit-for-bit.
namespace cross::kernels {

// c[n x m] (+)= a[n x k] * b[k x m]
void gemm_nn_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate);
void gemm_nn_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                      std::size_t m, bool accumulate);

// c[k x m] (+)= a[n x k]^T * b[n x m]
void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                    std::size_t m, bool accumulate);
void gemm_tn_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                      std::size_t m, bool accumulate);

// c[n x k] (+)= a[n x m] * b[k x m]^T
void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                    std::size_t k, bool accumulate);
void gemm_nt_parallel(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                      std::size_t k, bool accumulate);

// Dispatchers: pick the parallel kernel when the problem is large enough and
// more than one thread is available.
void gemm_nn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
             std::size_t m, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
             std::size_t k, bool accumulate);

int max_threads();

}  // namespace cross::kernels
