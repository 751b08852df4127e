#pragma once

// Dense and scan kernels shared by the autodiff ops and the LRU encoder.
//
// Every kernel has a plain serial version in `kernels::serial`, kept as the
// reference for tests and benchmarks, and an OpenMP version in
// `kernels::parallel`. The unqualified `kernels::` entry points dispatch to the
// parallel versions. All matrices are row-major.

#include <complex>
#include <cstddef>
#include <span>

namespace tmepsr::kernels {

using cplx = std::complex<double>;

namespace serial {
// C[m×n] (+)= A[m×k] · B[k×n]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
// C[m×n] (+)= A[m×k] · B[n×k]ᵀ
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
// C[m×n] (+)= A[k×m]ᵀ · B[k×n]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);

// s_i = λ ⊙ s_{i-1} + u_i over n steps and k channels, s_{-1} = 0.
void linear_scan(std::span<const cplx> lambda, std::span<const cplx> u, std::span<cplx> s, std::size_t n);
}  // namespace serial

namespace parallel {
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate);

// Same recurrence as serial::linear_scan, computed as a work-efficient
// (Blelloch) up-sweep/down-sweep over the associative pair operator
//   (a₁, b₁) ∘ (a₂, b₂) = (a₁a₂, b₁a₂ + b₂)
// applied to the per-step pairs (λ, u_i). Depth is O(log n); each tree level
// runs as one OpenMP parallel loop.
void linear_scan(std::span<const cplx> lambda, std::span<const cplx> u, std::span<cplx> s, std::size_t n);
}  // namespace parallel

using parallel::gemm_nn;
using parallel::gemm_nt;
using parallel::gemm_tn;

// Caps OpenMP worker count from TMEPSR_THREADS when set. Returns the cap in effect.
int configure_threads_from_env();

}  // namespace tmepsr::kernels
