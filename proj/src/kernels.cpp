#include "tmepsr/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstdlib>
#include <string>
#include <vector>

namespace tmepsr::kernels {

namespace {
// Below this many multiply-adds the OpenMP fork costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

void clear_or_keep(std::size_t count, double* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + count, 0.0);
}
}  // namespace

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  clear_or_keep(m * n, c, accumulate);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  clear_or_keep(m * n, c, accumulate);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  clear_or_keep(m * n, c, accumulate);
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void linear_scan(std::span<const cplx> lambda, std::span<const cplx> u, std::span<cplx> s, std::size_t n) {
  const std::size_t k = lambda.size();
  for (std::size_t j = 0; j < k; ++j) s[j] = u[j];
  for (std::size_t i = 1; i < n; ++i) {
    const cplx* prev = s.data() + (i - 1) * k;
    cplx* cur = s.data() + i * k;
    const cplx* in = u.data() + i * k;
    for (std::size_t j = 0; j < k; ++j) cur[j] = lambda[j] * prev[j] + in[j];
  }
}

}  // namespace serial

namespace parallel {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  clear_or_keep(m * n, c, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  clear_or_keep(m * n, c, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(m);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  clear_or_keep(m * n, c, accumulate);
  const auto rows = static_cast<std::ptrdiff_t>(m);
  // Parallel over output rows so no two threads write the same C row.
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double api = a[p * m + i];
      if (api == 0.0) continue;
      const double* brow = b + p * n;
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void linear_scan(std::span<const cplx> lambda, std::span<const cplx> u, std::span<cplx> s, std::size_t n) {
  const std::size_t k = lambda.size();
  if (n == 0) return;
  std::size_t padded = 1;
  while (padded < n) padded <<= 1;

  // Pair (a, b) per step and channel; padding steps are the identity (1, 0).
  std::vector<cplx> a(padded * k, cplx(1.0, 0.0));
  std::vector<cplx> b(padded * k, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      a[i * k + j] = lambda[j];
      b[i * k + j] = u[i * k + j];
    }
  }

  // Up-sweep: node r accumulates (left subtree) ∘ (right subtree).
  for (std::size_t stride = 1; stride < padded; stride <<= 1) {
    const auto pairs = static_cast<std::ptrdiff_t>(padded / (2 * stride));
#pragma omp parallel for schedule(static) if (static_cast<std::size_t>(pairs) * k > kParallelWork / 8)
    for (std::ptrdiff_t p = 0; p < pairs; ++p) {
      const std::size_t r = (static_cast<std::size_t>(p) + 1) * 2 * stride - 1;
      const std::size_t l = r - stride;
      for (std::size_t j = 0; j < k; ++j) {
        const cplx al = a[l * k + j], bl = b[l * k + j];
        cplx& ar = a[r * k + j];
        cplx& br = b[r * k + j];
        br = bl * ar + br;
        ar = al * ar;
      }
    }
  }

  // Down-sweep to an exclusive scan: root gets the identity, each left child
  // inherits its parent's prefix, each right child gets prefix ∘ left-total.
  for (std::size_t j = 0; j < k; ++j) {
    a[(padded - 1) * k + j] = cplx(1.0, 0.0);
    b[(padded - 1) * k + j] = cplx(0.0, 0.0);
  }
  for (std::size_t stride = padded / 2; stride >= 1; stride >>= 1) {
    const auto pairs = static_cast<std::ptrdiff_t>(padded / (2 * stride));
#pragma omp parallel for schedule(static) if (static_cast<std::size_t>(pairs) * k > kParallelWork / 8)
    for (std::ptrdiff_t p = 0; p < pairs; ++p) {
      const std::size_t r = (static_cast<std::size_t>(p) + 1) * 2 * stride - 1;
      const std::size_t l = r - stride;
      for (std::size_t j = 0; j < k; ++j) {
        const cplx left_a = a[l * k + j], left_b = b[l * k + j];
        const cplx pre_a = a[r * k + j], pre_b = b[r * k + j];
        a[l * k + j] = pre_a;
        b[l * k + j] = pre_b;
        a[r * k + j] = pre_a * left_a;
        b[r * k + j] = pre_b * left_a + left_b;
      }
    }
    if (stride == 1) break;
  }

  // Inclusive step: prefix_i ∘ (λ, u_i); the initial state is zero so only b matters.
  const auto steps = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k > kParallelWork / 8)
  for (std::ptrdiff_t i = 0; i < steps; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * k + j;
      s[idx] = b[idx] * lambda[j] + u[idx];
    }
  }
}

}  // namespace parallel

int configure_threads_from_env() {
  if (const char* env = std::getenv("TMEPSR_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1) omp_set_num_threads(cap);
    } catch (const std::exception&) {
      // ignored: malformed value leaves the OpenMP default
    }
  }
  return omp_get_max_threads();
}

}  // namespace tmepsr::kernels
