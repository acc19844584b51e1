#pragma once

// Dense double-precision kernels used by the likelihood inner loops.
//
// Every kernel exists as a scalar reference implementation plus optional
// SIMD variants (AVX2+FMA on x86-64, NEON on AArch64). The active variant is
// chosen once per process from the CPU feature set; the environment variable
// SFPL_SIMD=scalar|avx2|neon forces a particular table (falling back to
// scalar when the request is unavailable). Results across variants agree to
// rounding only; within a variant they are bitwise deterministic.

#include <cstddef>
#include <string_view>

namespace sfpl::kernels {

enum class Isa { Scalar, Avx2, Neon };

struct KernelTable {
  Isa isa;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

const KernelTable& active();
std::string_view isa_name(Isa isa);

// Composite column-major operations. `a` is rows x cols with leading
// dimension `rows`.

// y = A x  (y has `rows` entries, overwritten)
void gemv(const KernelTable& kt, const double* a, std::size_t rows, std::size_t cols,
          const double* x, double* y);
// y = A^T x  (y has `cols` entries, overwritten)
void gemv_t(const KernelTable& kt, const double* a, std::size_t rows, std::size_t cols,
            const double* x, double* y);
// out = X^T S X for symmetric S (rows x rows); out is cols x cols column-major.
// `scratch` must hold `rows` doubles.
void sandwich(const KernelTable& kt, const double* x, std::size_t rows, std::size_t cols,
              const double* s, double* out, double* scratch);

inline void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x,
                 double* y) {
  gemv(active(), a, rows, cols, x, y);
}
inline void gemv_t(const double* a, std::size_t rows, std::size_t cols, const double* x,
                   double* y) {
  gemv_t(active(), a, rows, cols, x, y);
}
inline void sandwich(const double* x, std::size_t rows, std::size_t cols, const double* s,
                     double* out, double* scratch) {
  sandwich(active(), x, rows, cols, s, out, scratch);
}

}  // namespace sfpl::kernels
