#include <cstdlib>
#include <string>

#include "sfpl/kernels.hpp"

namespace sfpl::kernels {
namespace {

const KernelTable& select_table() {
  const char* env = std::getenv("SFPL_SIMD");
  const std::string request = env ? env : "auto";
  if (request == "scalar") return scalar_table();
  if (request == "avx2") return avx2_table() ? *avx2_table() : scalar_table();
  if (request == "neon") return neon_table() ? *neon_table() : scalar_table();
  if (const KernelTable* t = avx2_table()) return *t;
  if (const KernelTable* t = neon_table()) return *t;
  return scalar_table();
}

}  // namespace

const KernelTable& active() {
  static const KernelTable& table = select_table();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

void gemv(const KernelTable& kt, const double* a, std::size_t rows, std::size_t cols,
          const double* x, double* y) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = 0.0;
  for (std::size_t c = 0; c < cols; ++c) {
    if (x[c] != 0.0) kt.axpy(x[c], a + c * rows, y, rows);
  }
}

void gemv_t(const KernelTable& kt, const double* a, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  for (std::size_t c = 0; c < cols; ++c) y[c] = kt.dot(a + c * rows, x, rows);
}

void sandwich(const KernelTable& kt, const double* x, std::size_t rows, std::size_t cols,
              const double* s, double* out, double* scratch) {
  for (std::size_t c = 0; c < cols; ++c) {
    // scratch = S x_c, exploiting column-major S
    gemv(kt, s, rows, rows, x + c * rows, scratch);
    for (std::size_t r = c; r < cols; ++r) {
      const double v = kt.dot(x + r * rows, scratch, rows);
      out[c * cols + r] = v;
      out[r * cols + c] = v;
    }
  }
}

}  // namespace sfpl::kernels
