#include "vqr/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <limits>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace vqr::kernels {

namespace {

int workers_from_env() {
  const char* raw = std::getenv("VQROBUST_THREADS");
  if (raw == nullptr) return 1;
  try {
    return std::max(1, std::stoi(raw));
  } catch (...) {
    return 1;
  }
}

std::atomic<int>& worker_slot() {
  static std::atomic<int> workers{workers_from_env()};
  return workers;
}

// Row-range bodies shared by the serial and OpenMP drivers so that both run
// exactly the same arithmetic per output element.

template <typename T>
inline void matmul_row(const T* a, const T* b, T* c, std::size_t i, std::size_t k,
                       std::size_t m) {
  T* crow = c + i * m;
  std::fill(crow, crow + m, T(0));
  const T* arow = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const T av = arow[p];
    const T* brow = b + p * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
  }
}

template <typename T>
inline void matmul_nt_row(const T* a, const T* b, T* c, std::size_t i, std::size_t k,
                          std::size_t m) {
  const T* arow = a + i * k;
  for (std::size_t j = 0; j < m; ++j) {
    const T* brow = b + j * k;
    T acc = 0;
    for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
    c[i * m + j] = acc;
  }
}

// Output row `r` of aᵀ·b: accumulates over the n input rows in order.
template <typename T>
inline void matmul_tn_row(const T* a, const T* b, T* c, std::size_t r, std::size_t n,
                          std::size_t k, std::size_t m) {
  T* crow = c + r * m;
  std::fill(crow, crow + m, T(0));
  for (std::size_t i = 0; i < n; ++i) {
    const T av = a[i * k + r];
    const T* brow = b + i * m;
    for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
  }
}

template <typename T>
inline std::int32_t nearest_one(const T* q, const T* codebook, std::size_t num_codes,
                                std::size_t d) {
  std::int32_t best = 0;
  T best_dist = std::numeric_limits<T>::infinity();
  for (std::size_t c = 0; c < num_codes; ++c) {
    const T* e = codebook + c * d;
    T dist = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const T diff = q[j] - e[j];
      dist += diff * diff;
    }
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<std::int32_t>(c);
    }
  }
  return best;
}

}  // namespace

int worker_count() { return worker_slot().load(); }

void set_worker_count(int workers) { worker_slot().store(std::max(1, workers)); }

namespace serial {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
            std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) matmul_row(a.data(), b.data(), c.data(), i, k, m);
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) matmul_nt_row(a.data(), b.data(), c.data(), i, k, m);
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m) {
  for (std::size_t r = 0; r < k; ++r) matmul_tn_row(a.data(), b.data(), c.data(), r, n, k, m);
}

template <typename T>
void nearest_code(std::span<const T> queries, std::span<const T> codebook,
                  std::span<std::int32_t> out, std::size_t n, std::size_t num_codes,
                  std::size_t d) {
  for (std::size_t i = 0; i < n; ++i)
    out[i] = nearest_one(queries.data() + i * d, codebook.data(), num_codes, d);
}

}  // namespace serial

namespace omp {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
            std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    matmul_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, m);
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    matmul_nt_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(i), k, m);
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m) {
  const auto rows = static_cast<std::ptrdiff_t>(k);
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::ptrdiff_t r = 0; r < rows; ++r)
    matmul_tn_row(a.data(), b.data(), c.data(), static_cast<std::size_t>(r), n, k, m);
}

template <typename T>
void nearest_code(std::span<const T> queries, std::span<const T> codebook,
                  std::span<std::int32_t> out, std::size_t n, std::size_t num_codes,
                  std::size_t d) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    out[static_cast<std::size_t>(i)] =
        nearest_one(queries.data() + i * static_cast<std::ptrdiff_t>(d), codebook.data(),
                    num_codes, d);
}

}  // namespace omp

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
            std::size_t k, std::size_t m) {
  if (worker_count() > 1)
    omp::matmul(a, b, c, n, k, m);
  else
    serial::matmul(a, b, c, n, k, m);
}

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m) {
  if (worker_count() > 1)
    omp::matmul_nt(a, b, c, n, k, m);
  else
    serial::matmul_nt(a, b, c, n, k, m);
}

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m) {
  if (worker_count() > 1)
    omp::matmul_tn(a, b, c, n, k, m);
  else
    serial::matmul_tn(a, b, c, n, k, m);
}

template <typename T>
void nearest_code(std::span<const T> queries, std::span<const T> codebook,
                  std::span<std::int32_t> out, std::size_t n, std::size_t num_codes,
                  std::size_t d) {
  if (worker_count() > 1)
    omp::nearest_code(queries, codebook, out, n, num_codes, d);
  else
    serial::nearest_code(queries, codebook, out, n, num_codes, d);
}

#define VQR_INSTANTIATE_KERNELS(NS, T)                                                        \
  template void NS matmul<T>(std::span<const T>, std::span<const T>, std::span<T>,            \
                             std::size_t, std::size_t, std::size_t);                          \
  template void NS matmul_nt<T>(std::span<const T>, std::span<const T>, std::span<T>,         \
                                std::size_t, std::size_t, std::size_t);                       \
  template void NS matmul_tn<T>(std::span<const T>, std::span<const T>, std::span<T>,         \
                                std::size_t, std::size_t, std::size_t);                       \
  template void NS nearest_code<T>(std::span<const T>, std::span<const T>,                    \
                                   std::span<std::int32_t>, std::size_t, std::size_t,         \
                                   std::size_t);

VQR_INSTANTIATE_KERNELS(serial::, float)
VQR_INSTANTIATE_KERNELS(serial::, double)
VQR_INSTANTIATE_KERNELS(omp::, float)
VQR_INSTANTIATE_KERNELS(omp::, double)
VQR_INSTANTIATE_KERNELS(, float)
VQR_INSTANTIATE_KERNELS(, double)

#undef VQR_INSTANTIATE_KERNELS

}  // namespace vqr::kernels
