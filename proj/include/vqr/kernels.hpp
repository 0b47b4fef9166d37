#pragma once

// Dense inner loops used by the autodiff engine and the quantizer.
//
// Each kernel has a serial reference in `serial::` and an OpenMP variant in
// `omp::`. Both accumulate every output element in the same left-to-right
// order, so the two are bitwise interchangeable; the dispatching wrappers at
// the bottom pick one based on the configured worker count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace vqr::kernels {

namespace serial {

/// c[n×m] = a[n×k] · b[k×m], row-major.
template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
            std::size_t k, std::size_t m);

/// c[n×m] = a[n×k] · b[m×k]ᵀ.
template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m);

/// c[k×m] = a[n×k]ᵀ · b[n×m].
template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m);

/// For each of the n query rows (dimension d) pick the codebook row
/// (K rows) with the smallest squared Euclidean distance; ties go to the
/// lowest index.
template <typename T>
void nearest_code(std::span<const T> queries, std::span<const T> codebook,
                  std::span<std::int32_t> out, std::size_t n, std::size_t num_codes,
                  std::size_t d);

}  // namespace serial

namespace omp {

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
            std::size_t k, std::size_t m);

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m);

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m);

template <typename T>
void nearest_code(std::span<const T> queries, std::span<const T> codebook,
                  std::span<std::int32_t> out, std::size_t n, std::size_t num_codes,
                  std::size_t d);

}  // namespace omp

/// Worker cap for the dispatching kernels. Initialized from the
/// VQROBUST_THREADS environment variable (default 1).
int worker_count();
void set_worker_count(int workers);

template <typename T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
            std::size_t k, std::size_t m);

template <typename T>
void matmul_nt(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m);

template <typename T>
void matmul_tn(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t n,
               std::size_t k, std::size_t m);

template <typename T>
void nearest_code(std::span<const T> queries, std::span<const T> codebook,
                  std::span<std::int32_t> out, std::size_t n, std::size_t num_codes,
                  std::size_t d);

}  // namespace vqr::kernels
