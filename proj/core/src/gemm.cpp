#include "vdepth/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace vdepth {
namespace {

// Register tile: MR rows x (2 * lanes) columns.
template <typename T>
struct Simd;

#if defined(__AVX512F__)
template <>
struct Simd<float> {
  using V = __m512;
  static constexpr std::size_t lanes = 16;
  static V zero() { return _mm512_setzero_ps(); }
  static V load(const float* p) { return _mm512_loadu_ps(p); }
  static V bcast(float v) { return _mm512_set1_ps(v); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_ps(a, b, c); }
  static void store(float* p, V v) { _mm512_storeu_ps(p, v); }
};
template <>
struct Simd<double> {
  using V = __m512d;
  static constexpr std::size_t lanes = 8;
  static V zero() { return _mm512_setzero_pd(); }
  static V load(const double* p) { return _mm512_loadu_pd(p); }
  static V bcast(double v) { return _mm512_set1_pd(v); }
  static V fma(V a, V b, V c) { return _mm512_fmadd_pd(a, b, c); }
  static void store(double* p, V v) { _mm512_storeu_pd(p, v); }
};
#elif defined(__AVX2__) && defined(__FMA__)
template <>
struct Simd<float> {
  using V = __m256;
  static constexpr std::size_t lanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const float* p) { return _mm256_loadu_ps(p); }
  static V bcast(float v) { return _mm256_set1_ps(v); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
};
template <>
struct Simd<double> {
  using V = __m256d;
  static constexpr std::size_t lanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const double* p) { return _mm256_loadu_pd(p); }
  static V bcast(double v) { return _mm256_set1_pd(v); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
};
#else
template <typename T>
struct ScalarSimd {
  using V = T;
  static constexpr std::size_t lanes = 1;
  static V zero() { return T{0}; }
  static V load(const T* p) { return *p; }
  static V bcast(T v) { return v; }
  static V fma(V a, V b, V c) { return std::fma(a, b, c); }
  static void store(T* p, V v) { *p = v; }
};
template <>
struct Simd<float> : ScalarSimd<float> {};
template <>
struct Simd<double> : ScalarSimd<double> {};
#endif

constexpr std::size_t kMr = 8;
constexpr std::size_t kKc = 256;
template <typename T>
constexpr std::size_t kNr = 2 * Simd<T>::lanes;

// Accumulates one MR x NR tile over k steps; `acc` holds the running sums.
template <typename T>
void micro_kernel(std::size_t k, const T* a, const T* b, bool first, T* acc) {
  using S = Simd<T>;
  constexpr std::size_t L = S::lanes;
  typename S::V c0[kMr], c1[kMr];
  for (std::size_t r = 0; r < kMr; ++r) {
    c0[r] = first ? S::zero() : S::load(acc + r * 2 * L);
    c1[r] = first ? S::zero() : S::load(acc + r * 2 * L + L);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const auto b0 = S::load(b);
    const auto b1 = S::load(b + L);
    for (std::size_t r = 0; r < kMr; ++r) {
      const auto ar = S::bcast(a[r]);
      c0[r] = S::fma(ar, b0, c0[r]);
      c1[r] = S::fma(ar, b1, c1[r]);
    }
    a += kMr;
    b += 2 * L;
  }
  for (std::size_t r = 0; r < kMr; ++r) {
    S::store(acc + r * 2 * L, c0[r]);
    S::store(acc + r * 2 * L + L, c1[r]);
  }
}

template <typename T>
void pack_rhs(bool trans, std::size_t k0, std::size_t kb, std::size_t j0, std::size_t nb, const T* b, std::size_t ldb,
              T* dst) {
  constexpr std::size_t nr = kNr<T>;
  for (std::size_t jp = 0; jp < nb; jp += nr) {
    const std::size_t w = std::min(nr, nb - jp);
    T* panel = dst + jp * kb;
    if (!trans) {
      for (std::size_t p = 0; p < kb; ++p) {
        const T* src = b + (k0 + p) * ldb + j0 + jp;
        T* row = panel + p * nr;
        std::memcpy(row, src, w * sizeof(T));
        std::fill(row + w, row + nr, T{0});
      }
    } else {
      for (std::size_t p = 0; p < kb; ++p) {
        T* row = panel + p * nr;
        for (std::size_t c = 0; c < w; ++c) row[c] = b[(j0 + jp + c) * ldb + k0 + p];
        std::fill(row + w, row + nr, T{0});
      }
    }
  }
}

}  // namespace

template <typename T>
PackedLhs<T>::PackedLhs(bool trans, std::size_t m, std::size_t k, const T* a, std::size_t lda)
    : m_(m), k_(k), panels_((m + kMr - 1) / kMr), panel_stride_(kMr * k), data_(panels_ * kMr * k, T{0}) {
  for (std::size_t ip = 0; ip < panels_; ++ip) {
    T* panel = data_.data() + ip * panel_stride_;
    const std::size_t rows = std::min(kMr, m - ip * kMr);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = ip * kMr + r;
      if (!trans) {
        const T* src = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) panel[p * kMr + r] = src[p];
      } else {
        for (std::size_t p = 0; p < k; ++p) panel[p * kMr + r] = a[p * lda + i];
      }
    }
  }
}

template <typename T>
void gemm_packed(const PackedLhs<T>& a, bool trans_b, std::size_t n, T alpha, const T* b, std::size_t ldb, T beta,
                 T* c, std::size_t ldc) {
  constexpr std::size_t nr = kNr<T>;
  constexpr std::size_t tile = kMr * nr;
  const std::size_t m = a.rows();
  const std::size_t k = a.depth();
  if (m == 0 || n == 0) return;
  if (k == 0) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] = beta == T{0} ? T{0} : beta * c[i * ldc + j];
    return;
  }

  // Depth is split into blocks of kKc; each tile keeps its running sums between
  // blocks so every element is still one sequential fused multiply-add chain.
  const std::size_t kc = (k + (k + kKc - 1) / kKc - 1) / ((k + kKc - 1) / kKc);
  const std::size_t panels = a.panels();
  const std::size_t b_budget = (512 * 1024) / sizeof(T);
  const std::size_t acc_budget = (1024 * 1024) / sizeof(T);
  std::size_t nc = std::min(b_budget / kc, acc_budget / (panels * kMr)) / nr * nr;
  nc = std::clamp<std::size_t>(nc, nr, (n + nr - 1) / nr * nr);

  thread_local std::vector<T> packed_b;
  thread_local std::vector<T> acc;
  packed_b.resize(nc * kc);
  acc.resize(panels * (nc / nr) * tile);

  for (std::size_t j0 = 0; j0 < n; j0 += nc) {
    const std::size_t nb = std::min(nc, n - j0);
    const std::size_t jpanels = (nb + nr - 1) / nr;
    for (std::size_t k0 = 0; k0 < k; k0 += kc) {
      const std::size_t kb = std::min(kc, k - k0);
      pack_rhs(trans_b, k0, kb, j0, nb, b, ldb, packed_b.data());
      for (std::size_t ip = 0; ip < panels; ++ip) {
        const T* ap = a.panel(ip) + k0 * kMr;
        for (std::size_t jp = 0; jp < jpanels; ++jp)
          micro_kernel<T>(kb, ap, packed_b.data() + jp * nr * kb, k0 == 0, acc.data() + (ip * jpanels + jp) * tile);
      }
    }
    for (std::size_t ip = 0; ip < panels; ++ip) {
      const std::size_t rows = std::min(kMr, m - ip * kMr);
      for (std::size_t jp = 0; jp < jpanels; ++jp) {
        const std::size_t w = std::min(nr, nb - jp * nr);
        const T* t = acc.data() + (ip * jpanels + jp) * tile;
        for (std::size_t r = 0; r < rows; ++r) {
          T* dst = c + (ip * kMr + r) * ldc + j0 + jp * nr;
          const T* src = t + r * nr;
          if (beta == T{0}) {
            if (alpha == T{1}) {
              std::memcpy(dst, src, w * sizeof(T));
            } else {
              for (std::size_t q = 0; q < w; ++q) dst[q] = alpha * src[q];
            }
          } else {
            for (std::size_t q = 0; q < w; ++q) dst[q] = alpha * src[q] + beta * dst[q];
          }
        }
      }
    }
  }
}

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  PackedLhs<T> packed(trans_a, m, k, a, lda);
  gemm_packed(packed, trans_b, n, alpha, b, ldb, beta, c, ldc);
}

template class PackedLhs<float>;
template class PackedLhs<double>;
template void gemm_packed<float>(const PackedLhs<float>&, bool, std::size_t, float, const float*, std::size_t, float,
                                 float*, std::size_t);
template void gemm_packed<double>(const PackedLhs<double>&, bool, std::size_t, double, const double*, std::size_t,
                                  double, double*, std::size_t);
template void gemm<float>(bool, bool, std::size_t, std::size_t, std::size_t, float, const float*, std::size_t,
                          const float*, std::size_t, float, float*, std::size_t);
template void gemm<double>(bool, bool, std::size_t, std::size_t, std::size_t, double, const double*, std::size_t,
                           const double*, std::size_t, double, double*, std::size_t);

}  // namespace vdepth
