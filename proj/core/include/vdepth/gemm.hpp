#pragma once

#include <cstddef>
#include <vector>

namespace vdepth {

// C = alpha * op(A) * op(B) + beta * C, all row-major.
//
// Every output element is accumulated as a single fused multiply-add chain
// over k = 0..K-1, independent of M, N and of where the element sits in C.
// Splitting a product by columns (one GEMM per image instead of one per
// batch) therefore yields bit-identical results.

/// op(A) repacked into row panels; reusable across many right-hand sides.
template <typename T>
class PackedLhs {
 public:
  PackedLhs() = default;
  PackedLhs(bool trans, std::size_t m, std::size_t k, const T* a, std::size_t lda);

  std::size_t rows() const { return m_; }
  std::size_t depth() const { return k_; }
  const T* panel(std::size_t p) const { return data_.data() + p * panel_stride_; }
  std::size_t panels() const { return panels_; }

 private:
  std::size_t m_ = 0, k_ = 0, panels_ = 0, panel_stride_ = 0;
  std::vector<T> data_;
};

template <typename T>
void gemm_packed(const PackedLhs<T>& a, bool trans_b, std::size_t n, T alpha, const T* b, std::size_t ldb, T beta,
                 T* c, std::size_t ldc);

template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);

}  // namespace vdepth
