#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace captool::detail {

/// Owning buffer allocated with fftw_malloc so that every buffer has the
/// alignment the cached plans were made with.
class FftBuffer {
 public:
  explicit FftBuffer(std::size_t bytes);
  ~FftBuffer();
  FftBuffer(const FftBuffer&) = delete;
  FftBuffer& operator=(const FftBuffer&) = delete;
  void* data() noexcept { return ptr_; }

 private:
  void* ptr_;
};

/// Real <-> complex transforms on the cube P^dim. Plans are created once per
/// (dim, P) under a lock; execution is reentrant.
std::size_t complex_size(int dim, std::size_t p);
void forward_r2c(int dim, std::size_t p, double* in, std::complex<double>* out);
/// Unnormalised inverse; destroys `in`.
void inverse_c2r(int dim, std::size_t p, std::complex<double>* in, double* out);

}  // namespace captool::detail
