#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <new>
#include <utility>

namespace captool::detail {

FftBuffer::FftBuffer(std::size_t bytes) : ptr_(fftw_malloc(bytes)) {
  if (!ptr_) throw std::bad_alloc();
}
FftBuffer::~FftBuffer() { fftw_free(ptr_); }

std::size_t complex_size(int dim, std::size_t p) {
  std::size_t n = p / 2 + 1;
  for (int d = 1; d < dim; ++d) n *= p;
  return n;
}

namespace {

struct PlanPair {
  fftw_plan forward = nullptr;
  fftw_plan inverse = nullptr;
};

std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

const PlanPair& plans_for(int dim, std::size_t p) {
  static std::map<std::pair<int, std::size_t>, PlanPair> cache;
  std::lock_guard lock(planner_mutex());
  auto key = std::make_pair(dim, p);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  std::size_t real_n = 1;
  for (int d = 0; d < dim; ++d) real_n *= p;
  FftBuffer r(real_n * sizeof(double));
  FftBuffer c(complex_size(dim, p) * sizeof(fftw_complex));
  int dims[3] = {static_cast<int>(p), static_cast<int>(p), static_cast<int>(p)};
  PlanPair pp;
  pp.forward = fftw_plan_dft_r2c(dim, dims, static_cast<double*>(r.data()),
                                 static_cast<fftw_complex*>(c.data()), FFTW_ESTIMATE);
  pp.inverse = fftw_plan_dft_c2r(dim, dims, static_cast<fftw_complex*>(c.data()),
                                 static_cast<double*>(r.data()), FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
  return cache.emplace(key, pp).first->second;
}

}  // namespace

void forward_r2c(int dim, std::size_t p, double* in, std::complex<double>* out) {
  fftw_execute_dft_r2c(plans_for(dim, p).forward, in, reinterpret_cast<fftw_complex*>(out));
}

void inverse_c2r(int dim, std::size_t p, std::complex<double>* in, double* out) {
  fftw_execute_dft_c2r(plans_for(dim, p).inverse, reinterpret_cast<fftw_complex*>(in), out);
}

}  // namespace captool::detail
