#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace deepdeblur::diff::detail {

// Real 2-D FFT of a fixed H x W size in double precision, backed by FFTW.
// Plans are created once per size and cached process-wide; execution is
// thread-safe.
class RealFft2d {
 public:
  using Complex = std::complex<double>;

  static const RealFft2d& get(std::size_t rows, std::size_t cols);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t spectrum_size() const noexcept { return rows_ * (cols_ / 2 + 1); }

  std::vector<Complex> forward(const std::vector<double>& real) const;
  // Normalized inverse (divides by rows * cols).
  std::vector<double> inverse(std::vector<Complex> spectrum) const;

  RealFft2d(const RealFft2d&) = delete;
  RealFft2d& operator=(const RealFft2d&) = delete;
  ~RealFft2d();

 private:
  RealFft2d(std::size_t rows, std::size_t cols);

  std::size_t rows_;
  std::size_t cols_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

}  // namespace deepdeblur::diff::detail
