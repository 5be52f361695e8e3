#include "fft.hpp"

#include "deepdeblur/diffcore/ops.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <utility>

namespace deepdeblur::diff::detail {

namespace {

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr unsigned kPlanFlags = FFTW_ESTIMATE | FFTW_UNALIGNED;

}  // namespace

RealFft2d::RealFft2d(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
  std::vector<double> real(rows * cols);
  std::vector<Complex> spec(spectrum_size());
  auto* spec_ptr = reinterpret_cast<fftw_complex*>(spec.data());
  const int r = static_cast<int>(rows);
  const int c = static_cast<int>(cols);
  forward_plan_ = fftw_plan_dft_r2c_2d(r, c, real.data(), spec_ptr, kPlanFlags);
  inverse_plan_ = fftw_plan_dft_c2r_2d(r, c, spec_ptr, real.data(), kPlanFlags);
}

RealFft2d::~RealFft2d() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

const RealFft2d& RealFft2d::get(std::size_t rows, std::size_t cols) {
  static std::map<std::pair<std::size_t, std::size_t>, std::unique_ptr<RealFft2d>> cache;
  std::lock_guard lock(planner_mutex());
  auto& slot = cache[{rows, cols}];
  if (!slot) slot.reset(new RealFft2d(rows, cols));
  return *slot;
}

std::vector<RealFft2d::Complex> RealFft2d::forward(const std::vector<double>& real) const {
  std::vector<double> in = real;
  std::vector<Complex> out(spectrum_size());
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), in.data(),
                       reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

std::vector<double> RealFft2d::inverse(std::vector<Complex> spectrum) const {
  // c2r overwrites its input, hence the by-value parameter.
  std::vector<double> out(rows_ * cols_);
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                       reinterpret_cast<fftw_complex*>(spectrum.data()), out.data());
  const double norm = 1.0 / static_cast<double>(rows_ * cols_);
  for (double& v : out) v *= norm;
  return out;
}

}  // namespace deepdeblur::diff::detail

namespace deepdeblur::diff {

std::string fft_library_version() { return fftw_version; }

}  // namespace deepdeblur::diff
