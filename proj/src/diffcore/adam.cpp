#include "deepdeblur/diffcore/adam.hpp"

#include <cmath>

#include "deepdeblur/errors.hpp"

namespace deepdeblur::diff {

void Adam::step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
  if (params.size() != grads.size()) throw UsageError("Adam::step: parameter/gradient count mismatch");
  if (t_ == 0) {
    m_.clear();
    v_.clear();
    for (const Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  } else if (m_.size() != params.size()) {
    throw UsageError("Adam::step: parameter list changed between steps");
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    const Tensor& g = grads[k];
    if (g.size() != p.size() || m_[k].size() != p.size()) throw ShapeError("Adam::step: gradient shape mismatch");
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      m[i] = b1 * m[i] + (1.0 - b1) * gi;
      v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] = static_cast<float>(p[i] - config_.learning_rate * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

}  // namespace deepdeblur::diff
