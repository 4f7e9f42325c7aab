#include "adaptlab/optim.hpp"

#include <cmath>

#include "adaptlab/errors.hpp"

namespace adaptlab {

void AdamOptions::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
  if (!(eps > 0.0)) throw ConfigError("eps must be > 0");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
}

template <typename S>
AdamStepReport Adam<S>::step(ParamStore<S>& params) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double bc1 = 1.0 - std::pow(options_.beta1, t);
  const double bc2 = 1.0 - std::pow(options_.beta2, t);
  const double decay = 1.0 - options_.lr * options_.weight_decay;
  AdamStepReport report;
  for (auto& p : params) {
    if (!p.trainable) continue;
    if (!p.grad) {
      report.skipped.push_back(p.name);
      continue;
    }
    auto& st = state_[p.name];
    const std::size_t n = p.value.size();
    if (st.m.size() != n) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    auto theta = p.value.data();
    auto grad = p.grad->data();
    for (std::size_t i = 0; i < n; ++i) {
      const double g = static_cast<double>(grad[i]);
      st.m[i] = options_.beta1 * st.m[i] + (1.0 - options_.beta1) * g;
      st.v[i] = options_.beta2 * st.v[i] + (1.0 - options_.beta2) * g * g;
      const double m_hat = st.m[i] / bc1;
      const double v_hat = st.v[i] / bc2;
      double w = static_cast<double>(theta[i]) * decay;
      w -= options_.lr * m_hat / (std::sqrt(v_hat) + options_.eps);
      theta[i] = static_cast<S>(w);
    }
    ++report.updated;
  }
  return report;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace adaptlab
