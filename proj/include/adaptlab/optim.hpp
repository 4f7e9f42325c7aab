#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "adaptlab/param_store.hpp"

namespace adaptlab {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;

  void validate() const;
};

struct AdamStepReport {
  std::size_t updated = 0;
  // Trainable parameters that had no gradient and were left untouched.
  std::vector<std::string> skipped;
};

// Adam with bias correction and decoupled weight decay:
//   theta <- theta * (1 - lr * wd)
//   theta <- theta - lr * m_hat / (sqrt(v_hat) + eps)
// Moment state is keyed by parameter name; frozen parameters are never read
// for update or written.
template <typename S>
class Adam {
 public:
  explicit Adam(AdamOptions options) : options_(options) { options_.validate(); }

  AdamStepReport step(ParamStore<S>& params);

  std::size_t steps_taken() const noexcept { return step_; }
  const AdamOptions& options() const noexcept { return options_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamOptions options_;
  std::size_t step_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace adaptlab
