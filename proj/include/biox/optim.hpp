#pragma once

#include <cstdint>
#include <vector>

#include "biox/autodiff.hpp"

namespace biox {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Adam with bias correction. Frozen parameters are skipped entirely: their
// values (and moment slots) stay bit-identical to initialization.
class Adam {
  public:
    explicit Adam(std::vector<ParamPtr> params, AdamConfig cfg = {});

    void step();
    void zero_grad();
    int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

  private:
    std::vector<ParamPtr> params_;
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    int64_t t_ = 0;
};

}  // namespace biox
