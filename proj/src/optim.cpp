#include "biox/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace biox {

Adam::Adam(std::vector<ParamPtr> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const ParamPtr& p : params_) {
        if (!p) throw std::runtime_error("Adam: null parameter");
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

void Adam::step() {
    ++t_;
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (!p.trainable) continue;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t j = 0; j < p.value.numel(); ++j) {
            double g = p.grad[j];
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            double mhat = m[j] / bc1;
            double vhat = v[j] / bc2;
            double update = mhat / (std::sqrt(vhat) + cfg_.eps);
            if (cfg_.weight_decay != 0.0) update += cfg_.weight_decay * p.value[j];
            p.value[j] -= cfg_.lr * update;
        }
    }
}

void Adam::zero_grad() {
    for (const ParamPtr& p : params_) p->zero_grad();
}

}  // namespace biox
