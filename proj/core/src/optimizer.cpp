#include "zamba/optimizer.hpp"

#include <cmath>

namespace zamba {

template <typename S>
AdamW<S>::AdamW(std::vector<std::pair<std::string, Tensor<S>>> params, AdamwConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& [name, t] : params_) {
        m_.emplace_back(t.numel(), S(0));
        v_.emplace_back(t.numel(), S(0));
    }
}

template <typename S>
double AdamW<S>::global_grad_norm() const {
    double sq = 0.0;
    for (const auto& [name, t] : params_) {
        if (!t.has_grad()) continue;
        for (S g : t.impl_->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    }
    return std::sqrt(sq);
}

template <typename S>
double AdamW<S>::step(double lr) {
    const double norm = global_grad_norm();
    const double clip_scale =
        (cfg_.grad_clip > 0.0 && norm > cfg_.grad_clip) ? cfg_.grad_clip / norm : 1.0;
    ++step_count_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
    for (size_t p = 0; p < params_.size(); ++p) {
        auto& t = params_[p].second;
        auto& data = t.data();
        auto& m = m_[p];
        auto& v = v_[p];
        const bool has_grad = t.has_grad();
        const S* g = has_grad ? t.impl_->grad.data() : nullptr;
        for (size_t i = 0; i < data.size(); ++i) {
            const double gi = has_grad ? static_cast<double>(g[i]) * clip_scale : 0.0;
            const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * gi;
            const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * gi * gi;
            m[i] = static_cast<S>(mi);
            v[i] = static_cast<S>(vi);
            const double update = (mi / bc1) / (std::sqrt(vi / bc2) + cfg_.eps) +
                                  cfg_.weight_decay * static_cast<double>(data[i]);
            data[i] = static_cast<S>(static_cast<double>(data[i]) - lr * update);
        }
    }
    return norm;
}

template <typename S>
void AdamW<S>::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

template class AdamW<float>;
template class AdamW<double>;

}  // namespace zamba
