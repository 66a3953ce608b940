#pragma once

// AdamW with decoupled weight decay and global-norm gradient clipping. The
// clip rescales gradients before the moment update; a zero learning rate
// therefore still advances the moments while leaving parameters untouched.

#include <string>
#include <utility>
#include <vector>

#include "zamba/tensor.hpp"

namespace zamba {

struct AdamwConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.1;
    double grad_clip = 1.0;  // <= 0 disables clipping
};

template <typename S>
class AdamW {
public:
    AdamW(std::vector<std::pair<std::string, Tensor<S>>> params, AdamwConfig cfg = {});

    // One update at learning rate lr; returns the pre-clip global grad norm.
    double step(double lr);
    void zero_grad();

    double global_grad_norm() const;

    int64_t step_count() const { return step_count_; }
    void set_step_count(int64_t t) { step_count_ = t; }
    const AdamwConfig& config() const { return cfg_; }

    // Moment access by registry position, for checkpointing.
    size_t size() const { return params_.size(); }
    const std::string& name(size_t i) const { return params_[i].first; }
    std::vector<S>& moment1(size_t i) { return m_[i]; }
    std::vector<S>& moment2(size_t i) { return v_[i]; }

private:
    std::vector<std::pair<std::string, Tensor<S>>> params_;
    std::vector<std::vector<S>> m_, v_;
    AdamwConfig cfg_;
    int64_t step_count_ = 0;
};

}  // namespace zamba
