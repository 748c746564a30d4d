#pragma once

#include "prefixforge/model/parameters.hpp"

namespace prefixforge {

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 1.0;  ///< global gradient-norm clip; <= 0 disables
};

/// Bias-corrected Adam over every tensor of a ParameterSet.
template <typename Scalar>
class Adam {
public:
    Adam(const ModelConfig& model, AdamConfig config);

    const AdamConfig& config() const { return config_; }
    long steps() const { return step_; }

    /// Applies one update in place and returns the gradient norm before clipping.
    double step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads);

private:
    AdamConfig config_;
    ParameterSet<Scalar> m_, v_;
    long step_ = 0;
};

/// sqrt of the sum of squares over all tensors.
template <typename Scalar>
double global_norm(const ParameterSet<Scalar>& grads);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace prefixforge
