#include "prefixforge/training/adam.hpp"

#include <cmath>

namespace prefixforge {

template <typename Scalar>
double global_norm(const ParameterSet<Scalar>& grads) {
    double sum = 0.0;
    for (const auto& [name, t] : grads.tensors()) sum += t->template cast<double>().squaredNorm();
    return std::sqrt(sum);
}

template <typename Scalar>
Adam<Scalar>::Adam(const ModelConfig& model, AdamConfig config)
    : config_(config), m_(ParameterSet<Scalar>::zeros(model)), v_(ParameterSet<Scalar>::zeros(model)) {}

template <typename Scalar>
double Adam<Scalar>::step(ParameterSet<Scalar>& params, const ParameterSet<Scalar>& grads) {
    const double norm = global_norm(grads);
    const double scale = config_.clip_norm > 0.0 && norm > config_.clip_norm ? config_.clip_norm / norm : 1.0;
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    const auto b1 = static_cast<Scalar>(config_.beta1);
    const auto b2 = static_cast<Scalar>(config_.beta2);
    const auto lr = static_cast<Scalar>(config_.learning_rate / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(config_.epsilon);

    auto p = params.tensors();
    const auto g = grads.tensors();
    auto m = m_.tensors();
    auto v = v_.tensors();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto grad = (g[i].second->array() * static_cast<Scalar>(scale)).eval();
        m[i].second->array() = b1 * m[i].second->array() + (Scalar(1) - b1) * grad;
        v[i].second->array() = b2 * v[i].second->array() + (Scalar(1) - b2) * grad.square();
        p[i].second->array() -= lr * m[i].second->array() / ((v[i].second->array() * inv_c2).sqrt() + eps);
    }
    return norm;
}

template class Adam<float>;
template class Adam<double>;
template double global_norm<float>(const ParameterSet<float>&);
template double global_norm<double>(const ParameterSet<double>&);

}  // namespace prefixforge
