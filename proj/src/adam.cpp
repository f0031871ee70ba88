#include "adam.hpp"

#include <cmath>

#include "error.hpp"

namespace rmae {

void AdamState::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam: beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam: beta2 must be in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
}

void adam_step(NamedParams& params, AdamState& state, double effective_lr) {
  state.validate();
  if (!state.initialized()) {
    state.first_moment.resize(params.size());
    state.second_moment.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      const size_t n = static_cast<size_t>(params[i].second.numel());
      state.first_moment[i].assign(n, 0.0);
      state.second_moment[i].assign(n, 0.0);
    }
  }
  if (state.first_moment.size() != params.size())
    throw ContractError("adam: optimizer state tracks " +
                        std::to_string(state.first_moment.size()) +
                        " parameters, step got " + std::to_string(params.size()));

  const double lr = effective_lr >= 0.0 ? effective_lr : state.lr;
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

  for (size_t i = 0; i < params.size(); ++i) {
    auto& [name, tensor] = params[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    if (m.size() != tensor.data().size())
      throw ContractError("adam: moment size mismatch for parameter '" + name + "'");
    if (!tensor.has_grad()) continue;  // parameter not touched by this loss
    const auto& g = tensor.grad();
    auto& data = tensor.data();
    for (size_t j = 0; j < data.size(); ++j) {
      const double gj = g[j];
      if (!std::isfinite(gj))
        throw NumericError("adam: non-finite gradient in parameter '" + name +
                           "' at index " + std::to_string(j));
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      data[j] -= lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_grad_norm(NamedParams& params, double max_norm) {
  double total = 0.0;
  for (auto& [name, tensor] : params) {
    (void)name;
    if (!tensor.has_grad()) continue;
    for (double g : tensor.grad()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, tensor] : params) {
      (void)name;
      if (!tensor.has_grad()) continue;
      auto node = tensor.node();
      for (double& g : node->grad) g *= factor;
    }
  }
  return norm;
}

}  // namespace rmae
