#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace rmae {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

// Adam with bias correction. Moment arrays are aligned one-to-one with the
// parameter list passed to adam_step; the pairing is validated every step.
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  uint64_t step_count = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  void validate() const;
  bool initialized() const { return !first_moment.empty(); }
};

// One optimizer step over all parameters; reads each tensor's grad and
// updates data in place. effective_lr < 0 means "use state.lr" (the trainer
// passes the warmup-scaled rate). NaN/Inf gradients abort, naming the
// offending parameter.
void adam_step(NamedParams& params, AdamState& state, double effective_lr = -1.0);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(NamedParams& params, double max_norm);

}  // namespace rmae
