#pragma once

#include <map>
#include <string>
#include <vector>

#include "mnet/model.hpp"

namespace mnet {

// lr(e) = initial_lr * (1 - e/max_epochs)^exponent
double poly_lr(int epoch, int max_epochs, double initial_lr, double exponent);

template <typename T>
using SgdState = std::map<std::string, std::vector<T>>;

template <typename T>
SgdState<T> init_sgd_state(const std::vector<NamedParam<T>>& params);

// v <- momentum*v + g; nesterov: p -= lr*(g + momentum*v), else p -= lr*v.
// Every parameter must have a matching state entry (by name).
template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, SgdState<T>& state, double lr,
              double momentum, bool nesterov);

template <typename T>
void zero_gradients(const std::vector<NamedParam<T>>& params);

} // namespace mnet
