#include "mnet/optim.hpp"

#include <cmath>

namespace mnet {

double poly_lr(int epoch, int max_epochs, double initial_lr, double exponent)
{
    check(max_epochs >= 1, ErrorKind::Config, "max_epochs must be >= 1");
    check(epoch >= 0 && epoch <= max_epochs, ErrorKind::Config, "epoch ", epoch,
          " outside 0..", max_epochs);
    return initial_lr *
           std::pow(1.0 - static_cast<double>(epoch) / static_cast<double>(max_epochs),
                    exponent);
}

template <typename T>
SgdState<T> init_sgd_state(const std::vector<NamedParam<T>>& params)
{
    SgdState<T> state;
    for (const auto& p : params)
        state.emplace(p.name,
                      std::vector<T>(static_cast<size_t>(p.tensor.numel()), T(0)));
    return state;
}

template <typename T>
void sgd_step(const std::vector<NamedParam<T>>& params, SgdState<T>& state, double lr,
              double momentum, bool nesterov)
{
    check(momentum >= 0.0 && momentum < 1.0, ErrorKind::Config,
          "momentum must be in [0,1)");
    const T mu = static_cast<T>(momentum);
    const T step = static_cast<T>(lr);
    for (const auto& p : params) {
        auto it = state.find(p.name);
        check(it != state.end(), ErrorKind::Config, "unknown parameter id \"", p.name,
              "\" (no optimizer state)");
        std::vector<T>& v = it->second;
        check(v.size() == p.tensor.values().size(), ErrorKind::Shape,
              "optimizer state size mismatch for \"", p.name, "\"");
        Tensor<T> t = p.tensor;
        const T* g = t.grad_data();
        T* val = t.data();
        if (nesterov) {
            for (size_t i = 0; i < v.size(); ++i) {
                v[i] = mu * v[i] + g[i];
                val[i] -= step * (g[i] + mu * v[i]);
            }
        } else {
            for (size_t i = 0; i < v.size(); ++i) {
                v[i] = mu * v[i] + g[i];
                val[i] -= step * v[i];
            }
        }
    }
}

template <typename T>
void zero_gradients(const std::vector<NamedParam<T>>& params)
{
    for (const auto& p : params) {
        Tensor<T> t = p.tensor;
        t.zero_grad();
    }
}

#define MNET_INSTANTIATE_OPTIM(T)                                                        \
    template SgdState<T> init_sgd_state<T>(const std::vector<NamedParam<T>>&);           \
    template void sgd_step<T>(const std::vector<NamedParam<T>>&, SgdState<T>&, double,   \
                              double, bool);                                             \
    template void zero_gradients<T>(const std::vector<NamedParam<T>>&);

MNET_INSTANTIATE_OPTIM(float)
MNET_INSTANTIATE_OPTIM(double)

#undef MNET_INSTANTIATE_OPTIM

} // namespace mnet
