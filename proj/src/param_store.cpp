#include "occap/param_store.hpp"

#include <cmath>

#include "occap/errors.hpp"

namespace occap::num {

Tensor& ParamStore::matrix_glorot(const std::string& name, int rows, int cols) {
    Tensor t({rows, cols});
    const double s = std::sqrt(6.0 / (static_cast<double>(rows) + static_cast<double>(cols)));
    for (auto& v : t.data()) v = rng_.uniform(-s, s);
    return declare(name, std::move(t));
}

Tensor& ParamStore::vector_zeros(const std::string& name, int n) { return declare(name, Tensor({n})); }

Tensor& ParamStore::scalar_value(const std::string& name, double v) { return declare(name, Tensor::scalar(v)); }

Tensor& ParamStore::declare(const std::string& name, Tensor value) {
    auto [it, inserted] = entries_.emplace(name, std::move(value));
    if (!inserted) throw ContractError("parameter '" + name + "' already declared");
    return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_all_grads() {
    for (auto& [name, t] : entries_) t.alloc_grad();
}

void ParamStore::clear_all_grads() {
    for (auto& [name, t] : entries_) t.clear_grad();
}

} // namespace occap::num
