#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "occap/rng.hpp"
#include "occap/tensor.hpp"

namespace occap::num {

// Named parameter map. Iteration order is lexicographic (std::map), so
// optimizer sweeps and serialization are deterministic.
class ParamStore {
public:
    explicit ParamStore(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

    // Uniform init in [-s, s], s = sqrt(6 / (fan_in + fan_out)).
    Tensor& matrix_glorot(const std::string& name, int rows, int cols);
    Tensor& vector_zeros(const std::string& name, int n);
    Tensor& scalar_value(const std::string& name, double v);
    Tensor& declare(const std::string& name, Tensor value);

    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;

    void zero_all_grads();
    void clear_all_grads();

    std::size_t size() const { return entries_.size(); }
    std::uint64_t seed() const { return seed_; }
    Rng& rng() { return rng_; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

private:
    std::map<std::string, Tensor> entries_;
    std::uint64_t seed_;
    Rng rng_;
};

} // namespace occap::num
