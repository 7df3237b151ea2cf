#include "occap/tensor.hpp"

#include <cmath>
#include <sstream>

#include "occap/errors.hpp"

namespace occap::num {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw DimensionError("tensor dimension must be positive, got " + shape_to_string(shape));
        n *= d;
    }
    return n;
}

} // namespace

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_product(shape_)), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_to_string(shape_));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(std::vector<int> shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = 1.0;
    return t;
}

Tensor Tensor::vec(std::initializer_list<double> values) {
    return Tensor({static_cast<int>(values.size())}, std::vector<double>(values));
}

Tensor Tensor::matrix(int rows, int cols, std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

int Tensor::rows() const {
    if (rank() != 2) throw DimensionError("rows() needs a rank-2 tensor, got " + shape_str());
    return shape_[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw DimensionError("cols() needs a rank-2 tensor, got " + shape_str());
    return shape_[1];
}

double Tensor::at(int r, int c) const {
    return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

double& Tensor::at(int r, int c) {
    return data_[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols()) + static_cast<std::size_t>(c)];
}

std::vector<double>& Tensor::grad() {
    if (grad_.empty()) throw ContractError("tensor has no gradient allocated");
    return grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (grad_.empty()) throw ContractError("tensor has no gradient allocated");
    return grad_;
}

void Tensor::alloc_grad() { grad_.assign(data_.size(), 0.0); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

} // namespace occap::num
