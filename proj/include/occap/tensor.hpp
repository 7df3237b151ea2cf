#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace occap::num {

// Dense row-major tensor of 64-bit floats with an optional gradient slot.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor scalar(double v);
    static Tensor zeros(std::vector<int> shape);
    static Tensor ones(std::vector<int> shape);
    static Tensor vec(std::initializer_list<double> values);
    static Tensor matrix(int rows, int cols, std::initializer_list<double> values);

    const std::vector<int>& shape() const { return shape_; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int rows() const;
    int cols() const;

    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double at(int r, int c) const;
    double& at(int r, int c);

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool has_grad() const { return !grad_.empty(); }
    std::vector<double>& grad();
    const std::vector<double>& grad() const;
    void alloc_grad();
    void clear_grad() { grad_.clear(); }

    bool all_finite() const;
    std::string shape_str() const;

    bool operator==(const Tensor& other) const {
        return shape_ == other.shape_ && data_ == other.data_;
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
    std::vector<double> grad_; // empty means absent
};

std::string shape_to_string(const std::vector<int>& shape);

} // namespace occap::num
