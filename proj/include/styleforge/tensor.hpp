#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "styleforge/rng.hpp"

namespace styleforge {

// Dense row-major double tensor. Small and deliberately simple: the toy
// stacks never exceed a few thousand elements per tensor.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(count(shape_)), 0.0);
    }

    Tensor(std::vector<int64_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<int64_t>(data_.size()) != count(shape_)) {
            throw std::invalid_argument("tensor data does not match shape");
        }
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) {
            x = v;
        }
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    static Tensor randn(std::vector<int64_t> shape, Rng& rng, double mean = 0.0, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (double& x : t.data_) {
            x = rng.normal(mean, stddev);
        }
        return t;
    }

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    int rank() const { return static_cast<int>(shape_.size()); }

    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

    // 2-D convenience
    int64_t rows() const { return shape_.size() == 2 ? shape_[0] : throw_rank2(); }
    int64_t cols() const { return shape_.size() == 2 ? shape_[1] : throw_rank2(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
    double at(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

    double& at3(int64_t c, int64_t y, int64_t x) {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }
    double at3(int64_t c, int64_t y, int64_t x) const {
        return data_[static_cast<size_t>((c * shape_[1] + y) * shape_[2] + x)];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double x : data_) {
            if (!std::isfinite(x)) {
                return false;
            }
        }
        return true;
    }

    Tensor reshaped(std::vector<int64_t> shape) const {
        if (count(shape) != size()) {
            throw std::invalid_argument("reshape changes element count");
        }
        return Tensor(std::move(shape), data_);
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            os << (i ? "x" : "") << shape_[i];
        }
        os << "]";
        return os.str();
    }

    static int64_t count(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            if (d < 0) {
                throw std::invalid_argument("negative tensor dimension");
            }
            n *= d;
        }
        return n;
    }

private:
    int64_t throw_rank2() const {
        throw std::logic_error("tensor is not 2-D: " + shape_str());
    }

    std::vector<int64_t> shape_;
    std::vector<double> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace styleforge
