#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace vida {

// Dense row-major matrix of doubles. Rows of a batch are samples.
class Tensor2D {
public:
    Tensor2D() = default;
    Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
    // Throws ShapeError unless values.size() == rows * cols.
    Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor2D from_rows(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor2D identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    void fill(double v);
    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Throws ShapeError with `what` as context when the shapes differ.
void require_same_shape(const Tensor2D& a, const Tensor2D& b, const char* what);

// out = x * w^T   (x: n x k, w: m x k) -> n x m
Tensor2D matmul_nt(const Tensor2D& x, const Tensor2D& w);
// out = g * w     (g: n x m, w: m x k) -> n x k
Tensor2D matmul_nn(const Tensor2D& g, const Tensor2D& w);
// acc += g^T * x  (g: n x m, x: n x k, acc: m x k)
void accumulate_tn(const Tensor2D& g, const Tensor2D& x, Tensor2D& acc);
// out = a * b as plain matrices (a: n x k, b: k x m)
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);

// a += alpha * b, elementwise.
void add_scaled(Tensor2D& a, double alpha, const Tensor2D& b);

double max_abs_diff(const Tensor2D& a, const Tensor2D& b);

std::size_t argmax(std::span<const double> v);

}  // namespace vida
