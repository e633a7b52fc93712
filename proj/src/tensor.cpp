#include "vida/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "vida/errors.hpp"
#include "vida/kernels.hpp"

namespace vida {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string());
    }
}

Tensor2D Tensor2D::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged rows in Tensor2D::from_rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor2D(r, c, std::move(data));
}

Tensor2D Tensor2D::identity(std::size_t n) {
    Tensor2D out(n, n);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

void Tensor2D::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor2D::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor2D::shape_string() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

void require_same_shape(const Tensor2D& a, const Tensor2D& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape " + a.shape_string() + " vs " + b.shape_string());
    }
}

Tensor2D matmul_nt(const Tensor2D& x, const Tensor2D& w) {
    if (x.cols() != w.cols()) {
        throw ShapeError("matmul_nt: " + x.shape_string() + " * " + w.shape_string() + "^T");
    }
    const auto& k = kernels::active();
    Tensor2D out(x.rows(), w.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row(i).data();
        double* oi = out.row(i).data();
        for (std::size_t j = 0; j < w.rows(); ++j) oi[j] = k.dot(xi, w.row(j).data(), x.cols());
    }
    return out;
}

Tensor2D matmul_nn(const Tensor2D& g, const Tensor2D& w) {
    if (g.cols() != w.rows()) {
        throw ShapeError("matmul_nn: " + g.shape_string() + " * " + w.shape_string());
    }
    const auto& k = kernels::active();
    Tensor2D out(g.rows(), w.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
        double* oi = out.row(i).data();
        for (std::size_t j = 0; j < g.cols(); ++j) {
            const double gij = g(i, j);
            if (gij != 0.0) k.axpy(gij, w.row(j).data(), oi, w.cols());
        }
    }
    return out;
}

void accumulate_tn(const Tensor2D& g, const Tensor2D& x, Tensor2D& acc) {
    if (g.rows() != x.rows() || acc.rows() != g.cols() || acc.cols() != x.cols()) {
        throw ShapeError("accumulate_tn: " + g.shape_string() + "^T * " + x.shape_string() + " into " +
                         acc.shape_string());
    }
    const auto& k = kernels::active();
    for (std::size_t n = 0; n < g.rows(); ++n) {
        const double* xn = x.row(n).data();
        for (std::size_t i = 0; i < g.cols(); ++i) {
            const double gni = g(n, i);
            if (gni != 0.0) k.axpy(gni, xn, acc.row(i).data(), x.cols());
        }
    }
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) { return matmul_nn(a, b); }

void add_scaled(Tensor2D& a, double alpha, const Tensor2D& b) {
    require_same_shape(a, b, "add_scaled");
    kernels::axpy(alpha, b.values(), a.values());
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
    return m;
}

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace vida
