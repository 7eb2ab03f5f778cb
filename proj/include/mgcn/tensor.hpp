#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace mgcn {

// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xn.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);
    Tensor(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor identity(std::size_t n);
    static Tensor scalar(double v) { return Tensor(1, 1, v); }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }
    bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    double item() const;  // value of a 1x1 tensor
    bool all_finite() const;
    std::string shape_string() const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> values_;
};

// Plain dense kernels. These do not record anything; the autodiff ops in
// autodiff.hpp are built on top of them.
namespace dense {

Tensor matmul(const Tensor& a, const Tensor& b);
// a^T * b without materialising the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void axpy(double alpha, const Tensor& x, Tensor& y);  // y += alpha * x
double sum(const Tensor& a);
double trace(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
bool is_symmetric(const Tensor& a, double tol = 0.0);

} // namespace dense

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

} // namespace mgcn
