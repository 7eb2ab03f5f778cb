#include "mgcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "mgcn/error.hpp"

namespace mgcn {

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw ShapeError("tensor: " + std::to_string(values_.size()) + " values for shape " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    values_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("tensor: ragged initializer");
        values_.insert(values_.end(), r.begin(), r.end());
    }
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

double Tensor::item() const {
    if (rows_ != 1 || cols_ != 1) throw ShapeError("item() on non-scalar tensor " + shape_string());
    return values_[0];
}

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

namespace dense {

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + a.shape_string() + " * " + b.shape_string());
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Tensor out(n, m);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        double* orow = po + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            const double* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) {
        throw ShapeError("matmul_tn: " + a.shape_string() + "^T * " + b.shape_string());
    }
    const std::size_t k = a.rows(), n = a.cols(), m = b.cols();
    Tensor out(n, m);
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = pa + p * n;
        const double* brow = pb + p * m;
        for (std::size_t i = 0; i < n; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = po + i * m;
            for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_nt: " + a.shape_string() + " * " + b.shape_string() + "^T");
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Tensor out(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* arow = a.data() + i * k;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b.data() + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            out(i, j) = acc;
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
    require_same_shape(x, y, "axpy");
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return s;
}

double trace(const Tensor& a) {
    if (a.rows() != a.cols()) throw ShapeError("trace: non-square " + a.shape_string());
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool is_symmetric(const Tensor& a, double tol) {
    if (a.rows() != a.cols()) return false;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol) return false;
    return true;
}

} // namespace dense
} // namespace mgcn
