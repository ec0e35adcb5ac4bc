#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace pat {

// Dense row-major tensor. Copies share storage until written (copy-on-write),
// so observable behavior is value semantics.
template <typename Real>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = std::make_shared<std::vector<Real>>(count(t.shape_), Real(0));
        return t;
    }

    static Tensor from(std::vector<std::size_t> shape, std::vector<Real> values) {
        if (values.size() != count(shape)) {
            throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                        " values for shape of size " + std::to_string(count(shape)));
        }
        Tensor t;
        t.shape_ = std::move(shape);
        t.buf_ = std::make_shared<std::vector<Real>>(std::move(values));
        return t;
    }

    static Tensor scalar(Real v) { return from({1}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return buf_ ? buf_->size() : 0; }
    bool empty() const { return size() == 0; }

    std::size_t rows() const { return rank() >= 1 ? shape_[0] : 0; }
    std::size_t cols() const { return rank() >= 2 ? shape_[1] : 1; }

    std::span<const Real> view() const {
        static const std::vector<Real> kEmpty;
        const std::vector<Real>& b = buf_ ? *buf_ : kEmpty;
        return {b.data(), b.size()};
    }

    std::span<Real> mutable_view() {
        detach();
        return {buf_->data(), buf_->size()};
    }

    Real operator()(std::size_t i, std::size_t j) const { return (*buf_)[i * cols() + j]; }
    Real operator[](std::size_t i) const { return (*buf_)[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool bitwise_equal(const Tensor& other) const {
        if (shape_ != other.shape_) return false;
        auto a = view(), b = other.view();
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i] != b[i]) return false;
        return true;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
        os << "]";
        return os.str();
    }

private:
    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
            n *= d;
        }
        return shape.empty() ? 0 : n;
    }

    void detach() {
        if (!buf_) throw std::logic_error("Tensor: mutable access to empty tensor");
        if (buf_.use_count() > 1) buf_ = std::make_shared<std::vector<Real>>(*buf_);
    }

    std::vector<std::size_t> shape_;
    std::shared_ptr<std::vector<Real>> buf_;
};

// A[m,k] * B[k,n] accumulated into C[m,n] (C must be zeroed by the caller).
template <typename Real>
void matmul_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* ci = c.data() + i * n;
        const Real* ai = a.data() + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const Real av = ai[t];
            const Real* bt = b.data() + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

// A[m,k] * B[n,k]^T accumulated into C[m,n].
template <typename Real>
void matmul_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const Real* ai = a.data() + i * k;
        Real* ci = c.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const Real* bj = b.data() + j * k;
            Real acc = 0;
            for (std::size_t t = 0; t < k; ++t) acc += ai[t] * bj[t];
            ci[j] += acc;
        }
    }
}

// A[k,m]^T * B[k,n] accumulated into C[m,n].
template <typename Real>
void matmul_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t t = 0; t < k; ++t) {
        const Real* at = a.data() + t * m;
        const Real* bt = b.data() + t * n;
        for (std::size_t i = 0; i < m; ++i) {
            const Real av = at[i];
            Real* ci = c.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

// In-place row softmax with max subtraction. Rows sum to 1.
template <typename Real>
void softmax_rows_inplace(std::span<Real> x, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* r = x.data() + i * n;
        Real mx = r[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, r[j]);
        Real sum = 0;
        for (std::size_t j = 0; j < n; ++j) {
            r[j] = std::exp(r[j] - mx);
            sum += r[j];
        }
        const Real inv = Real(1) / sum;
        for (std::size_t j = 0; j < n; ++j) r[j] *= inv;
    }
}

template <typename Real>
Real gelu_scalar(Real x) {
    const Real k = std::sqrt(Real(2) / Real(M_PI));
    const Real u = k * (x + Real(0.044715) * x * x * x);
    return Real(0.5) * x * (Real(1) + std::tanh(u));
}

template <typename Real>
Real gelu_grad_scalar(Real x) {
    const Real k = std::sqrt(Real(2) / Real(M_PI));
    const Real u = k * (x + Real(0.044715) * x * x * x);
    const Real t = std::tanh(u);
    const Real du = k * (Real(1) + Real(3) * Real(0.044715) * x * x);
    return Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * du;
}

}  // namespace pat
