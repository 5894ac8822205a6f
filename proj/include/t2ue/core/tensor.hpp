#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace t2ue {

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using MatMap = Eigen::Map<MatrixRM<Scalar>>;

template <typename Scalar>
using ConstMatMap = Eigen::Map<const MatrixRM<Scalar>>;

/// Dense n-d array: a shape plus flat row-major storage. Feature maps use
/// NCHW order, embedding batches are (N, d).
template <typename Scalar>
struct Tensor {
    std::vector<int> shape;
    ArrayX<Scalar> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data = ArrayX<Scalar>::Zero(count(shape));
    }

    Tensor(std::vector<int> s, ArrayX<Scalar> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != count(shape)) throw std::invalid_argument("tensor: data/shape mismatch");
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, Scalar v) {
        Tensor t(std::move(s));
        t.data.setConstant(v);
        return t;
    }

    static Tensor scalar(Scalar v) { return full({1}, v); }

    static Tensor from(std::vector<int> s, std::initializer_list<Scalar> vals) {
        Tensor t(std::move(s));
        if (static_cast<int64_t>(vals.size()) != t.size())
            throw std::invalid_argument("tensor: initializer size mismatch");
        int64_t i = 0;
        for (Scalar v : vals) t.data[i++] = v;
        return t;
    }

    int64_t size() const { return data.size(); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

    Scalar& operator[](int64_t i) { return data[i]; }
    Scalar operator[](int64_t i) const { return data[i]; }

    /// (rows, cols) matrix view over the flat storage.
    MatMap<Scalar> mat(int rows, int cols) {
        if (static_cast<int64_t>(rows) * cols != size()) throw std::invalid_argument("tensor: bad matrix view");
        return MatMap<Scalar>(data.data(), rows, cols);
    }
    ConstMatMap<Scalar> mat(int rows, int cols) const {
        if (static_cast<int64_t>(rows) * cols != size()) throw std::invalid_argument("tensor: bad matrix view");
        return ConstMatMap<Scalar>(data.data(), rows, cols);
    }

    /// View of a 2-d tensor using its own shape.
    MatMap<Scalar> mat() {
        if (ndim() != 2) throw std::invalid_argument("tensor: mat() needs 2-d shape");
        return mat(shape[0], shape[1]);
    }
    ConstMatMap<Scalar> mat() const {
        if (ndim() != 2) throw std::invalid_argument("tensor: mat() needs 2-d shape");
        return mat(shape[0], shape[1]);
    }

    template <typename Other>
    Tensor<Other> cast() const {
        Tensor<Other> t;
        t.shape = shape;
        t.data = data.template cast<Other>();
        return t;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '(';
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
        os << ')';
        return os.str();
    }
};

inline bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

template <typename Scalar>
void require_shape(const Tensor<Scalar>& t, const std::vector<int>& s, const char* what) {
    if (!same_shape(t.shape, s)) {
        throw std::invalid_argument(std::string(what) + ": expected shape mismatch, got " + t.shape_str());
    }
}

}  // namespace t2ue
