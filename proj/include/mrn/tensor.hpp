#pragma once

#include <Eigen/Dense>

#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mrn/errors.hpp"

namespace mrn {

using vectord = Eigen::VectorXd;
using matrixd = Eigen::MatrixXd;
using arrayd = Eigen::ArrayXd;

// Dense tensor: a shape plus a flat row-major array of scalars. Rank is
// arbitrary; the network ops constrain it where they need to (conv wants
// rank 3, linear wants rank 1 or 2).
template <typename Scalar>
struct TensorT {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    std::vector<int> shape;
    Array data;
    bool requires_grad = false;

    TensorT() = default;

    TensorT(std::vector<int> shape_, Array data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (data.size() != numel(shape))
            throw ShapeError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_string(shape));
    }

    static Eigen::Index numel(const std::vector<int>& s) {
        Eigen::Index n = 1;
        for (int d : s) {
            if (d <= 0) throw ShapeError("tensor: nonpositive dimension in shape " + shape_string(s));
            n *= d;
        }
        return n;
    }

    static TensorT zeros(std::vector<int> s) {
        Eigen::Index n = numel(s);
        return TensorT(std::move(s), Array::Zero(n));
    }

    static TensorT full(std::vector<int> s, Scalar v) {
        Eigen::Index n = numel(s);
        return TensorT(std::move(s), Array::Constant(n, v));
    }

    static TensorT scalar(Scalar v) { return full({1}, v); }

    static TensorT from_vector(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
        return TensorT({static_cast<int>(v.size())}, v.array());
    }

    // Row-major flattening of a matrix into a rank-2 tensor.
    static TensorT from_matrix(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& m) {
        TensorT t = zeros({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
        for (Eigen::Index r = 0; r < m.rows(); ++r)
            for (Eigen::Index c = 0; c < m.cols(); ++c)
                t.data[r * m.cols() + c] = m(r, c);
        return t;
    }

    Eigen::Index size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }

    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

    Scalar& at(int i) { return data[i]; }
    Scalar at(int i) const { return data[i]; }

    // Rank-3 (channels, height, width) accessors used by the spatial ops.
    Scalar& at(int c, int h, int w) { return data[(c * shape[1] + h) * shape[2] + w]; }
    Scalar at(int c, int h, int w) const { return data[(c * shape[1] + h) * shape[2] + w]; }

    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> as_matrix() const {
        if (rank() != 2) throw ShapeError("tensor: as_matrix needs rank 2, got " + shape_string(shape));
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(shape[0], shape[1]);
        for (int r = 0; r < shape[0]; ++r)
            for (int c = 0; c < shape[1]; ++c)
                m(r, c) = data[r * shape[1] + c];
        return m;
    }

    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> as_vector() const { return data.matrix(); }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    static std::string shape_string(const std::vector<int>& s) {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
        os << ")";
        return os.str();
    }

    std::string shape_string() const { return shape_string(shape); }
};

using Tensor = TensorT<double>;

}  // namespace mrn
