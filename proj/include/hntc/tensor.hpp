// SPDX-License-Identifier: Apache-2.0
//
// Dense real tensors with mode-m unfolding/folding and the linear tensor
// total variation (sum of squared forward differences).
//
// Storage order is column-major generalized to M dimensions: the FIRST index
// varies fastest, i.e. offset(i_0..i_{M-1}) = sum_d i_d * prod_{e<d} I_e.
// All indices and modes in this header are 0-based.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hntc {

using Shape = std::vector<std::size_t>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline std::size_t shape_size(const Shape &shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>{});
}

inline std::string shape_string(const Shape &shape) {
    std::string s = "(";
    for (std::size_t d = 0; d < shape.size(); ++d) {
        if (d) s += ",";
        s += std::to_string(shape[d]);
    }
    return s + ")";
}

class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_{std::move(shape)}, data_(shape_size(shape_), fill) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<double> data)
        : shape_{std::move(shape)}, data_{std::move(data)} {
        check_shape();
        if (data_.size() != shape_size(shape_))
            throw std::invalid_argument("Tensor: data length " +
                                        std::to_string(data_.size()) +
                                        " does not match shape " +
                                        shape_string(shape_));
    }

    const Shape &shape() const { return shape_; }
    std::size_t order() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t d) const { return shape_.at(d); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double> &values() const { return data_; }

    double &operator[](std::size_t linear) { return data_[linear]; }
    double operator[](std::size_t linear) const { return data_[linear]; }

    std::size_t offset(std::span<const std::size_t> idx) const {
        if (idx.size() != shape_.size())
            throw std::invalid_argument("Tensor: index arity mismatch");
        std::size_t off = 0, stride = 1;
        for (std::size_t d = 0; d < shape_.size(); ++d) {
            if (idx[d] >= shape_[d])
                throw std::out_of_range("Tensor: index out of range");
            off += idx[d] * stride;
            stride *= shape_[d];
        }
        return off;
    }

    double &operator()(std::initializer_list<std::size_t> idx) {
        return data_[offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
    }
    double operator()(std::initializer_list<std::size_t> idx) const {
        return data_[offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
    }
    double &at(std::span<const std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }

    /// Multi-index of a linear offset.
    std::vector<std::size_t> index_of(std::size_t linear) const {
        std::vector<std::size_t> idx(shape_.size());
        for (std::size_t d = 0; d < shape_.size(); ++d) {
            idx[d] = linear % shape_[d];
            linear /= shape_[d];
        }
        return idx;
    }

    /// View of the data as a (rows x size/rows) column-major matrix, where
    /// rows is the product of the leading `lead` dimensions.
    Eigen::Map<Matrix> as_matrix(std::size_t lead) {
        auto [r, c] = split(lead);
        return {data_.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
    }
    Eigen::Map<const Matrix> as_matrix(std::size_t lead) const {
        auto [r, c] = split(lead);
        return {data_.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
    }

    Tensor &operator+=(const Tensor &o) {
        require_same_shape(o, "+=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }
    Tensor &operator-=(const Tensor &o) {
        require_same_shape(o, "-=");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
        return *this;
    }
    Tensor &operator*=(double c) {
        for (auto &v : data_) v *= c;
        return *this;
    }
    friend Tensor operator+(Tensor a, const Tensor &b) { return a += b; }
    friend Tensor operator-(Tensor a, const Tensor &b) { return a -= b; }
    friend Tensor operator*(Tensor a, double c) { return a *= c; }
    friend Tensor operator*(double c, Tensor a) { return a *= c; }

    bool operator==(const Tensor &o) const = default;

    void require_same_shape(const Tensor &o, const char *what) const {
        if (shape_ != o.shape_)
            throw std::invalid_argument(std::string("Tensor ") + what +
                                        ": shape mismatch " + shape_string(shape_) +
                                        " vs " + shape_string(o.shape_));
    }

  private:
    void check_shape() const {
        for (auto d : shape_)
            if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
    }
    std::pair<std::size_t, std::size_t> split(std::size_t lead) const {
        if (lead > shape_.size()) throw std::out_of_range("Tensor: lead > order");
        std::size_t r = 1;
        for (std::size_t d = 0; d < lead; ++d) r *= shape_[d];
        return {r, data_.size() / r};
    }

    Shape shape_;
    std::vector<double> data_;
};

/// Mode-m unfolding: an I_m x prod_{d!=m} I_d matrix. The column index follows
/// j = sum_{k!=m} i_k J_k with J_k = prod_{d<k, d!=m} I_d.
inline Matrix unfold(const Tensor &x, std::size_t mode) {
    if (mode >= x.order())
        throw std::out_of_range("unfold: mode " + std::to_string(mode) +
                                " out of range for order " + std::to_string(x.order()));
    const auto &shape = x.shape();
    const std::size_t rows = shape[mode];
    const std::size_t cols = x.size() / rows;
    // Strides of the remaining modes inside the column index.
    std::vector<std::size_t> jstride(shape.size(), 0);
    std::size_t acc = 1;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k == mode) continue;
        jstride[k] = acc;
        acc *= shape[k];
    }
    Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t lin = 0; lin < x.size(); ++lin) {
        std::size_t j = 0;
        for (std::size_t k = 0; k < shape.size(); ++k)
            if (k != mode) j += idx[k] * jstride[k];
        out(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(j)) = x[lin];
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

/// Inverse of unfold.
inline Tensor fold(const Matrix &mat, std::size_t mode, const Shape &shape) {
    if (mode >= shape.size())
        throw std::out_of_range("fold: mode out of range");
    const std::size_t total = shape_size(shape);
    if (static_cast<std::size_t>(mat.rows()) != shape[mode] ||
        static_cast<std::size_t>(mat.size()) != total)
        throw std::invalid_argument("fold: matrix " + std::to_string(mat.rows()) + "x" +
                                    std::to_string(mat.cols()) +
                                    " inconsistent with shape " + shape_string(shape) +
                                    " at mode " + std::to_string(mode));
    std::vector<std::size_t> jstride(shape.size(), 0);
    std::size_t acc = 1;
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k == mode) continue;
        jstride[k] = acc;
        acc *= shape[k];
    }
    Tensor out(shape);
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t lin = 0; lin < total; ++lin) {
        std::size_t j = 0;
        for (std::size_t k = 0; k < shape.size(); ++k)
            if (k != mode) j += idx[k] * jstride[k];
        out[lin] = mat(static_cast<Eigen::Index>(idx[mode]), static_cast<Eigen::Index>(j));
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (++idx[d] < shape[d]) break;
            idx[d] = 0;
        }
    }
    return out;
}

inline double inner(const Tensor &x, const Tensor &y) {
    x.require_same_shape(y, "inner");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

inline double frobenius(const Tensor &x) { return std::sqrt(inner(x, x)); }

/// Linear tensor total variation: squared forward differences summed over all
/// entries and all dimensions. Differences that would step past the last
/// index of a dimension are omitted.
inline double lttv(const Tensor &x) {
    const auto &shape = x.shape();
    double s = 0.0;
    std::size_t stride = 1;
    for (std::size_t d = 0; d < shape.size(); ++d) {
        const std::size_t n = shape[d];
        for (std::size_t lin = 0; lin < x.size(); ++lin) {
            const std::size_t i_d = (lin / stride) % n;
            if (i_d + 1 >= n) continue;
            const double diff = x[lin + stride] - x[lin];
            s += diff * diff;
        }
        stride *= n;
    }
    return s;
}

// Binary tensor file: 8-byte magic, uint64 order, uint64 dims[order], then the
// doubles in storage order. Little-endian host layout.
inline constexpr char kTensorMagic[8] = {'H', 'N', 'T', 'C', 'T', 'N', 'S', '1'};

inline void write_tensor(std::ostream &os, const Tensor &t) {
    os.write(kTensorMagic, sizeof kTensorMagic);
    const std::uint64_t order = t.order();
    os.write(reinterpret_cast<const char *>(&order), sizeof order);
    for (auto d : t.shape()) {
        const std::uint64_t v = d;
        os.write(reinterpret_cast<const char *>(&v), sizeof v);
    }
    os.write(reinterpret_cast<const char *>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!os) throw std::runtime_error("write_tensor: stream failure");
}

inline Tensor read_tensor(std::istream &is) {
    char magic[8];
    is.read(magic, sizeof magic);
    if (!is || !std::equal(magic, magic + 8, kTensorMagic))
        throw std::runtime_error("read_tensor: bad magic");
    std::uint64_t order = 0;
    is.read(reinterpret_cast<char *>(&order), sizeof order);
    if (!is || order == 0 || order > 64) throw std::runtime_error("read_tensor: bad order");
    Shape shape(order);
    for (auto &d : shape) {
        std::uint64_t v = 0;
        is.read(reinterpret_cast<char *>(&v), sizeof v);
        d = v;
    }
    std::vector<double> data(shape_size(shape));
    is.read(reinterpret_cast<char *>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!is) throw std::runtime_error("read_tensor: truncated data");
    return Tensor(std::move(shape), std::move(data));
}

inline void save_tensor(const std::string &path, const Tensor &t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_tensor(os, t);
}

inline Tensor load_tensor(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return read_tensor(is);
}

} // namespace hntc
