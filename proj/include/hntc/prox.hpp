// SPDX-License-Identifier: Apache-2.0
//
// Numerical kernels for the completion solver: singular value soft
// thresholding and the shifted SPD system of the smoothness subproblem.

#pragma once

#include "hntc/tensor.hpp"

#include <Eigen/SVD>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <optional>
#include <stdexcept>
#include <string>

namespace hntc {

struct SolverError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Singular value soft thresholding D_tau(A) = U max(S - tau, 0) V^T.
inline Matrix svt(const Matrix &a, double tau) {
    if (tau < 0) throw std::invalid_argument("svt: negative threshold");
    if (a.size() == 0 || tau == 0) return a;
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Vector s = svd.singularValues();
    Eigen::Index keep = 0;
    while (keep < s.size() && s(keep) > tau) ++keep;
    if (keep == 0) return Matrix::Zero(a.rows(), a.cols());
    const Vector shrunk = (s.head(keep).array() - tau).matrix();
    return svd.matrixU().leftCols(keep) * shrunk.asDiagonal() *
           svd.matrixV().leftCols(keep).transpose();
}

inline double nuclear_norm(const Matrix &a) {
    if (a.size() == 0) return 0.0;
    return Eigen::BDCSVD<Matrix>(a).singularValues().sum();
}

/// Numerical rank; singular values below rel_tol * sigma_max count as zero.
inline Eigen::Index numerical_rank(const Matrix &a, double rel_tol = 1e-12) {
    if (a.size() == 0) return 0;
    const Vector s = Eigen::BDCSVD<Matrix>(a).singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    Eigen::Index r = 0;
    while (r < s.size() && s(r) > rel_tol * s(0)) ++r;
    return r;
}

using SparseMatrix = Eigen::SparseMatrix<double>;

/// base + diag(diag_add). The base is the smoothness stencil shared by every
/// beam subproblem; diag_add carries the beam-specific data weight.
struct SpdOperator {
    Shape grid;
    SparseMatrix base;
    Vector diag_add;

    std::size_t n() const { return static_cast<std::size_t>(base.rows()); }

    SparseMatrix assembled() const {
        SparseMatrix m = base;
        if (diag_add.size() == 0) return m;
        for (Eigen::Index i = 0; i < m.rows(); ++i) m.coeffRef(i, i) += diag_add(i);
        return m;
    }

    Vector apply(const Vector &x) const {
        Vector y = base * x;
        if (diag_add.size()) y.array() += diag_add.array() * x.array();
        return y;
    }
};

/// Stencil of the X-subproblem: diagonal n2*lambda + 2*gamma*(number of grid
/// neighbours), -2*gamma between grid points at unit distance. Grid points are
/// linearized first-index-fastest, matching Tensor storage. An empty grid is a
/// single point.
inline SpdOperator build_a_operator(const Shape &grid, std::size_t n2, double lambda,
                                    double gamma) {
    if (!(lambda > 0)) throw std::invalid_argument("build_a_operator: lambda must be > 0");
    if (gamma < 0) throw std::invalid_argument("build_a_operator: gamma must be >= 0");
    for (auto d : grid)
        if (d == 0) throw std::invalid_argument("build_a_operator: zero grid dimension");
    const std::size_t n = shape_size(grid);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(n * (1 + 2 * grid.size()));
    for (std::size_t lin = 0; lin < n; ++lin) {
        double diag = static_cast<double>(n2) * lambda;
        std::size_t stride = 1;
        for (std::size_t d = 0; d < grid.size(); ++d) {
            const std::size_t i_d = (lin / stride) % grid[d];
            if (i_d > 0) {
                diag += 2 * gamma;
                if (gamma > 0)
                    trip.emplace_back(static_cast<int>(lin), static_cast<int>(lin - stride),
                                      -2 * gamma);
            }
            if (i_d + 1 < grid[d]) {
                diag += 2 * gamma;
                if (gamma > 0)
                    trip.emplace_back(static_cast<int>(lin), static_cast<int>(lin + stride),
                                      -2 * gamma);
            }
            stride *= grid[d];
        }
        trip.emplace_back(static_cast<int>(lin), static_cast<int>(lin), diag);
    }
    SpdOperator op;
    op.grid = grid;
    op.base.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    op.base.setFromTriplets(trip.begin(), trip.end());
    op.base.makeCompressed();
    return op;
}

inline double relative_residual(const SpdOperator &op, const Vector &x, const Vector &rhs) {
    const double rn = rhs.norm();
    const double res = (op.apply(x) - rhs).norm();
    return rn > 0 ? res / rn : res;
}

/// Sparse Cholesky of base + diag(shift), reusing the symbolic analysis across
/// shifts. The sparsity pattern of base already contains the diagonal.
class ShiftedSpdSolver {
  public:
    explicit ShiftedSpdSolver(const SpdOperator &op) : base_{op.base} {
        llt_.analyzePattern(base_);
    }

    Vector solve(const Vector &shift, const Vector &rhs) {
        if (static_cast<std::size_t>(rhs.size()) != n())
            throw std::invalid_argument("ShiftedSpdSolver: rhs length mismatch");
        SparseMatrix m = base_;
        if (shift.size()) {
            if (shift.size() != m.rows())
                throw std::invalid_argument("ShiftedSpdSolver: shift length mismatch");
            for (Eigen::Index i = 0; i < m.rows(); ++i) m.coeffRef(i, i) += shift(i);
        }
        llt_.factorize(m);
        if (llt_.info() != Eigen::Success)
            throw SolverError("ShiftedSpdSolver: factorization failed (matrix not positive definite)");
        Vector x = llt_.solve(rhs);
        if (llt_.info() != Eigen::Success) throw SolverError("ShiftedSpdSolver: solve failed");
        return x;
    }

    std::size_t n() const { return static_cast<std::size_t>(base_.rows()); }

  private:
    SparseMatrix base_;
    Eigen::SimplicialLLT<SparseMatrix> llt_;
};

/// Solves (base + diag_add) x = rhs. Throws SolverError when the system is not
/// positive definite or the residual bound 1e-10 is not met.
inline Vector solve(const SpdOperator &op, const Vector &rhs, double rel_tol = 1e-10) {
    if (static_cast<std::size_t>(rhs.size()) != op.n())
        throw std::invalid_argument("solve: rhs length " + std::to_string(rhs.size()) +
                                    " != operator size " + std::to_string(op.n()));
    if (rhs.squaredNorm() == 0) return Vector::Zero(rhs.size());
    ShiftedSpdSolver s(op);
    Vector x = s.solve(op.diag_add, rhs);
    const double rr = relative_residual(op, x, rhs);
    if (!(rr <= rel_tol))
        throw SolverError("solve: relative residual " + std::to_string(rr) +
                          " exceeds tolerance");
    return x;
}

} // namespace hntc
