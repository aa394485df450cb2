#pragma once

#include "nemo/errors.hpp"
#include "nemo/linalg.hpp"
#include "nemo/operators.hpp"

#include <string>

namespace nemo {

struct LinearSystem {
    SpMat matrix;
    Vec rhs;
};

inline void check_system(const LinearSystem& sys) {
    if (sys.matrix.rows() != sys.matrix.cols() || sys.matrix.rows() != sys.rhs.size())
        throw InvalidSystem("linear system: dimensions disagree");
}

inline double scaled_residual(const LinearSystem& sys, const Vec& x) {
    const double bn = sys.rhs.norm();
    const double rn = (sys.rhs - sys.matrix * x).norm();
    return bn > 0.0 ? rn / bn : rn;
}

// Sparse Cholesky solve. Throws NotPositiveDefinite on a non-positive pivot.
inline Vec direct_spd_solve(const LinearSystem& sys) {
    check_system(sys);
    Eigen::SimplicialLLT<SpMat> llt(sys.matrix);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("Cholesky factorization hit a non-positive pivot");
    return llt.solve(sys.rhs);
}

// Symmetric Gauss-Seidel: each sweep is a forward pass followed by a backward pass.
// Relies on the matrix being symmetric so that column i can stand in for row i.
inline Vec smoother_sweep(const LinearSystem& sys, Vec x, int sweeps) {
    check_system(sys);
    if (sweeps < 1) throw InvalidArgument("smoother_sweep: sweeps must be at least 1");
    if (x.size() != sys.rhs.size()) throw InvalidArgument("smoother_sweep: initial guess has the wrong length");
    const SpMat& A = sys.matrix;
    const Index n = A.rows();
    Vec diag = A.diagonal();
    for (Index i = 0; i < n; ++i)
        if (diag(i) == 0.0) throw InvalidSystem("smoother_sweep: zero diagonal entry at row " + std::to_string(i));

    auto relax = [&](Index i) {
        double s = sys.rhs(i);
        for (SpMat::InnerIterator it(A, i); it; ++it)
            if (it.row() != i) s -= it.value() * x(it.row());
        x(i) = s / diag(i);
    };
    for (int s = 0; s < sweeps; ++s) {
        for (Index i = 0; i < n; ++i) relax(i);
        for (Index i = n - 1; i >= 0; --i) relax(i);
    }
    return x;
}

struct TwoGridResult {
    Vec x;
    int iterations = 0;
    double residual = 0.0;
};

struct TwoGridOptions {
    double tol = 0.1;
    int pre_sweeps = 2;
    int post_sweeps = 2;
    int max_cycles = 100;
};

// Two-grid cycles with symmetric Gauss-Seidel smoothing and an exact solve on R A P.
// Keeps references to the system and the pair; both must outlive the solver.
class TwoGridSolver {
public:
    TwoGridSolver(const LinearSystem& sys, const TransferPair& pair, const TwoGridOptions& opt = {})
        : sys_(sys), pair_(pair), opt_(opt) {
        check_system(sys_);
        if (pair_.fine_dim() != sys_.rhs.size()) throw InvalidArgument("two_grid_solve: pair does not match the system");
        coarse_.compute(coarse_operator(sys_.matrix, pair_));
        if (coarse_.info() != Eigen::Success) throw RankDeficiency("two_grid_solve: R A P is not positive definite");
    }

    Vec cycle(Vec x) const {
        x = smoother_sweep(sys_, std::move(x), opt_.pre_sweeps);
        Vec r = sys_.rhs - sys_.matrix * x;
        x += pair_.prolong(coarse_.solve(pair_.coarsen(r)));
        return smoother_sweep(sys_, std::move(x), opt_.post_sweeps);
    }

    TwoGridResult solve(const Vec* initial = nullptr) const {
        TwoGridResult out;
        out.x = initial ? *initial : Vec::Zero(sys_.rhs.size());
        out.residual = scaled_residual(sys_, out.x);
        while (out.residual > opt_.tol) {
            if (out.iterations >= opt_.max_cycles)
                throw NonConvergence("two_grid_solve: cycle limit reached", out.residual);
            out.x = cycle(std::move(out.x));
            ++out.iterations;
            out.residual = scaled_residual(sys_, out.x);
        }
        return out;
    }

private:
    const LinearSystem& sys_;
    const TransferPair& pair_;
    TwoGridOptions opt_;
    Eigen::SimplicialLLT<SpMat> coarse_;
};

inline TwoGridResult two_grid_solve(const LinearSystem& sys, const TransferPair& pair, const TwoGridOptions& opt = {},
                                    const Vec* initial = nullptr) {
    check_system(sys);
    if (sys.rhs.norm() == 0.0 && (!initial || initial->norm() == 0.0)) {
        TwoGridResult out;
        out.x = Vec::Zero(sys.rhs.size());
        return out;
    }
    return TwoGridSolver(sys, pair, opt).solve(initial);
}

inline TwoGridResult two_grid_solve(const LinearSystem& sys, const TransferPair& pair, double tol) {
    TwoGridOptions opt;
    opt.tol = tol;
    return two_grid_solve(sys, pair, opt);
}

} // namespace nemo
