#pragma once

#include "nemo/errors.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <arpack/arpack.hpp>
// arpack.hpp drags in C <complex.h>, whose `I` and `complex` macros break ordinary identifiers.
#undef I
#undef complex

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace nemo {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

// Dense problems up to this size are handled with dense eigen/SVD routines.
inline constexpr Index kDenseLimit = 2000;

inline double max_abs_entry(const SpMat& m) {
    double best = 0.0;
    for (Index k = 0; k < m.outerSize(); ++k)
        for (SpMat::InnerIterator it(m, k); it; ++it) best = std::max(best, std::abs(it.value()));
    return best;
}

inline SpMat symmetrized(const SpMat& m) {
    SpMat t = m.transpose();
    SpMat s = 0.5 * (m + t);
    s.prune(0.0);
    return s;
}

inline double asymmetry(const SpMat& m) {
    SpMat t = m.transpose();
    return max_abs_entry(SpMat(m - t));
}

inline Eigen::VectorXd symmetric_eigenvalues(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

inline double spectral_norm(const Mat& m) {
    if (m.size() == 0) return 0.0;
    Eigen::BDCSVD<Mat> svd(m);
    return svd.singularValues()(0);
}

// Largest eigenvalue of a symmetric operator given as a matvec, via ARPACK's implicitly
// restarted Lanczos. The start vector is fixed so results are reproducible. Tiny
// operators are assembled and solved densely since ARPACK needs ncv > nev. For a
// symmetric operator the returned value is within rel_tol * lambda of the spectrum.
inline double dominant_eigenvalue(const std::function<Vec(const Vec&)>& apply, Index n,
                                  double rel_tol = 1e-10, int max_restarts = 5000) {
    if (n == 0) return 0.0;
    if (n <= 32) {
        Mat m(n, n);
        for (Index j = 0; j < n; ++j) m.col(j) = apply(Vec::Unit(n, j));
        return symmetric_eigenvalues(0.5 * (m + m.transpose()))(n - 1);
    }
    const a_int nn = static_cast<a_int>(n);
    const a_int nev = 1, ncv = std::min<a_int>(nn, 48);
    const a_int lworkl = ncv * (ncv + 8);
    std::vector<double> resid(n), v(static_cast<size_t>(n * ncv)), workd(3 * static_cast<size_t>(n)), workl(lworkl);
    std::array<a_int, 11> iparam{};
    std::array<a_int, 14> ipntr{};
    iparam[0] = 1; // exact shifts
    iparam[2] = max_restarts;
    iparam[6] = 1; // regular mode, A x = lambda x

    std::mt19937_64 gen(0x5eed);
    std::uniform_real_distribution<double> unif(0.5, 1.5);
    for (auto& r : resid) r = unif(gen);

    a_int ido = 0, info = 1; // info = 1: use the supplied start vector
    while (true) {
        arpack::saupd(ido, arpack::bmat::identity, nn, arpack::which::largest_algebraic, nev, rel_tol, resid.data(),
                      ncv, v.data(), nn, iparam.data(), ipntr.data(), workd.data(), workl.data(), lworkl, info);
        if (ido != -1 && ido != 1) break;
        Eigen::Map<const Vec> x(workd.data() + ipntr[0] - 1, n);
        Eigen::Map<Vec>(workd.data() + ipntr[1] - 1, n) = apply(Vec(x));
    }
    if (info < 0) throw Error("eigenvalue iteration failed (ARPACK saupd info " + std::to_string(info) + ")");
    if (iparam[4] < nev) throw Error("eigenvalue iteration did not converge");

    std::vector<a_int> select(ncv);
    double d = 0.0, z = 0.0;
    arpack::seupd(0, arpack::howmny::ritz_vectors, select.data(), &d, &z, 1, 0.0, arpack::bmat::identity, nn,
                  arpack::which::largest_algebraic, nev, rel_tol, resid.data(), ncv, v.data(), nn, iparam.data(),
                  ipntr.data(), workd.data(), workl.data(), lworkl, info);
    if (info != 0) throw Error("eigenvalue extraction failed (ARPACK seupd info " + std::to_string(info) + ")");
    return d;
}

} // namespace nemo
