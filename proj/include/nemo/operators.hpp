#pragma once

// Prolongation/restriction pairs between nested grids.
//
// A pair stores the prolongation P (fine x coarse) and the constant c with
// P = c * R^T. R is derived from P, so that relation holds by construction.
// The analysis formulas are written for c = 1; the "balanced" accessors rescale
// to P/sqrt(c) and sqrt(c)*R, which leaves R H P, P R and the coarse step unchanged.

#include "nemo/errors.hpp"
#include "nemo/linalg.hpp"

#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace nemo {

struct OperatorNorms {
    double omega = 0.0; // max(||P||, ||R||)
    double xi = 0.0;    // ||(RP)^{-1} R||
};

namespace detail {

struct NormCache {
    std::once_flag once;
    OperatorNorms value;
    std::exception_ptr failure;
};

inline OperatorNorms compute_norms(const SpMat& P, const SpMat& R) {
    const Index n = P.cols();
    if (n == 0) throw InvalidArgument("transfer pair has an empty coarse space");
    SpMat gram = SpMat(P.transpose() * P);
    SpMat rp = SpMat(R * P);
    SpMat rrt = SpMat(R * R.transpose());

    OperatorNorms out;
    if (n <= kDenseLimit) {
        Vec gram_eigs = symmetric_eigenvalues(Mat(gram));
        double p_norm = std::sqrt(std::max(0.0, gram_eigs(n - 1)));
        double r_norm = std::sqrt(std::max(0.0, symmetric_eigenvalues(Mat(rrt))(n - 1)));
        out.omega = std::max(p_norm, r_norm);

        Eigen::SelfAdjointEigenSolver<Mat> es{Mat(rp)};
        const Vec& lam = es.eigenvalues();
        if (!(lam(0) > 1e-12 * std::abs(lam(n - 1))))
            throw RankDeficiency("R*P is numerically singular");
        Mat rp_inv = es.eigenvectors() * lam.cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
        Mat k = rp_inv * Mat(rrt) * rp_inv.transpose();
        out.xi = std::sqrt(std::max(0.0, symmetric_eigenvalues(0.5 * (k + k.transpose()))(n - 1)));
        return out;
    }

    double p_norm2 = dominant_eigenvalue([&](const Vec& v) { return Vec(gram * v); }, n);
    double r_norm2 = dominant_eigenvalue([&](const Vec& v) { return Vec(rrt * v); }, n);
    out.omega = std::sqrt(std::max(p_norm2, r_norm2));

    Eigen::SimplicialLDLT<SpMat> ldlt(rp);
    if (ldlt.info() != Eigen::Success) throw RankDeficiency("R*P factorization failed");
    const Vec d = ldlt.vectorD();
    if (!(d.minCoeff() > 1e-12 * d.cwiseAbs().maxCoeff()))
        throw RankDeficiency("R*P is numerically singular");
    double xi2 = dominant_eigenvalue(
        [&](const Vec& v) {
            Vec y = ldlt.solve(v);
            Vec z = rrt * y;
            return Vec(ldlt.solve(z));
        },
        n);
    out.xi = std::sqrt(xi2);
    return out;
}

} // namespace detail

class TransferPair {
public:
    TransferPair(SpMat prolongation, double c)
        : P_(std::move(prolongation)), c_(c), cache_(std::make_shared<detail::NormCache>()) {
        if (!(c_ > 0.0)) throw InvalidArgument("transfer constant c must be positive");
        P_.makeCompressed();
        R_ = SpMat(P_.transpose()) / c_;
        R_.makeCompressed();
    }

    const SpMat& P() const { return P_; }
    const SpMat& R() const { return R_; }
    double c() const { return c_; }
    Index fine_dim() const { return P_.rows(); }
    Index coarse_dim() const { return P_.cols(); }

    // Computed on first use and shared between copies.
    const OperatorNorms& norms() const {
        std::call_once(cache_->once, [this] {
            try {
                cache_->value = detail::compute_norms(P_, R_);
            } catch (...) {
                cache_->failure = std::current_exception();
            }
        });
        if (cache_->failure) std::rethrow_exception(cache_->failure);
        return cache_->value;
    }
    double omega() const { return norms().omega; }
    double xi() const { return norms().xi; }

    // Norms of the rescaled pair P/sqrt(c), sqrt(c)*R used by the convergence theory.
    double balanced_omega() const;
    double balanced_xi() const { return std::sqrt(c_) * xi(); }

    Vec prolong(const Vec& v) const {
        if (v.size() != coarse_dim()) throw InvalidArgument("prolong: vector length does not match coarse dimension");
        return P_ * v;
    }
    Vec coarsen(const Vec& v) const {
        if (v.size() != fine_dim()) throw InvalidArgument("restrict: vector length does not match fine dimension");
        return R_ * v;
    }
    // ||sqrt(c) R g||; this is the quantity compared against kappa and epsilon.
    double restricted_norm(const Vec& g) const { return std::sqrt(c_) * coarsen(g).norm(); }

private:
    SpMat P_;
    SpMat R_;
    double c_;
    std::shared_ptr<detail::NormCache> cache_;
};

inline double TransferPair::balanced_omega() const {
    // ||P||/sqrt(c) == sqrt(c)*||R||, so both members of the max coincide.
    const double p_norm = c_ >= 1.0 ? omega() : omega() * c_;
    return p_norm / std::sqrt(c_);
}

enum class Direction { prolong, restrict_ };

inline Vec apply_transfer(const TransferPair& pair, const Vec& v, Direction dir) {
    return dir == Direction::prolong ? pair.prolong(v) : pair.coarsen(v);
}

inline OperatorNorms operator_norms(const TransferPair& pair) { return pair.norms(); }

// R H P, averaged with its transpose to remove rounding asymmetry.
inline SpMat coarse_operator(const SpMat& H, const TransferPair& pair) {
    if (H.rows() != pair.fine_dim() || H.cols() != pair.fine_dim())
        throw InvalidArgument("coarse_operator: matrix size does not match the fine dimension");
    SpMat hp = H * pair.P();
    return symmetrized(SpMat(pair.R() * hp));
}

inline SpMat interp_1d_matrix(int N) {
    const int nf = N - 1, nc = N / 2 - 1;
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(3 * nc);
    for (int j = 0; j < nc; ++j) {
        t.emplace_back(2 * j, j, 0.5);
        t.emplace_back(2 * j + 1, j, 1.0);
        t.emplace_back(2 * j + 2, j, 0.5);
    }
    SpMat P(nf, nc);
    P.setFromTriplets(t.begin(), t.end());
    return P;
}

// Linear interpolation from N/2 to N intervals on [0,1], interior nodes only.
inline TransferPair build_interp_1d(int N) {
    if (N < 4 || N % 2 != 0) throw InvalidArgument("build_interp_1d: N must be even and at least 4");
    return TransferPair(interp_1d_matrix(N), 2.0);
}

inline SpMat kron(const SpMat& a, const SpMat& b) {
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(a.nonZeros() * b.nonZeros()));
    for (Index ka = 0; ka < a.outerSize(); ++ka)
        for (SpMat::InnerIterator ia(a, ka); ia; ++ia)
            for (Index kb = 0; kb < b.outerSize(); ++kb)
                for (SpMat::InnerIterator ib(b, kb); ib; ++ib)
                    t.emplace_back(ia.row() * b.rows() + ib.row(), ia.col() * b.cols() + ib.col(),
                                   ia.value() * ib.value());
    SpMat out(a.rows() * b.rows(), a.cols() * b.cols());
    out.setFromTriplets(t.begin(), t.end());
    return out;
}

// Nine-point bilinear interpolation from grid level `level` ((2^level - 1)^2 interior
// unknowns) to level+1. Unknowns are ordered i1 * n + i2, i.e. x2 varies fastest.
inline TransferPair build_interp_2d(int level) {
    if (level < 1 || level > 14) throw InvalidArgument("build_interp_2d: level must be in [1, 14]");
    SpMat p1 = interp_1d_matrix(1 << (level + 1));
    return TransferPair(kron(p1, p1), 4.0);
}

inline TransferPair identity_pair(Index n) {
    SpMat I(n, n);
    I.setIdentity();
    return TransferPair(I, 1.0);
}

// outer: middle -> fine, inner: coarse -> middle.
inline TransferPair compose_transfers(const TransferPair& outer, const TransferPair& inner) {
    if (inner.fine_dim() != outer.coarse_dim())
        throw InvalidArgument("compose_transfers: inner fine dimension differs from outer coarse dimension");
    return TransferPair(SpMat(outer.P() * inner.P()), outer.c() * inner.c());
}

// Chain of 2D pairs from coarse_level up to fine_level.
inline TransferPair build_interp_2d_chain(int fine_level, int coarse_level) {
    if (coarse_level < 1 || coarse_level >= fine_level)
        throw InvalidArgument("2D transfer chain needs 1 <= coarse level < fine level");
    TransferPair acc = build_interp_2d(coarse_level);
    for (int l = coarse_level + 1; l < fine_level; ++l) acc = compose_transfers(build_interp_2d(l), acc);
    return acc;
}

struct PairValidation {
    bool transpose_consistent = false;
    bool full_rank = false;
    double measured_c = 0.0;
    double max_deviation = 0.0; // max |P - c R^T|
    double sigma_min = 0.0;
    bool passed() const { return transpose_consistent && full_rank; }
    std::string message;
};

inline double smallest_singular_value(const SpMat& P) {
    const Index n = P.cols();
    if (n == 0) return 0.0;
    if (n <= kDenseLimit) {
        Vec eig = symmetric_eigenvalues(Mat(SpMat(P.transpose() * P)));
        return std::sqrt(std::max(0.0, eig(0)));
    }
    SpMat gram = SpMat(P.transpose() * P);
    Eigen::SimplicialLDLT<SpMat> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) return 0.0;
    double inv = dominant_eigenvalue([&](const Vec& v) { return Vec(ldlt.solve(v)); }, n);
    return 1.0 / std::sqrt(inv);
}

// Checks P = c R^T and full column rank for explicitly given matrices.
inline PairValidation validate_matrices(const SpMat& P, const SpMat& R) {
    PairValidation rep;
    std::ostringstream msg;
    if (R.rows() != P.cols() || R.cols() != P.rows()) {
        rep.message = "shape mismatch between P and R^T";
        return rep;
    }
    SpMat rt = R.transpose();
    double num = 0.0, den = 0.0;
    for (Index k = 0; k < P.outerSize(); ++k)
        for (SpMat::InnerIterator it(P, k); it; ++it) num += it.value() * rt.coeff(it.row(), it.col());
    for (Index k = 0; k < rt.outerSize(); ++k)
        for (SpMat::InnerIterator it(rt, k); it; ++it) den += it.value() * it.value();
    rep.measured_c = den > 0.0 ? num / den : 0.0;
    rep.max_deviation = max_abs_entry(SpMat(P - rep.measured_c * rt));
    rep.transpose_consistent = rep.measured_c > 0.0 && rep.max_deviation <= 1e-12;
    rep.sigma_min = smallest_singular_value(P);
    rep.full_rank = rep.sigma_min > 1e-10;
    if (!rep.transpose_consistent) msg << "P is not a positive multiple of R^T (max deviation " << rep.max_deviation << "); ";
    if (!rep.full_rank) msg << "rank deficiency: smallest singular value of P is " << rep.sigma_min << "; ";
    rep.message = msg.str();
    return rep;
}

inline PairValidation validate_pair(const TransferPair& pair) { return validate_matrices(pair.P(), pair.R()); }

// Text format: a header line "transfer_pair <rows> <cols> <c> <nnz>" then one
// "row col value" triplet per line, zero-based.
inline void write_pair(std::ostream& os, const TransferPair& pair) {
    os.precision(17);
    os << "transfer_pair " << pair.fine_dim() << ' ' << pair.coarse_dim() << ' ' << pair.c() << ' '
       << pair.P().nonZeros() << '\n';
    for (Index k = 0; k < pair.P().outerSize(); ++k)
        for (SpMat::InnerIterator it(pair.P(), k); it; ++it)
            os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

inline TransferPair read_pair(std::istream& is) {
    std::string tag;
    Index rows = 0, cols = 0, nnz = 0;
    double c = 0.0;
    if (!(is >> tag >> rows >> cols >> c >> nnz) || tag != "transfer_pair")
        throw InvalidArgument("read_pair: malformed header");
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(nnz));
    for (Index k = 0; k < nnz; ++k) {
        Index i = 0, j = 0;
        double v = 0.0;
        if (!(is >> i >> j >> v) || i < 0 || j < 0 || i >= rows || j >= cols)
            throw InvalidArgument("read_pair: malformed triplet");
        t.emplace_back(i, j, v);
    }
    SpMat P(rows, cols);
    P.setFromTriplets(t.begin(), t.end());
    return TransferPair(P, c);
}

} // namespace nemo
