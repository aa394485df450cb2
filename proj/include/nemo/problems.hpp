#pragma once

// Objective oracles: the 1D Poisson quadratic, the 2D nonlinear penalty problem,
// and the Laplacian matrices they are built from.

#include "nemo/errors.hpp"
#include "nemo/linalg.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace nemo {

class ObjectiveOracle {
public:
    virtual ~ObjectiveOracle() = default;
    virtual Index dimension() const = 0;
    virtual double value(const Vec& x) const = 0;
    virtual Vec gradient(const Vec& x) const = 0;
    virtual SpMat hessian(const Vec& x) const = 0;
    virtual bool is_quadratic() const { return false; }
};

struct ProblemConstants {
    double mu = 0.0;
    double L = 0.0;
    double M = 0.0;
    std::optional<double> nu;
    std::optional<double> zeta;
    std::optional<double> lambda_h;
    bool estimated = false;
    bool nonconvex_warning = false;
};

// f(x) = 1/2 x^T A x - b^T x with A symmetric positive definite.
class QuadraticObjective : public ObjectiveOracle {
public:
    QuadraticObjective(SpMat A, Vec b) : A_(std::move(A)), b_(std::move(b)) {
        if (A_.rows() != A_.cols() || A_.rows() != b_.size())
            throw InvalidArgument("quadratic objective: dimension mismatch");
        A_.makeCompressed();
    }
    Index dimension() const override { return b_.size(); }
    double value(const Vec& x) const override { return 0.5 * x.dot(A_ * x) - b_.dot(x); }
    Vec gradient(const Vec& x) const override { return A_ * x - b_; }
    SpMat hessian(const Vec&) const override { return A_; }
    bool is_quadratic() const override { return true; }

    const SpMat& matrix() const { return A_; }
    const Vec& rhs() const { return b_; }

    Vec minimizer() const {
        Eigen::SimplicialLLT<SpMat> llt(A_);
        if (llt.info() != Eigen::Success) throw NotPositiveDefinite("quadratic objective matrix is not positive definite");
        return llt.solve(b_);
    }

private:
    SpMat A_;
    Vec b_;
};

// N^2 * tridiag(-1, 2, -1), size (N-1) x (N-1).
inline SpMat build_laplacian_1d(int N) {
    if (N < 2) throw InvalidArgument("build_laplacian_1d: N must be at least 2");
    const int n = N - 1;
    const double s = static_cast<double>(N) * N;
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < n; ++i) {
        t.emplace_back(i, i, 2.0 * s);
        if (i > 0) t.emplace_back(i, i - 1, -s);
        if (i + 1 < n) t.emplace_back(i, i + 1, -s);
    }
    SpMat A(n, n);
    A.setFromTriplets(t.begin(), t.end());
    return A;
}

inline double poisson_forcing(double q) {
    constexpr double pi = std::numbers::pi;
    return std::sin(4 * pi * q) + 8 * std::sin(32 * pi * q) + 16 * std::sin(64 * pi * q);
}

inline QuadraticObjective build_poisson_1d(int N) {
    if (N < 4) throw InvalidArgument("build_poisson_1d: N must be at least 4");
    Vec b(N - 1);
    for (int i = 1; i < N; ++i) b(i - 1) = poisson_forcing(static_cast<double>(i) / N);
    return QuadraticObjective(build_laplacian_1d(N), b);
}

inline int interior_per_axis(int level) { return (1 << level) - 1; }

// Bilinear-element stiffness on the interior of a (2^level + 1)^2 grid: 8/3 on the
// diagonal and -1/3 for each of the eight neighbours. Unknown (i1, i2) sits at
// index i1 * n + i2.
inline SpMat build_laplacian_2d(int level) {
    if (level < 2 || level > 14) throw InvalidArgument("build_laplacian_2d: level must be in [2, 14]");
    const int n = interior_per_axis(level);
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(static_cast<size_t>(9) * n * n);
    for (int i1 = 0; i1 < n; ++i1)
        for (int i2 = 0; i2 < n; ++i2) {
            const int row = i1 * n + i2;
            for (int d1 = -1; d1 <= 1; ++d1)
                for (int d2 = -1; d2 <= 1; ++d2) {
                    const int j1 = i1 + d1, j2 = i2 + d2;
                    if (j1 < 0 || j1 >= n || j2 < 0 || j2 >= n) continue;
                    t.emplace_back(row, j1 * n + j2, (d1 == 0 && d2 == 0) ? 8.0 / 3.0 : -1.0 / 3.0);
                }
        }
    SpMat A(n * n, n * n);
    A.setFromTriplets(t.begin(), t.end());
    return A;
}

inline double example1_source(double x1, double x2) {
    constexpr double pi = std::numbers::pi;
    const double u = x1 * x1 - x1 * x1 * x1;
    return (9 * pi * pi + std::exp(u * std::sin(3 * pi * x2)) * u + 6 * x1 - 2) * std::sin(3 * pi * x1);
}

// How the source function becomes the load vector. `lumped_mass` multiplies the
// nodal value by the cell area h^2, matching the unscaled element stiffness;
// `pointwise` uses the bare nodal value.
enum class LoadScaling { lumped_mass, pointwise };

// f(x) = 1/2 x^T A x + h*lambda * sum(x_i^2 e^{x_i} - e^{x_i}) - b^T x.
class Example1Objective : public ObjectiveOracle {
public:
    Example1Objective(int level, double lambda, LoadScaling load)
        : level_(level), n_axis_(interior_per_axis(level)), lambda_(lambda), A_(build_laplacian_2d(level)) {
        h_ = 1.0 / (n_axis_ + 1);
        const double scale = load == LoadScaling::lumped_mass ? h_ * h_ : 1.0;
        b_.resize(static_cast<Index>(n_axis_) * n_axis_);
        for (int i1 = 0; i1 < n_axis_; ++i1)
            for (int i2 = 0; i2 < n_axis_; ++i2)
                b_(i1 * n_axis_ + i2) = scale * example1_source((i1 + 1) * h_, (i2 + 1) * h_);
    }

    Index dimension() const override { return b_.size(); }

    double value(const Vec& x) const override {
        double pen = 0.0;
        for (Index i = 0; i < x.size(); ++i) pen += std::exp(x(i)) * (x(i) * x(i) - 1.0);
        return 0.5 * x.dot(A_ * x) + h_ * lambda_ * pen - b_.dot(x);
    }

    Vec gradient(const Vec& x) const override {
        Vec g = A_ * x - b_;
        for (Index i = 0; i < x.size(); ++i) g(i) += h_ * lambda_ * std::exp(x(i)) * (x(i) * x(i) + 2 * x(i) - 1.0);
        return g;
    }

    SpMat hessian(const Vec& x) const override {
        SpMat H = A_;
        for (Index i = 0; i < x.size(); ++i) H.coeffRef(i, i) += penalty_curvature(x(i));
        return H;
    }

    // Second derivative of one penalty term; negative on (-2-sqrt3, -2+sqrt3).
    double penalty_curvature(double t) const { return h_ * lambda_ * std::exp(t) * (t * t + 4 * t + 1); }
    double penalty_third(double t) const { return h_ * lambda_ * std::exp(t) * (t * t + 6 * t + 5); }

    // True when some coordinate lies where the penalty is concave.
    bool in_nonconvex_band(const Vec& x) const {
        const double lo = -2.0 - std::sqrt(3.0), hi = -2.0 + std::sqrt(3.0);
        for (Index i = 0; i < x.size(); ++i)
            if (x(i) > lo && x(i) < hi) return true;
        return false;
    }

    // Bounds valid for every x with all coordinates in [lo, hi]: mu and L from Weyl's
    // inequality around the extreme eigenvalues of A, M from the largest third derivative.
    ProblemConstants constants_on_box(double lo, double hi) const;

    const SpMat& laplacian() const { return A_; }
    const Vec& load() const { return b_; }
    double h() const { return h_; }
    double lambda() const { return lambda_; }
    int level() const { return level_; }

private:
    int level_;
    int n_axis_;
    double lambda_;
    double h_ = 0.0;
    SpMat A_;
    Vec b_;
};

inline Example1Objective build_example1(int level, double lambda = 10.0, LoadScaling load = LoadScaling::lumped_mass) {
    if (level < 2) throw InvalidArgument("build_example1: level must be at least 2");
    return Example1Objective(level, lambda, load);
}

// Extreme eigenvalues of a symmetric matrix. Dense below the size limit; above it the
// largest comes from power iteration and the smallest from power iteration on the inverse.
inline std::pair<double, double> extreme_eigenvalues(const SpMat& A) {
    const Index n = A.rows();
    if (n <= kDenseLimit) {
        Vec e = symmetric_eigenvalues(Mat(A));
        return {e(0), e(n - 1)};
    }
    double top = dominant_eigenvalue([&](const Vec& v) { return Vec(A * v); }, n);
    Eigen::SimplicialLDLT<SpMat> ldlt(A);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
        return {-std::numeric_limits<double>::infinity(), top};
    double inv = dominant_eigenvalue([&](const Vec& v) { return Vec(ldlt.solve(v)); }, n);
    return {1.0 / inv, top};
}

inline ProblemConstants Example1Objective::constants_on_box(double lo, double hi) const {
    if (!(lo <= hi)) throw InvalidArgument("constants_on_box: empty interval");
    const auto a_spectrum = extreme_eigenvalues(A_);
    // Sample the penalty derivatives densely and include the interior critical points.
    double cmin = std::numeric_limits<double>::infinity(), cmax = -cmin, third = 0.0;
    auto visit = [&](double t) {
        if (t < lo || t > hi) return;
        cmin = std::min(cmin, penalty_curvature(t));
        cmax = std::max(cmax, penalty_curvature(t));
        third = std::max(third, std::abs(penalty_third(t)));
    };
    const int samples = 4096;
    for (int k = 0; k <= samples; ++k) visit(lo + (hi - lo) * k / samples);
    // Stationary points of e^t(t^2+4t+1) are t = -3 +- 2, of e^t(t^2+6t+5) are t = -4 +- sqrt5.
    for (double t : {-5.0, -1.0, -4.0 - std::sqrt(5.0), -4.0 + std::sqrt(5.0)}) visit(t);
    ProblemConstants k;
    k.mu = a_spectrum.first + cmin;
    k.L = a_spectrum.second + cmax;
    k.M = third;
    k.estimated = false;
    k.nonconvex_warning = !(k.mu > 0.0);
    return k;
}

// Sampling for nonlinear oracles: points are center + scale * standard normal.
struct SamplingRegion {
    double center = 0.0;
    double scale = 1.0;
    unsigned long long seed = 7;
};

inline ProblemConstants estimate_constants(const ObjectiveOracle& oracle, int sample_count,
                                           const SamplingRegion& region = {}) {
    if (sample_count < 1) throw InvalidArgument("estimate_constants: sample_count must be at least 1");
    const Index n = oracle.dimension();
    ProblemConstants k;
    if (oracle.is_quadratic()) {
        auto [lo, hi] = extreme_eigenvalues(oracle.hessian(Vec::Zero(n)));
        k.mu = lo;
        k.L = hi;
        k.M = 0.0;
        k.nonconvex_warning = !(lo > 0.0);
        return k;
    }
    std::mt19937_64 gen(region.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vec> pts;
    std::vector<SpMat> hess;
    k.mu = std::numeric_limits<double>::infinity();
    k.L = -k.mu;
    for (int s = 0; s < sample_count; ++s) {
        Vec x(n);
        for (Index i = 0; i < n; ++i) x(i) = region.center + region.scale * normal(gen);
        SpMat H = oracle.hessian(x);
        auto [lo, hi] = extreme_eigenvalues(H);
        k.mu = std::min(k.mu, lo);
        k.L = std::max(k.L, hi);
        pts.push_back(std::move(x));
        hess.push_back(std::move(H));
    }
    for (size_t a = 0; a < pts.size(); ++a)
        for (size_t b = a + 1; b < pts.size(); ++b) {
            SpMat diff = hess[a] - hess[b];
            auto [lo, hi] = extreme_eigenvalues(diff);
            double dn = std::max(std::abs(lo), std::abs(hi));
            k.M = std::max(k.M, dn / (pts[a] - pts[b]).norm());
        }
    k.estimated = true;
    k.nonconvex_warning = !(k.mu > 0.0);
    return k;
}

} // namespace nemo
