#pragma once

// Runtime audits of the convergence theory against concrete operators and traces.
// Every check is evaluated in its stated direction only; none asserts tightness.

#include "nemo/errors.hpp"
#include "nemo/linalg.hpp"
#include "nemo/multilevel.hpp"
#include "nemo/operators.hpp"
#include "nemo/problems.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace nemo {

enum class Relation { at_most, at_least };

struct AuditEntry {
    std::string name;
    Relation relation = Relation::at_most;
    double bound = 0.0;
    double observed = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::string note;
};

inline AuditEntry make_check(std::string name, double observed, Relation rel, double bound, double tol,
                             std::string note = {}) {
    AuditEntry e{std::move(name), rel, bound, observed, tol, false, std::move(note)};
    e.passed = rel == Relation::at_most ? observed <= bound + tol : observed >= bound - tol;
    return e;
}

class AuditReport {
public:
    void add(AuditEntry e) { entries_.push_back(std::move(e)); }
    void append(const AuditReport& other) {
        entries_.insert(entries_.end(), other.entries_.begin(), other.entries_.end());
    }
    const std::vector<AuditEntry>& entries() const { return entries_; }
    bool all_passed() const {
        return std::all_of(entries_.begin(), entries_.end(), [](const AuditEntry& e) { return e.passed; });
    }
    std::vector<AuditEntry> failures() const {
        std::vector<AuditEntry> out;
        for (const auto& e : entries_)
            if (!e.passed) out.push_back(e);
        return out;
    }

    void write_csv(std::ostream& os) const {
        os << "name,relation,bound,observed,tolerance,passed,note\n";
        const auto prec = os.precision(17);
        for (const auto& e : entries_)
            os << e.name << ',' << (e.relation == Relation::at_most ? "<=" : ">=") << ',' << e.bound << ','
               << e.observed << ',' << e.tolerance << ',' << (e.passed ? "pass" : "FAIL") << ",\"" << e.note << "\"\n";
        os.precision(prec);
    }

    void write_text(std::ostream& os) const {
        const auto prec = os.precision(6);
        for (const auto& e : entries_) {
            os << (e.passed ? "[pass] " : "[FAIL] ") << e.name << ": observed " << e.observed
               << (e.relation == Relation::at_most ? " <= " : " >= ") << e.bound;
            if (!e.note.empty()) os << "  (" << e.note << ')';
            os << '\n';
        }
        os.precision(prec);
    }

private:
    std::vector<AuditEntry> entries_;
};

// (P R r)_j from the closed-form stencils, j = 1..N-1. Indices outside 1..N-1 use the
// odd extension of r about the zero boundary values (r_0 = r_N = 0, r_{-1} = -r_1,
// r_{N+1} = -r_{N-1}); at j = 1 and j = N-1 this reproduces the matrix product exactly.
inline Vec prolong_restrict_stencil(const Vec& r) {
    const Index n = r.size(); // N - 1
    auto at = [&](Index j) -> double {
        if (j == 0 || j == n + 1) return 0.0;
        if (j < 0) return -r(-j - 1);
        if (j > n + 1) return -r(2 * (n + 1) - j - 1);
        return r(j - 1);
    };
    Vec out(n);
    for (Index j = 1; j <= n; ++j) {
        if (j % 2 == 0)
            out(j - 1) = 0.25 * (at(j - 1) + 2 * at(j) + at(j + 1));
        else
            out(j - 1) = 0.125 * (at(j - 2) + 2 * at(j - 1) + 2 * at(j) + 2 * at(j + 1) + at(j + 2));
    }
    return out;
}

// Interpolation error of linear prolongation/full weighting in max-norm against
// 9/(4N^2) ||A r||_inf, plus agreement of the closed-form stencils with P R r.
inline AuditReport interpolation_error_audit(const Vec& r, const TransferPair& pair, const SpMat& A) {
    if (r.size() != pair.fine_dim() || A.rows() != r.size())
        throw InvalidArgument("interpolation_error_audit: dimension mismatch");
    const double N = static_cast<double>(r.size() + 1);
    Vec pr = pair.prolong(pair.coarsen(r));
    AuditReport rep;
    const double lhs = (r - pr).lpNorm<Eigen::Infinity>();
    const double bound = 9.0 / (4.0 * N * N) * (A * r).lpNorm<Eigen::Infinity>();
    rep.add(make_check("interpolation_error_bound", lhs, Relation::at_most, bound, 1e-14 * std::max(1.0, bound)));
    const double mismatch = (prolong_restrict_stencil(r) - pr).lpNorm<Eigen::Infinity>();
    rep.add(make_check("prolong_restrict_stencil", mismatch, Relation::at_most, 0.0,
                       1e-13 * std::max(1.0, r.lpNorm<Eigen::Infinity>())));
    return rep;
}

// T = I - P (R H P)^{-1} R H as a dense matrix.
inline Mat coarse_error_propagator(const SpMat& H, const TransferPair& pair) {
    Mat Q = Mat(coarse_operator(H, pair));
    Eigen::LLT<Mat> llt(Q);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("R H P is not positive definite");
    Mat rh = Mat(SpMat(pair.R() * H));
    Mat T = Mat::Identity(H.rows(), H.cols()) - Mat(pair.P()) * llt.solve(rh);
    return T;
}

// 1 <= ||T|| <= sqrt(L/mu) for rank-deficient P, and eig(R H P) within
// [mu / xi^2, L omega^2] with the balanced operator norms.
inline AuditReport projection_norm_audit(const SpMat& H, const TransferPair& pair, double mu, double L) {
    AuditReport rep;
    if (pair.coarse_dim() == pair.fine_dim()) {
        rep.add(AuditEntry{"projection_norm", Relation::at_most, 0.0, 0.0, 0.0, true,
                           "skipped: P is square and invertible, so T = 0"});
        return rep;
    }
    const double tnorm = spectral_norm(coarse_error_propagator(H, pair));
    const double tol = 1e-10;
    rep.add(make_check("projection_norm_lower", tnorm, Relation::at_least, 1.0, tol));
    rep.add(make_check("projection_norm_upper", tnorm, Relation::at_most, std::sqrt(L / mu), tol * std::sqrt(L / mu)));
    Vec eig = symmetric_eigenvalues(Mat(coarse_operator(H, pair)));
    const double lo = mu / (pair.balanced_xi() * pair.balanced_xi());
    const double hi = L * pair.balanced_omega() * pair.balanced_omega();
    rep.add(make_check("coarse_spectrum_lower", eig(0), Relation::at_least, lo, 1e-10 * std::max(1.0, lo)));
    rep.add(make_check("coarse_spectrum_upper", eig(eig.size() - 1), Relation::at_most, hi, 1e-10 * std::max(1.0, hi)));
    return rep;
}

// Fine-step decrease constant: f_k - f_{k+1} >= lambda_h * ||g_k||^2.
inline double fine_step_decrease_constant(const ProblemConstants& k, const SolverConfig& cfg) {
    if (k.lambda_h) return *k.lambda_h;
    switch (cfg.fine_variant) {
    case FineVariant::newton: return cfg.rho1 * k.mu / (k.L * k.L);
    case FineVariant::steepest_descent: return cfg.rho1 / k.L;
    default:
        if (!k.nu || !k.zeta) throw InvalidConfig("custom metric needs lambda_h, or nu and zeta, in the constants");
        // Armijo with backtracking accepts alpha >= 2 beta (1 - rho1) zeta / (L nu^2).
        return 2.0 * cfg.beta_ls * cfg.rho1 * (1.0 - cfg.rho1) * *k.zeta * *k.zeta / (k.L * *k.nu * *k.nu);
    }
}

struct Thresholds {
    double eta = std::numeric_limits<double>::infinity(); // unit coarse step radius on chi
    double lambda_h = 0.0;
    double coarse_decrease = 0.0; // rho1 kappa^2 beta mu / (omega^2 L^2)
    double Lambda = 0.0;
    double max_coarse_bound = 0.0;
    double no_coarse_threshold = 0.0; // coarse steps stop once ||g|| < epsilon / omega
};

inline Thresholds thresholds(const ProblemConstants& k, const TransferPair& pair, const SolverConfig& cfg, double R0) {
    if (!(cfg.rho1 > 0.0 && cfg.rho1 < 0.5)) throw InvalidConfig("rho1 must lie in (0, 0.5)");
    Thresholds t;
    const double omega = pair.balanced_omega();
    const double kappa = cfg.kappa.value_or(default_kappa(pair));
    t.eta = k.M > 0.0 ? 3.0 * k.mu * k.mu * (1.0 - 2.0 * cfg.rho1) / k.M : std::numeric_limits<double>::infinity();
    t.lambda_h = fine_step_decrease_constant(k, cfg);
    t.coarse_decrease = cfg.rho1 * kappa * kappa * cfg.beta_ls * k.mu / (omega * omega * k.L * k.L);
    t.Lambda = std::min(t.lambda_h, t.coarse_decrease);
    t.max_coarse_bound = (omega / cfg.epsilon) * (omega / cfg.epsilon) * R0 * R0 / (t.Lambda * t.Lambda) - 2.0;
    t.no_coarse_threshold = cfg.epsilon / omega;
    return t;
}

inline double unit_step_radius(const ProblemConstants& k, double rho1) {
    if (!(rho1 > 0.0 && rho1 < 0.5)) throw InvalidConfig("rho1 must lie in (0, 0.5)");
    return k.M > 0.0 ? 3.0 * k.mu * k.mu * (1.0 - 2.0 * rho1) / k.M : std::numeric_limits<double>::infinity();
}

// Over-bound of the level-set radius: sqrt(L/mu) * ||x0 - x*||.
inline double level_set_radius(const ProblemConstants& k, const Vec& x0, const Vec& x_star) {
    return std::sqrt(k.L / k.mu) * (x0 - x_star).norm();
}

// Coefficient C in ||R g_{k+1}|| <= C ||R g_k||^2 after a unit coarse step.
inline double subspace_contraction_constant(const ProblemConstants& k, const TransferPair& pair) {
    const double w = pair.balanced_omega(), x = pair.balanced_xi();
    return w * w * w * x * x * x * x * k.M / (2.0 * k.mu * k.mu);
}

// Per-coarse-step decrease and the sublinear envelope f_k - f* <= R0^2 / (Lambda (2 + k)).
inline AuditReport convergence_audit(const Trace& tr, const ProblemConstants& k, const SolverConfig& cfg,
                                     const TransferPair& pair, std::optional<double> f_star, double R0) {
    AuditReport rep;
    if (!f_star) {
        rep.add(AuditEntry{"convergence", Relation::at_most, 0.0, 0.0, 0.0, true, "skipped: no optimal value supplied"});
        return rep;
    }
    const Thresholds th = thresholds(k, pair, cfg, R0);
    const double fscale = std::max({1.0, std::abs(*f_star), std::abs(tr.initial_f)});
    const double slack = 1e-12 * fscale;

    int violations = 0, coarse = 0;
    double worst = std::numeric_limits<double>::infinity();
    double f_prev = tr.initial_f, g_prev = tr.initial_grad_norm;
    for (const auto& r : tr.records) {
        if (r.step_kind == StepKind::coarse) {
            ++coarse;
            const double need = th.coarse_decrease * g_prev * g_prev;
            const double got = f_prev - r.f;
            if (got < need - slack) ++violations;
            if (need > 0.0) worst = std::min(worst, got / need);
        }
        f_prev = r.f;
        g_prev = r.grad_norm;
    }
    rep.add(make_check("coarse_step_decrease", static_cast<double>(violations), Relation::at_most, 0.0, 0.0,
                       std::to_string(coarse) + " coarse steps; smallest decrease/bound ratio " +
                           (coarse ? std::to_string(worst) : std::string("n/a"))));

    violations = 0;
    double worst_ratio = 0.0;
    auto check = [&](int kk, double f) {
        const double bound = R0 * R0 / (th.Lambda * (2.0 + kk));
        const double gap = f - *f_star;
        if (gap > bound + slack) ++violations;
        worst_ratio = std::max(worst_ratio, gap / bound);
    };
    check(0, tr.initial_f);
    for (size_t j = 0; j < tr.records.size(); ++j) check(static_cast<int>(j) + 1, tr.records[j].f);
    rep.add(make_check("sublinear_envelope", static_cast<double>(violations), Relation::at_most, 0.0, 0.0,
                       "largest gap/bound ratio " + std::to_string(worst_ratio)));
    return rep;
}

struct CompositeRate {
    double lhs = 0.0;     // ||x_{k+1} - x*||
    double r1_term = 0.0; // ||T|| ||(I - P R)(x_k - x*)||
    double r2_term = 0.0; // M omega^2 xi^2 / (2 mu) ||x_k - x*||^2
};

inline CompositeRate composite_rate_decomposition(const IterationRecord& step, const Vec& x_k, const Vec& x_next,
                                                  const Vec& x_star, const SpMat& H_k, const TransferPair& pair,
                                                  const ProblemConstants& k) {
    if (step.step_kind != StepKind::coarse || step.alpha != 1.0)
        throw InvalidArgument("composite_rate_decomposition: step was not a unit coarse step");
    CompositeRate out;
    const Vec e = x_k - x_star;
    out.lhs = (x_next - x_star).norm();
    if (e.norm() == 0.0) return out;
    const double tnorm = spectral_norm(coarse_error_propagator(H_k, pair));
    out.r1_term = tnorm * (e - pair.prolong(pair.coarsen(e))).norm();
    const double w = pair.balanced_omega(), x = pair.balanced_xi();
    out.r2_term = k.M * w * w * x * x / (2.0 * k.mu) * e.squaredNorm();
    return out;
}

// Closed-form linear term for the 1D pair: 9 / (4 N^{3/2}) sqrt(L/mu) ||A (x_k - x*)||.
inline double interpolation_rate_bound(int N, const ProblemConstants& k, const SpMat& A, const Vec& error) {
    return 9.0 / (4.0 * std::pow(static_cast<double>(N), 1.5)) * std::sqrt(k.L / k.mu) * (A * error).norm();
}

// ||A (x - x*)||, the smoothness measure used to compare fine and coarse steps.
struct SmoothingMetric {
    SpMat A;
    Vec x_star;
    double operator()(const Vec& x) const { return (A * (x - x_star)).norm(); }
};

struct SmoothingSummary {
    double fine_median = 0.0;   // median relative reduction of the metric over fine steps
    double coarse_median = 0.0; // same over coarse steps
    double coarse_f_share = 0.0; // fraction of f_0 - f_final contributed by coarse steps
    int fine_steps = 0;
    int coarse_steps = 0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Needs a trace recorded with keep_iterates.
inline SmoothingSummary smoothing_complementarity(const Trace& tr, const SmoothingMetric& metric) {
    if (tr.iterates.size() != tr.records.size() + 1)
        throw InvalidArgument("smoothing_complementarity: trace was recorded without iterates");
    std::vector<double> fine, coarse;
    double coarse_drop = 0.0;
    double f_prev = tr.initial_f;
    double m_prev = metric(tr.iterates.front());
    for (size_t j = 0; j < tr.records.size(); ++j) {
        const double m_next = metric(tr.iterates[j + 1]);
        const double red = m_prev > 0.0 ? (m_prev - m_next) / m_prev : 0.0;
        if (tr.records[j].step_kind == StepKind::coarse) {
            coarse.push_back(red);
            coarse_drop += f_prev - tr.records[j].f;
        } else {
            fine.push_back(red);
        }
        m_prev = m_next;
        f_prev = tr.records[j].f;
    }
    SmoothingSummary s;
    s.fine_steps = static_cast<int>(fine.size());
    s.coarse_steps = static_cast<int>(coarse.size());
    s.fine_median = median(fine);
    s.coarse_median = median(coarse);
    const double total = tr.initial_f - f_prev;
    s.coarse_f_share = total > 0.0 ? coarse_drop / total : 0.0;
    return s;
}

} // namespace nemo
