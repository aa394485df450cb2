#pragma once

// Two-level Newton-type optimization: Galerkin coarse steps, variable-metric fine
// steps, Armijo backtracking, and schedules over several transfer operators.

#include "nemo/errors.hpp"
#include "nemo/linalg.hpp"
#include "nemo/linear_solvers.hpp"
#include "nemo/operators.hpp"
#include "nemo/problems.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

namespace nemo {

enum class StepKind { coarse, fine };
enum class FineVariant { newton, steepest_descent, custom_metric };
enum class InnerSolver { direct, two_grid };
enum class Schedule { single, cyclical, probabilistic };
enum class TraceStatus { converged, iteration_limit, error };

inline const char* to_string(StepKind k) { return k == StepKind::coarse ? "coarse" : "fine"; }
inline const char* to_string(TraceStatus s) {
    switch (s) {
    case TraceStatus::converged: return "converged";
    case TraceStatus::iteration_limit: return "iteration_limit";
    default: return "error";
    }
}

struct SolverConfig {
    std::optional<double> kappa; // unset: coarse/fine dimension ratio of the first pair
    double epsilon = 0.1;
    double rho1 = 0.01;
    double beta_ls = 0.5;
    double eps_stop = 1e-9;
    int max_iter = 1000;
    FineVariant fine_variant = FineVariant::newton;
    InnerSolver inner_solver = InnerSolver::direct;
    Schedule schedule = Schedule::single;
    std::vector<double> probabilities; // probabilistic schedule masses, one per pair
    unsigned long long seed = 0;

    std::shared_ptr<const TransferPair> mg_pair; // required for two-grid inner solves
    double mg_tol = 0.1;
    std::shared_ptr<const SpMat> custom_metric; // required for the custom_metric variant
    bool keep_iterates = false;

    void validate() const {
        if (kappa && !(*kappa > 0.0 && *kappa < 1.0)) throw InvalidConfig("kappa must lie in (0, 1)");
        if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidConfig("epsilon must lie in (0, 1)");
        if (!(rho1 > 0.0 && rho1 < 0.5)) throw InvalidConfig("rho1 must lie in (0, 0.5)");
        if (!(beta_ls > 0.0 && beta_ls < 1.0)) throw InvalidConfig("beta_ls must lie in (0, 1)");
        if (!(eps_stop > 0.0)) throw InvalidConfig("eps_stop must be positive");
        if (max_iter < 1) throw InvalidConfig("max_iter must be positive");
        if (inner_solver == InnerSolver::two_grid && !mg_pair)
            throw InvalidConfig("two-grid inner solver needs a transfer pair");
        if (fine_variant == FineVariant::custom_metric && !custom_metric)
            throw InvalidConfig("custom metric variant needs a metric matrix");
    }
};

inline double default_kappa(const TransferPair& pair) {
    return static_cast<double>(pair.coarse_dim()) / static_cast<double>(pair.fine_dim());
}

struct IterationRecord {
    int k = 0;
    StepKind step_kind = StepKind::fine;
    double alpha = 0.0;
    // f and the norms are evaluated at the point reached by this step.
    double f = 0.0;
    double grad_norm = 0.0;
    std::optional<double> restricted_grad_norm;
    std::optional<double> chi;
    std::optional<int> operator_index;
    int mg_cycles = 0;
};

struct Trace {
    std::vector<IterationRecord> records;
    Vec final_x;
    TraceStatus status = TraceStatus::error;
    std::string message;

    double initial_f = 0.0;
    double initial_grad_norm = 0.0;
    std::optional<double> initial_restricted_grad_norm;

    int coarse_steps = 0;
    int fine_steps = 0; // also the number of fine-level Newton solves for that variant
    int mg_cycles = 0;
    std::vector<Vec> iterates; // x_0, x_1, ... when requested

    int total_steps() const { return static_cast<int>(records.size()); }
};

// R H P with a positive-definiteness check.
inline SpMat galerkin_coarse_hessian(const SpMat& H, const TransferPair& pair) {
    SpMat Q = coarse_operator(H, pair);
    Eigen::SimplicialLLT<SpMat> llt(Q);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("coarse Hessian R H P is not positive definite");
    return Q;
}

struct CoarseStep {
    Vec direction;
    double chi = 0.0;
};

// d = -P (R H P)^{-1} R g. chi^2 carries the factor c so that g^T d = -chi^2 and
// d^T H d = chi^2 hold for any c.
inline CoarseStep coarse_correction_step(const Vec& g, const SpMat& H, const TransferPair& pair) {
    if (g.size() != pair.fine_dim()) throw InvalidArgument("coarse_correction_step: gradient length mismatch");
    SpMat Q = coarse_operator(H, pair);
    Eigen::SimplicialLLT<SpMat> llt(Q);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("coarse Hessian R H P is not positive definite");
    Vec rg = pair.coarsen(g);
    Vec coarse_dir = -llt.solve(rg);
    CoarseStep out;
    out.direction = pair.prolong(coarse_dir);
    out.chi = std::sqrt(std::max(0.0, -pair.c() * rg.dot(coarse_dir)));
    return out;
}

struct FineStep {
    Vec direction;
    int mg_cycles = 0;
};

struct InnerSolve {
    InnerSolver kind = InnerSolver::direct;
    const TransferPair* mg_pair = nullptr;
    double mg_tol = 0.1;
};

// d = -Q^{-1} g with Q the identity, the Hessian, or a supplied SPD metric.
inline FineStep fine_correction_step(const Vec& g, FineVariant variant, const SpMat* metric, const InnerSolve& solver = {}) {
    FineStep out;
    if (variant == FineVariant::steepest_descent) {
        out.direction = -g;
        return out;
    }
    if (!metric) throw InvalidArgument("fine_correction_step: metric matrix required for this variant");
    LinearSystem sys{*metric, -g};
    if (solver.kind == InnerSolver::direct) {
        out.direction = direct_spd_solve(sys);
        return out;
    }
    if (!solver.mg_pair) throw InvalidConfig("fine_correction_step: two-grid solve needs a transfer pair");
    TwoGridOptions opt;
    opt.tol = solver.mg_tol;
    auto res = two_grid_solve(sys, *solver.mg_pair, opt);
    out.direction = std::move(res.x);
    out.mg_cycles = res.iterations;
    return out;
}

// Coarse only when both inequalities are strict; ties go to the fine step.
inline StepKind select_step(double restricted_norm, double grad_norm, double kappa, double epsilon) {
    return (restricted_norm > kappa * grad_norm && restricted_norm > epsilon) ? StepKind::coarse : StepKind::fine;
}

inline StepKind select_step(const Vec& g, const TransferPair& pair, const SolverConfig& cfg) {
    const double kappa = cfg.kappa.value_or(default_kappa(pair));
    return select_step(pair.restricted_norm(g), g.norm(), kappa, cfg.epsilon);
}

struct LineSearchResult {
    double alpha = 1.0;
    double f = 0.0;
    int backtracks = 0;
};

inline constexpr int kMaxBacktracks = 60;

inline LineSearchResult armijo_backtrack(const ObjectiveOracle& oracle, const Vec& x, double f0, const Vec& g,
                                         const Vec& d, double rho1, double beta) {
    const double slope = g.dot(d);
    if (!(slope < 0.0)) throw InvalidDirection("line search: direction is not a descent direction");
    LineSearchResult res;
    for (int q = 0; q <= kMaxBacktracks; ++q) {
        const double ft = oracle.value(x + res.alpha * d);
        if (std::isfinite(ft) && ft <= f0 + rho1 * res.alpha * slope) {
            res.f = ft;
            res.backtracks = q;
            return res;
        }
        res.alpha *= beta;
    }
    throw LineSearchFailure("line search: Armijo condition not met after 60 backtracks");
}

inline double armijo_backtrack(const ObjectiveOracle& oracle, const Vec& x, const Vec& d, const SolverConfig& cfg) {
    return armijo_backtrack(oracle, x, oracle.value(x), oracle.gradient(x), d, cfg.rho1, cfg.beta_ls).alpha;
}

// Picks which transfer operator the next iteration tests. Indices are zero-based.
class OperatorSchedule {
public:
    OperatorSchedule(Schedule kind, size_t count, std::vector<double> masses = {}, unsigned long long seed = 0)
        : kind_(kind), count_(count), gen_(seed) {
        if (count_ == 0) throw InvalidConfig("schedule: at least one operator is required");
        if (kind_ == Schedule::probabilistic) {
            if (masses.size() != count_) throw InvalidConfig("schedule: one probability per operator is required");
            double sum = 0.0;
            for (double m : masses) {
                if (!(m > 0.0)) throw InvalidConfig("schedule: probabilities must be strictly positive");
                sum += m;
            }
            if (std::abs(sum - 1.0) > 1e-12) throw InvalidConfig("schedule: probabilities must sum to 1");
            dist_ = std::discrete_distribution<size_t>(masses.begin(), masses.end());
        }
    }

    size_t next() {
        switch (kind_) {
        case Schedule::single: return 0;
        case Schedule::cyclical: return cursor_++ % count_;
        default: return dist_(gen_);
        }
    }

private:
    Schedule kind_;
    size_t count_;
    size_t cursor_ = 0;
    std::mt19937_64 gen_;
    std::discrete_distribution<size_t> dist_;
};

inline size_t schedule_next_operator(OperatorSchedule& schedule) { return schedule.next(); }

inline Vec gaussian_start(Index n, double sigma, unsigned long long seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    Vec x(n);
    for (Index i = 0; i < n; ++i) x(i) = normal(gen);
    return x;
}

// With an empty `pairs` list every step is a fine step, i.e. the plain
// variable-metric method.
inline Trace nemo_solve(const ObjectiveOracle& oracle, const std::vector<TransferPair>& pairs, const SolverConfig& cfg,
                        const Vec& x0) {
    cfg.validate();
    if (x0.size() != oracle.dimension()) throw InvalidArgument("nemo_solve: initial point has the wrong length");
    for (const auto& p : pairs)
        if (p.fine_dim() != oracle.dimension()) throw InvalidArgument("nemo_solve: transfer pair does not match the problem");

    std::optional<OperatorSchedule> schedule;
    if (!pairs.empty()) schedule.emplace(cfg.schedule, pairs.size(), cfg.probabilities, cfg.seed);
    const InnerSolve inner{cfg.inner_solver, cfg.mg_pair.get(), cfg.mg_tol};

    Trace tr;
    Vec x = x0;
    double f = oracle.value(x);
    Vec g = oracle.gradient(x);
    tr.initial_f = f;
    tr.initial_grad_norm = g.norm();
    if (!pairs.empty()) tr.initial_restricted_grad_norm = pairs.front().restricted_norm(g);
    if (cfg.keep_iterates) tr.iterates.push_back(x);

    try {
        for (int k = 0; k < cfg.max_iter && g.norm() > cfg.eps_stop; ++k) {
            IterationRecord rec;
            rec.k = k;
            const TransferPair* pair = nullptr;
            StepKind kind = StepKind::fine;
            if (schedule) {
                const size_t idx = schedule->next();
                pair = &pairs[idx];
                const double kappa = cfg.kappa.value_or(default_kappa(pairs.front()));
                kind = select_step(pair->restricted_norm(g), g.norm(), kappa, cfg.epsilon);
                if (kind == StepKind::coarse) rec.operator_index = static_cast<int>(idx);
            }

            Vec d;
            if (kind == StepKind::coarse) {
                SpMat H = oracle.hessian(x);
                CoarseStep cs = coarse_correction_step(g, H, *pair);
                d = std::move(cs.direction);
                rec.chi = cs.chi;
            } else {
                FineStep fs;
                if (cfg.fine_variant == FineVariant::newton) {
                    SpMat H = oracle.hessian(x);
                    fs = fine_correction_step(g, cfg.fine_variant, &H, inner);
                } else {
                    fs = fine_correction_step(g, cfg.fine_variant, cfg.custom_metric.get(), inner);
                }
                d = std::move(fs.direction);
                rec.mg_cycles = fs.mg_cycles;
            }

            LineSearchResult ls = armijo_backtrack(oracle, x, f, g, d, cfg.rho1, cfg.beta_ls);
            x += ls.alpha * d;
            f = ls.f;
            g = oracle.gradient(x);

            rec.step_kind = kind;
            rec.alpha = ls.alpha;
            rec.f = f;
            rec.grad_norm = g.norm();
            if (pair) rec.restricted_grad_norm = pair->restricted_norm(g);
            (kind == StepKind::coarse ? tr.coarse_steps : tr.fine_steps) += 1;
            tr.mg_cycles += rec.mg_cycles;
            tr.records.push_back(rec);
            if (cfg.keep_iterates) tr.iterates.push_back(x);
        }
        tr.status = g.norm() <= cfg.eps_stop ? TraceStatus::converged : TraceStatus::iteration_limit;
    } catch (const Error& e) {
        tr.status = TraceStatus::error;
        tr.message = e.what();
    }
    tr.final_x = x;
    return tr;
}

inline void write_trace_csv(std::ostream& os, const Trace& tr) {
    os << "k,step_kind,alpha,f,grad_norm,restricted_grad_norm,chi,operator_index\n";
    const auto old_prec = os.precision(17);
    for (const auto& r : tr.records) {
        os << r.k << ',' << to_string(r.step_kind) << ',' << r.alpha << ',' << r.f << ',' << r.grad_norm << ',';
        if (r.restricted_grad_norm) os << *r.restricted_grad_norm;
        os << ',';
        if (r.chi) os << *r.chi;
        os << ',';
        if (r.operator_index) os << *r.operator_index;
        os << '\n';
    }
    os.precision(old_prec);
}

} // namespace nemo
