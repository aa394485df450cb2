#include "nemo/experiment.hpp"
#include "nemo/multilevel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

using namespace nemo;

namespace {

Vec random_vec(Index n, std::mt19937_64& gen) {
    std::normal_distribution<double> d(0.0, 1.0);
    Vec v(n);
    for (Index i = 0; i < n; ++i) v(i) = d(gen);
    return v;
}

QuadraticObjective tiny_poisson() {
    Vec b(3);
    b << 0, 16, 0;
    return QuadraticObjective(build_laplacian_1d(4), b);
}

// f(x) = 1/2 x^2 on the real line.
QuadraticObjective half_square() {
    SpMat one(1, 1);
    one.insert(0, 0) = 1.0;
    return QuadraticObjective(one, Vec::Zero(1));
}

} // namespace

TEST(GalerkinHessian, SmallestLaplacian) {
    SpMat Q = galerkin_coarse_hessian(build_laplacian_1d(4), build_interp_1d(4));
    EXPECT_NEAR(Q.coeff(0, 0), 8.0, 1e-14);
}

TEST(GalerkinHessian, IdentityPairReturnsMatrix) {
    SpMat A = build_laplacian_1d(8);
    EXPECT_LE(max_abs_entry(SpMat(galerkin_coarse_hessian(A, identity_pair(7)) - A)), 1e-12);
}

TEST(GalerkinHessian, IndefiniteThrows) {
    Mat H = Mat::Identity(3, 3);
    H(1, 1) = -5.0;
    EXPECT_THROW(galerkin_coarse_hessian(H.sparseView(), build_interp_1d(4)), NotPositiveDefinite);
}

TEST(GalerkinHessian, SpectrumWithinBalancedBounds) {
    std::mt19937_64 gen(31);
    for (int t = 0; t < 50; ++t) {
        Mat H = random_spd(15, gen);
        Vec e = symmetric_eigenvalues(H);
        TransferPair pair(random_dense_prolongation(15, 6, gen), 1.0 + t % 3);
        Vec q = symmetric_eigenvalues(Mat(galerkin_coarse_hessian(H.sparseView(), pair)));
        const double lo = e(0) / std::pow(pair.balanced_xi(), 2), hi = e(14) * std::pow(pair.balanced_omega(), 2);
        EXPECT_GE(q(0), lo * (1 - 1e-10));
        EXPECT_LE(q(5), hi * (1 + 1e-10));
    }
}

TEST(CoarseStep, SmallestPoissonLandsOnMinimizer) {
    auto p = tiny_poisson();
    auto pair = build_interp_1d(4);
    Vec x = Vec::Zero(3);
    Vec g = p.gradient(x);
    EXPECT_NEAR(pair.coarsen(g)(0), -8.0, 1e-14);
    auto step = coarse_correction_step(g, p.hessian(x), pair);
    EXPECT_NEAR(step.direction(0), 0.5, 1e-14);
    EXPECT_NEAR(step.direction(1), 1.0, 1e-14);
    EXPECT_NEAR(step.direction(2), 0.5, 1e-14);
    EXPECT_LE(p.gradient(x + step.direction).norm(), 1e-12);
}

TEST(CoarseStep, GradientInKernelOfRestriction) {
    auto pair = build_interp_1d(4);
    Vec g(3);
    g << 1, 0, -1;
    ASSERT_EQ(pair.coarsen(g).norm(), 0.0);
    auto step = coarse_correction_step(g, build_laplacian_1d(4), pair);
    EXPECT_EQ(step.direction.norm(), 0.0);
    EXPECT_EQ(step.chi, 0.0);
}

TEST(CoarseStep, IdentityPairGivesNewton) {
    std::mt19937_64 gen(1);
    Mat H = random_spd(8, gen);
    Vec g = random_vec(8, gen);
    auto step = coarse_correction_step(g, H.sparseView(), identity_pair(8));
    EXPECT_LE((step.direction + H.llt().solve(g)).norm(), 1e-10 * g.norm());
}

TEST(CoarseStep, DescentAndChiIdentities) {
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<int> dim(2, 40);
    for (int t = 0; t < 200; ++t) {
        const Index n = dim(gen);
        std::uniform_int_distribution<Index> cd(1, n - 1);
        const Index m = cd(gen);
        Mat H = random_spd(n, gen);
        TransferPair pair(random_dense_prolongation(n, m, gen), 0.5 + (t % 4));
        Vec g = random_vec(n, gen);
        auto step = coarse_correction_step(g, H.sparseView(), pair);
        const double chi2 = step.chi * step.chi;
        EXPECT_LE(g.dot(step.direction), 0.0);
        EXPECT_NEAR(g.dot(step.direction), -chi2, 1e-8 * chi2);
        EXPECT_NEAR(step.direction.dot(H * step.direction), chi2, 1e-8 * chi2);
    }
}

TEST(FineStep, IdentityMetric) {
    Vec g(2);
    g << 1, -2;
    auto d = fine_correction_step(g, FineVariant::steepest_descent, nullptr).direction;
    EXPECT_EQ(d, -g);
}

TEST(FineStep, NewtonOnQuadraticIsExact) {
    auto p = build_poisson_1d(32);
    std::mt19937_64 gen(2);
    Vec x = random_vec(31, gen);
    SpMat H = p.hessian(x);
    auto d = fine_correction_step(p.gradient(x), FineVariant::newton, &H).direction;
    EXPECT_LE((x + d - p.minimizer()).norm(), 1e-10 * p.minimizer().norm());
}

TEST(FineStep, DiagonalCustomMetric) {
    Vec g(2), diag(2);
    g << 2, 4;
    diag << 2, 4;
    SpMat M = Mat(diag.asDiagonal()).sparseView();
    auto d = fine_correction_step(g, FineVariant::custom_metric, &M).direction;
    EXPECT_NEAR(d(0), -1.0, 1e-15);
    EXPECT_NEAR(d(1), -1.0, 1e-15);
}

TEST(FineStep, MissingMetricThrows) {
    EXPECT_THROW(fine_correction_step(Vec::Ones(2), FineVariant::newton, nullptr), InvalidArgument);
}

TEST(FineStep, TwoGridReportsCycles) {
    auto p = build_poisson_1d(64);
    auto pair = build_interp_1d(64);
    SpMat H = p.matrix();
    auto fs = fine_correction_step(p.gradient(Vec::Zero(63)), FineVariant::newton, &H,
                                   InnerSolve{InnerSolver::two_grid, &pair, 0.1});
    EXPECT_GE(fs.mg_cycles, 1);
    EXPECT_LE(scaled_residual({H, -p.gradient(Vec::Zero(63))}, fs.direction), 0.1);
}

TEST(SelectStep, ClearCoarseCase) {
    auto pair = build_interp_1d(4);
    Vec g(3);
    g << 0, -16, 0;
    EXPECT_NEAR(pair.coarsen(g).norm(), 8.0, 1e-14);
    SolverConfig cfg;
    cfg.kappa = 0.4;
    cfg.epsilon = 0.1;
    EXPECT_EQ(select_step(g, pair, cfg), StepKind::coarse);
}

TEST(SelectStep, KernelGradientGoesFine) {
    auto pair = build_interp_1d(4);
    Vec g(3);
    g << 1, 0, -1;
    SolverConfig cfg;
    cfg.kappa = 0.01;
    EXPECT_EQ(select_step(g, pair, cfg), StepKind::fine);
}

TEST(SelectStep, TiesGoFine) {
    EXPECT_EQ(select_step(0.5, 1.0, 0.5, 0.1), StepKind::fine);
    EXPECT_EQ(select_step(0.1, 0.01, 0.5, 0.1), StepKind::fine);
    EXPECT_EQ(select_step(0.50001, 1.0, 0.5, 0.1), StepKind::coarse);
}

TEST(SelectStep, KappaAboveRestrictionNormNeverCoarse) {
    // The tested quantity is bounded by the balanced restriction norm times ||g||.
    auto pair = build_interp_1d(32);
    const double r_norm = std::sqrt(pair.c()) * spectral_norm(Mat(pair.R()));
    ASSERT_LT(r_norm, 1.0);
    SolverConfig cfg;
    cfg.kappa = r_norm;
    cfg.epsilon = 1e-12;
    std::mt19937_64 gen(8);
    for (int t = 0; t < 500; ++t) EXPECT_EQ(select_step(random_vec(31, gen), pair, cfg), StepKind::fine);
}

TEST(Armijo, UnitStepAccepted) {
    auto f = half_square();
    Vec x = Vec::Ones(1), d = -Vec::Ones(1);
    SolverConfig cfg;
    cfg.rho1 = 0.01;
    EXPECT_EQ(armijo_backtrack(f, x, d, cfg), 1.0);
}

TEST(Armijo, BacktracksTwice) {
    auto f = half_square();
    Vec x = Vec::Ones(1), d = Vec::Constant(1, -4.0);
    auto r = armijo_backtrack(f, x, f.value(x), f.gradient(x), d, 0.25, 0.5);
    EXPECT_EQ(r.alpha, 0.25);
    EXPECT_EQ(r.backtracks, 2);
    EXPECT_DOUBLE_EQ(r.f, 0.0);
}

TEST(Armijo, CoarseStepOnQuadraticTakesUnitStep) {
    std::mt19937_64 gen(5);
    auto p = build_poisson_1d(64);
    auto pair = build_interp_1d(64);
    SolverConfig cfg;
    cfg.rho1 = 0.49;
    for (int t = 0; t < 10; ++t) {
        Vec x = random_vec(63, gen);
        auto step = coarse_correction_step(p.gradient(x), p.matrix(), pair);
        EXPECT_EQ(armijo_backtrack(p, x, step.direction, cfg), 1.0);
    }
}

TEST(Armijo, AscentDirectionThrows) {
    auto f = half_square();
    SolverConfig cfg;
    EXPECT_THROW(armijo_backtrack(f, Vec::Ones(1), Vec::Ones(1), cfg), InvalidDirection);
}

namespace {

// Reports a descent slope at the origin, but every move away from it increases f.
class Plateau : public ObjectiveOracle {
public:
    Index dimension() const override { return 1; }
    double value(const Vec& x) const override { return std::abs(x(0)); }
    Vec gradient(const Vec&) const override { return Vec::Ones(1); }
    SpMat hessian(const Vec&) const override {
        SpMat h(1, 1);
        h.insert(0, 0) = 1.0;
        return h;
    }
};

} // namespace

TEST(Armijo, ExhaustionThrows) {
    Plateau f;
    SolverConfig cfg;
    EXPECT_THROW(armijo_backtrack(f, Vec::Zero(1), -Vec::Ones(1), cfg), LineSearchFailure);
}

TEST(Schedule, Cyclical) {
    OperatorSchedule s(Schedule::cyclical, 3);
    std::vector<size_t> seq;
    for (int i = 0; i < 7; ++i) seq.push_back(schedule_next_operator(s));
    EXPECT_EQ(seq, (std::vector<size_t>{0, 1, 2, 0, 1, 2, 0}));
}

TEST(Schedule, SingleAlwaysFirst) {
    OperatorSchedule s(Schedule::single, 4);
    for (int i = 0; i < 10; ++i) EXPECT_EQ(s.next(), 0u);
}

TEST(Schedule, ProbabilisticFrequency) {
    OperatorSchedule s(Schedule::probabilistic, 2, {0.5, 0.5}, 42);
    int first = 0;
    for (int i = 0; i < 10000; ++i) first += s.next() == 0;
    EXPECT_GE(first / 10000.0, 0.48);
    EXPECT_LE(first / 10000.0, 0.52);
}

TEST(Schedule, BadMassesRejected) {
    EXPECT_THROW(OperatorSchedule(Schedule::probabilistic, 2, {0.7, 0.7}), InvalidConfig);
    EXPECT_THROW(OperatorSchedule(Schedule::probabilistic, 2, {1.0, 0.0}), InvalidConfig);
    EXPECT_THROW(OperatorSchedule(Schedule::probabilistic, 3, {0.5, 0.5}), InvalidConfig);
    EXPECT_THROW(OperatorSchedule(Schedule::cyclical, 0), InvalidConfig);
}

TEST(NemoSolve, SmallestPoissonConvergesQuickly) {
    auto p = tiny_poisson();
    SolverConfig cfg;
    cfg.kappa = 0.4;
    auto tr = nemo_solve(p, {build_interp_1d(4)}, cfg, Vec::Zero(3));
    EXPECT_EQ(tr.status, TraceStatus::converged);
    EXPECT_LE(tr.total_steps(), 2);
    EXPECT_EQ(tr.records.front().step_kind, StepKind::coarse);
}

TEST(NemoSolve, StartAtOptimumGivesEmptyTrace) {
    auto p = build_poisson_1d(16);
    auto tr = nemo_solve(p, {build_interp_1d(16)}, SolverConfig{}, p.minimizer());
    EXPECT_EQ(tr.status, TraceStatus::converged);
    EXPECT_TRUE(tr.records.empty());
}

TEST(NemoSolve, PoissonTraceInterleavesStepKinds) {
    auto cfg = poisson_reference_config(512);
    auto out = solve_experiment(cfg);
    const auto& tr = out.trace;
    ASSERT_EQ(tr.status, TraceStatus::converged) << tr.message;
    EXPECT_GT(tr.coarse_steps, 0);
    EXPECT_GT(tr.fine_steps, 0);
    bool fine_after_coarse = false;
    for (size_t j = 1; j < tr.records.size(); ++j)
        fine_after_coarse |= tr.records[j - 1].step_kind == StepKind::coarse && tr.records[j].step_kind == StepKind::fine;
    EXPECT_TRUE(fine_after_coarse);
}

TEST(NemoSolve, ObjectiveIsMonotoneAndCoarseStepsDescend) {
    for (unsigned seed = 0; seed < 4; ++seed) {
        auto cfg = poisson_reference_config(64);
        cfg.solver.seed = seed;
        auto out = solve_experiment(cfg);
        const auto& tr = out.trace;
        ASSERT_EQ(tr.status, TraceStatus::converged);
        auto p = build_poisson_1d(64);
        auto pair = transfer_to_level(cfg, 5);
        double f = tr.initial_f;
        for (size_t j = 0; j < tr.records.size(); ++j) {
            EXPECT_LE(tr.records[j].f, f);
            f = tr.records[j].f;
            if (tr.records[j].step_kind != StepKind::coarse) continue;
            const Vec& x = tr.iterates[j];
            Vec g = p.gradient(x);
            auto step = coarse_correction_step(g, p.matrix(), pair);
            EXPECT_LT(g.dot(step.direction), 0.0);
            EXPECT_NEAR(*tr.records[j].chi, step.chi, 1e-12 * step.chi);
        }
    }
}

TEST(NemoSolve, IdentityPairWithTinyEpsilonIsNewton) {
    auto p = build_poisson_1d(32);
    SolverConfig cfg;
    cfg.kappa = 0.5;
    cfg.epsilon = 1e-12;
    std::mt19937_64 gen(3);
    auto tr = nemo_solve(p, {identity_pair(31)}, cfg, random_vec(31, gen));
    EXPECT_EQ(tr.status, TraceStatus::converged);
    EXPECT_EQ(tr.total_steps(), 1);
}

TEST(NemoSolve, EmptyPairListRunsFineStepsOnly) {
    auto p = build_poisson_1d(32);
    auto tr = nemo_solve(p, {}, SolverConfig{}, Vec::Zero(31));
    EXPECT_EQ(tr.status, TraceStatus::converged);
    EXPECT_EQ(tr.coarse_steps, 0);
    EXPECT_FALSE(tr.records.front().restricted_grad_norm);
}

TEST(NemoSolve, UnitCoarseStepAnnihilatesRestrictedGradient) {
    for (int N : {64, 256}) {
        auto p = build_poisson_1d(N);
        auto pair = build_interp_1d(N);
        SolverConfig cfg;
        cfg.kappa = 0.01;
        cfg.epsilon = 1e-6;
        cfg.max_iter = 1;
        auto tr = nemo_solve(p, {pair}, cfg, Vec::Zero(N - 1));
        ASSERT_EQ(tr.records.size(), 1u);
        ASSERT_EQ(tr.records[0].step_kind, StepKind::coarse);
        EXPECT_EQ(tr.records[0].alpha, 1.0);
        EXPECT_LE(*tr.records[0].restricted_grad_norm, 1e-10 * *tr.initial_restricted_grad_norm + 1e-12);
    }
}

TEST(NemoSolve, InvalidKappaRejected) {
    SolverConfig cfg;
    cfg.kappa = 1.5;
    EXPECT_THROW(cfg.validate(), InvalidConfig);
    auto p = build_poisson_1d(8);
    EXPECT_THROW(nemo_solve(p, {build_interp_1d(8)}, cfg, Vec::Zero(7)), InvalidConfig);
}

TEST(NemoSolve, TwoGridWithoutPairRejected) {
    SolverConfig cfg;
    cfg.inner_solver = InnerSolver::two_grid;
    EXPECT_THROW(cfg.validate(), InvalidConfig);
}

TEST(NemoSolve, CyclicalScheduleRecordsOperatorIndex) {
    auto p = build_poisson_1d(64);
    std::vector<TransferPair> pairs{build_interp_1d(64), compose_transfers(build_interp_1d(64), build_interp_1d(32))};
    SolverConfig cfg;
    cfg.kappa = 0.3;
    cfg.epsilon = 1e-6;
    cfg.schedule = Schedule::cyclical;
    auto tr = nemo_solve(p, pairs, cfg, gaussian_start(63, 5.0, 0));
    EXPECT_EQ(tr.status, TraceStatus::converged);
    for (const auto& r : tr.records) {
        if (r.step_kind == StepKind::coarse) {
            ASSERT_TRUE(r.operator_index);
            EXPECT_EQ(*r.operator_index, r.k % 2);
        } else {
            EXPECT_FALSE(r.operator_index);
        }
    }
}

TEST(TraceCsv, HeaderAndRows) {
    auto p = tiny_poisson();
    SolverConfig cfg;
    cfg.kappa = 0.4;
    auto tr = nemo_solve(p, {build_interp_1d(4)}, cfg, Vec::Zero(3));
    std::ostringstream os;
    write_trace_csv(os, tr);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "k,step_kind,alpha,f,grad_norm,restricted_grad_norm,chi,operator_index");
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 7);
    }
    EXPECT_EQ(rows, tr.total_steps());
    EXPECT_EQ(os.str().find('\r'), std::string::npos);
}

TEST(GaussianStart, SeedDeterminesPoint) {
    EXPECT_EQ(gaussian_start(10, 5.0, 3), gaussian_start(10, 5.0, 3));
    EXPECT_NE(gaussian_start(10, 5.0, 3), gaussian_start(10, 5.0, 4));
}
