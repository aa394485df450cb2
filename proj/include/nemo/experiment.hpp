#pragma once

// Experiment harness: key=value configuration files, single runs with CSV export,
// side-by-side variant comparison and the randomized verification battery.

#include "nemo/analysis.hpp"
#include "nemo/errors.hpp"
#include "nemo/linear_solvers.hpp"
#include "nemo/multilevel.hpp"
#include "nemo/operators.hpp"
#include "nemo/problems.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nemo {

inline constexpr const char* kOutputDirEnv = "NEMO_OUTPUT_DIR";

enum class ProblemKind { poisson1d, example1 };

struct ExperimentConfig {
    ProblemKind problem = ProblemKind::poisson1d;
    int N = 64;          // poisson1d: number of intervals (a power of two)
    int fine_level = 4;  // example1 grid level; poisson1d uses log2(N)
    std::vector<int> nemo_coarse_levels; // absolute levels; empty means fine steps only
    bool coarse_levels_given = false;
    std::optional<int> mg_coarse_level;
    double lambda = 10.0;
    LoadScaling load = LoadScaling::lumped_mass;
    std::string init = "gauss"; // gauss | zero
    double init_scale = 5.0;
    SolverConfig solver;
    std::string output_dir = ".";
    std::string name = "trace";

    int problem_level() const;
    std::vector<int> coarse_levels() const;
};

inline int log2_exact(int n) {
    int l = 0;
    while ((1 << l) < n) ++l;
    if ((1 << l) != n) throw InvalidConfig("N must be a power of two");
    return l;
}

inline int ExperimentConfig::problem_level() const {
    return problem == ProblemKind::poisson1d ? log2_exact(N) : fine_level;
}

inline std::vector<int> ExperimentConfig::coarse_levels() const {
    if (coarse_levels_given) return nemo_coarse_levels;
    return {problem_level() - 1};
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidConfig("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline long long to_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        long long d = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw InvalidConfig("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

} // namespace detail

// Applies one key=value setting. Section names in files are only for grouping.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    auto& s = cfg.solver;
    if (key == "problem") {
        if (value == "poisson1d") cfg.problem = ProblemKind::poisson1d;
        else if (value == "example1") cfg.problem = ProblemKind::example1;
        else throw InvalidConfig("unknown problem '" + value + "'");
    } else if (key == "N") {
        cfg.N = static_cast<int>(to_int(key, value));
    } else if (key == "fine_level" || key == "level") {
        cfg.fine_level = static_cast<int>(to_int(key, value));
    } else if (key == "nemo_coarse_level" || key == "coarse_level") {
        cfg.coarse_levels_given = true;
        cfg.nemo_coarse_levels.clear();
        if (value != "none")
            for (const auto& item : split_list(value)) cfg.nemo_coarse_levels.push_back(static_cast<int>(to_int(key, item)));
    } else if (key == "mg_coarse_level") {
        cfg.mg_coarse_level = static_cast<int>(to_int(key, value));
    } else if (key == "lambda") {
        cfg.lambda = to_double(key, value);
    } else if (key == "load") {
        if (value == "lumped_mass") cfg.load = LoadScaling::lumped_mass;
        else if (value == "pointwise") cfg.load = LoadScaling::pointwise;
        else throw InvalidConfig("unknown load scaling '" + value + "'");
    } else if (key == "init") {
        if (value != "gauss" && value != "zero") throw InvalidConfig("init must be gauss or zero");
        cfg.init = value;
    } else if (key == "init_scale") {
        cfg.init_scale = to_double(key, value);
    } else if (key == "kappa") {
        if (value == "auto") s.kappa.reset();
        else s.kappa = to_double(key, value);
    } else if (key == "epsilon") {
        s.epsilon = to_double(key, value);
    } else if (key == "rho1") {
        s.rho1 = to_double(key, value);
    } else if (key == "beta_ls") {
        s.beta_ls = to_double(key, value);
    } else if (key == "eps_stop") {
        s.eps_stop = to_double(key, value);
    } else if (key == "max_iter") {
        s.max_iter = static_cast<int>(to_int(key, value));
    } else if (key == "fine_variant") {
        if (value == "newton") s.fine_variant = FineVariant::newton;
        else if (value == "steepest_descent") s.fine_variant = FineVariant::steepest_descent;
        else if (value == "custom_metric") s.fine_variant = FineVariant::custom_metric;
        else throw InvalidConfig("unknown fine_variant '" + value + "'");
    } else if (key == "inner_solver" || key == "fine_solver") {
        if (value == "direct") s.inner_solver = InnerSolver::direct;
        else if (value == "two_grid") s.inner_solver = InnerSolver::two_grid;
        else throw InvalidConfig("unknown inner solver '" + value + "'");
    } else if (key == "schedule") {
        if (value == "single") s.schedule = Schedule::single;
        else if (value == "cyclical") s.schedule = Schedule::cyclical;
        else if (value == "probabilistic") s.schedule = Schedule::probabilistic;
        else throw InvalidConfig("unknown schedule '" + value + "'");
    } else if (key == "probabilities") {
        s.probabilities.clear();
        for (const auto& item : split_list(value)) s.probabilities.push_back(to_double(key, item));
    } else if (key == "seed") {
        s.seed = static_cast<unsigned long long>(to_int(key, value));
    } else if (key == "mg_tol") {
        s.mg_tol = to_double(key, value);
    } else if (key == "output" || key == "output_dir") {
        cfg.output_dir = value;
    } else if (key == "name") {
        cfg.name = value;
    } else {
        throw InvalidConfig("unknown config key '" + key + "'");
    }
}

inline ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw InvalidConfig("line " + std::to_string(lineno) + ": malformed section header");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw InvalidConfig("line " + std::to_string(lineno) + ": expected key = value");
        apply_setting(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidConfig("cannot read config file '" + path + "'");
    return parse_config(in);
}

inline void validate_experiment(const ExperimentConfig& cfg) {
    if (cfg.problem == ProblemKind::poisson1d && cfg.N < 4) throw InvalidConfig("N must be at least 4");
    if (cfg.problem == ProblemKind::example1 && cfg.fine_level < 2) throw InvalidConfig("fine_level must be at least 2");
    const int fine = cfg.problem_level();
    const int min_level = 1;
    for (int l : cfg.coarse_levels())
        if (l >= fine || l < min_level) throw InvalidConfig("coarse levels must lie strictly below the fine level");
    if (cfg.mg_coarse_level && (*cfg.mg_coarse_level >= fine || *cfg.mg_coarse_level < min_level))
        throw InvalidConfig("mg_coarse_level must lie strictly below the fine level");
    if (!(cfg.init_scale >= 0.0)) throw InvalidConfig("init_scale must be nonnegative");
    SolverConfig probe = cfg.solver;
    probe.mg_pair.reset();
    probe.inner_solver = InnerSolver::direct;
    probe.validate();
}

// Transfer pair from an absolute coarse level up to the problem's fine level.
inline TransferPair transfer_to_level(const ExperimentConfig& cfg, int coarse_level) {
    const int fine = cfg.problem_level();
    if (cfg.problem == ProblemKind::example1) return build_interp_2d_chain(fine, coarse_level);
    TransferPair acc = build_interp_1d(1 << (coarse_level + 1));
    for (int l = coarse_level + 2; l <= fine; ++l) acc = compose_transfers(build_interp_1d(1 << l), acc);
    return acc;
}

inline std::unique_ptr<ObjectiveOracle> build_problem(const ExperimentConfig& cfg) {
    if (cfg.problem == ProblemKind::poisson1d) return std::make_unique<QuadraticObjective>(build_poisson_1d(cfg.N));
    return std::make_unique<Example1Objective>(build_example1(cfg.fine_level, cfg.lambda, cfg.load));
}

inline Vec initial_point(const ExperimentConfig& cfg, Index n) {
    if (cfg.init == "zero") return Vec::Zero(n);
    return gaussian_start(n, cfg.init_scale, cfg.solver.seed);
}

inline std::string output_directory(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return cfg.output_dir;
}

struct RunOutcome {
    Trace trace;
    Index fine_variables = 0;
    Index coarse_variables = 0; // of the first transfer pair, or the fine size without one
    double wall_seconds = 0.0;
    bool two_grid = false;
    std::string csv_path;

    int exit_code() const {
        switch (trace.status) {
        case TraceStatus::converged: return 0;
        case TraceStatus::iteration_limit: return 2;
        default: return 1;
        }
    }
    std::string summary() const {
        std::ostringstream os;
        os << "status=" << to_string(trace.status) << " total_iter=" << trace.total_steps()
           << " fine_iter=" << trace.fine_steps << " mg_iter=";
        if (two_grid) os << trace.mg_cycles;
        else os << '-';
        os << std::fixed << std::setprecision(3) << " wall_time_s=" << wall_seconds;
        if (!trace.message.empty()) os << " message=\"" << trace.message << '"';
        return os.str();
    }
};

// Solves without touching the filesystem.
inline RunOutcome solve_experiment(const ExperimentConfig& cfg) {
    validate_experiment(cfg);
    auto problem = build_problem(cfg);
    std::vector<TransferPair> pairs;
    for (int l : cfg.coarse_levels()) pairs.push_back(transfer_to_level(cfg, l));

    SolverConfig solver = cfg.solver;
    RunOutcome out;
    if (solver.inner_solver == InnerSolver::two_grid) {
        const int mg = cfg.mg_coarse_level.value_or(cfg.problem_level() - 1);
        solver.mg_pair = std::make_shared<const TransferPair>(transfer_to_level(cfg, mg));
        out.two_grid = true;
    }
    if (!pairs.empty() && !solver.kappa) solver.kappa = default_kappa(pairs.front());

    out.fine_variables = problem->dimension();
    out.coarse_variables = pairs.empty() ? problem->dimension() : pairs.front().coarse_dim();
    const Vec x0 = initial_point(cfg, problem->dimension());
    const auto t0 = std::chrono::steady_clock::now();
    out.trace = nemo_solve(*problem, pairs, solver, x0);
    out.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
    RunOutcome out = solve_experiment(cfg);
    std::filesystem::path dir = output_directory(cfg);
    std::filesystem::create_directories(dir);
    const auto path = dir / (cfg.name + ".csv");
    std::ofstream csv(path, std::ios::binary);
    if (!csv) throw Error("cannot write trace file '" + path.string() + "'");
    write_trace_csv(csv, out.trace);
    out.csv_path = path.string();
    return out;
}

enum class Variant { newton_only, nemo_direct, nemo_two_grid };

inline Variant parse_variant(const std::string& s) {
    if (s == "newton_only") return Variant::newton_only;
    if (s == "nemo_direct") return Variant::nemo_direct;
    if (s == "nemo_two_grid") return Variant::nemo_two_grid;
    throw InvalidArgument("unknown variant '" + s + "'");
}

inline const char* to_string(Variant v) {
    switch (v) {
    case Variant::newton_only: return "newton_only";
    case Variant::nemo_direct: return "nemo_direct";
    default: return "nemo_two_grid";
    }
}

struct ComparisonRow {
    Variant variant = Variant::newton_only;
    int levels_down = 0;
    Index coarse_variables = 0;
    RunOutcome outcome;
};

// Every variant starts from the same seeded point. NeMO variants get one row per
// configured coarse level.
inline std::vector<ComparisonRow> compare_variants(const ExperimentConfig& cfg, const std::vector<Variant>& variants) {
    if (variants.size() < 2) throw InvalidArgument("compare needs at least two variants");
    std::vector<ComparisonRow> rows;
    const int fine = cfg.problem_level();
    for (Variant v : variants) {
        if (v == Variant::newton_only) {
            ExperimentConfig c = cfg;
            c.coarse_levels_given = true;
            c.nemo_coarse_levels.clear();
            c.solver.inner_solver = InnerSolver::direct;
            ComparisonRow row{v, 0, 0, solve_experiment(c)};
            row.coarse_variables = row.outcome.fine_variables;
            rows.push_back(std::move(row));
            continue;
        }
        for (int level : cfg.coarse_levels()) {
            ExperimentConfig c = cfg;
            c.coarse_levels_given = true;
            c.nemo_coarse_levels = {level};
            c.solver.inner_solver = v == Variant::nemo_two_grid ? InnerSolver::two_grid : InnerSolver::direct;
            ComparisonRow row{v, fine - level, 0, solve_experiment(c)};
            row.coarse_variables = row.outcome.coarse_variables;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline void write_comparison_table(std::ostream& os, const std::vector<ComparisonRow>& rows) {
    os << std::left << std::setw(15) << "variant" << std::right << std::setw(13) << "coarse level" << std::setw(18)
       << "coarse variables" << std::setw(12) << "total iter" << std::setw(11) << "fine iter" << std::setw(9)
       << "mg iter" << std::setw(12) << "wall time" << "  status\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(15) << to_string(r.variant) << std::right << std::setw(13) << r.levels_down
           << std::setw(18) << r.coarse_variables << std::setw(12) << r.outcome.trace.total_steps() << std::setw(11)
           << r.outcome.trace.fine_steps << std::setw(9)
           << (r.outcome.two_grid ? std::to_string(r.outcome.trace.mg_cycles) : std::string("-")) << std::setw(12)
           << std::fixed << std::setprecision(3) << r.outcome.wall_seconds << "  " << to_string(r.outcome.trace.status)
           << '\n';
    }
}

// Reference Poisson configuration used by the theory checks: steepest-descent fine
// steps from a seeded Gaussian start.
inline ExperimentConfig poisson_reference_config(int N) {
    ExperimentConfig cfg;
    cfg.problem = ProblemKind::poisson1d;
    cfg.N = N;
    cfg.init = "gauss";
    cfg.solver.fine_variant = FineVariant::steepest_descent;
    cfg.solver.kappa = 0.5;
    cfg.solver.epsilon = 1e-6;
    cfg.solver.max_iter = 5000;
    cfg.solver.seed = 0;
    cfg.solver.keep_iterates = true;
    return cfg;
}

// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Mat random_spd(Index n, std::mt19937_64& gen, double lo = 0.5, double hi = 50.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(lo, hi);
    Mat g(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) g(i, j) = normal(gen);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ();
    Vec d(n);
    for (Index i = 0; i < n; ++i) d(i) = unif(gen);
    Mat a = q * d.asDiagonal() * q.transpose();
    return 0.5 * (a + a.transpose());
}

inline SpMat random_dense_prolongation(Index fine, Index coarse, std::mt19937_64& gen) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Mat p(fine, coarse);
    for (Index i = 0; i < fine; ++i)
        for (Index j = 0; j < coarse; ++j) p(i, j) = normal(gen);
    return p.sparseView();
}

inline AuditReport verify_operators(unsigned long long seed = 2024) {
    AuditReport rep;
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int N = 4; N <= 1024; N *= 2) {
        auto v = validate_pair(build_interp_1d(N));
        rep.add(make_check("pair_1d_N" + std::to_string(N), v.passed() ? 1.0 : 0.0, Relation::at_least, 1.0, 0.0, v.message));
    }
    for (int level = 1; level <= 4; ++level) {
        auto v = validate_pair(build_interp_2d(level));
        rep.add(make_check("pair_2d_level" + std::to_string(level), v.passed() ? 1.0 : 0.0, Relation::at_least, 1.0, 0.0,
                           v.message));
    }
    {
        auto a = build_interp_1d(32), b = build_interp_1d(16), c = build_interp_1d(8);
        auto left = compose_transfers(a, compose_transfers(b, c));
        auto right = compose_transfers(compose_transfers(a, b), c);
        rep.add(make_check("composition_associativity", max_abs_entry(SpMat(left.P() - right.P())), Relation::at_most,
                           0.0, 1e-12));
    }
    for (int N : {8, 32, 128, 512}) {
        auto pair = build_interp_1d(N);
        SpMat A = build_laplacian_1d(N);
        int bound_fail = 0, stencil_fail = 0;
        double worst = 0.0;
        for (int t = 0; t < 1000; ++t) {
            Vec r(N - 1);
            for (Index i = 0; i < r.size(); ++i) r(i) = normal(gen);
            auto sub = interpolation_error_audit(r, pair, A);
            const auto& e = sub.entries();
            if (!e[0].passed) ++bound_fail;
            if (!e[1].passed) ++stencil_fail;
            worst = std::max(worst, e[0].observed / e[0].bound);
        }
        rep.add(make_check("interpolation_bound_N" + std::to_string(N), bound_fail, Relation::at_most, 0.0, 0.0,
                           "1000 random vectors; largest lhs/bound " + std::to_string(worst)));
        rep.add(make_check("prolong_restrict_stencil_N" + std::to_string(N), stencil_fail, Relation::at_most, 0.0, 0.0,
                           "1000 random vectors"));
    }
    return rep;
}

inline AuditReport verify_theory(unsigned long long seed = 2024) {
    AuditReport rep;
    std::mt19937_64 gen(seed);

    int violations = 0;
    for (int t = 0; t < 100; ++t) {
        Mat H = random_spd(20, gen);
        TransferPair pair(random_dense_prolongation(20, 10, gen), 1.0);
        Vec eig = symmetric_eigenvalues(H);
        auto sub = projection_norm_audit(H.sparseView(), pair, eig(0), eig(19));
        if (!sub.all_passed()) ++violations;
    }
    rep.add(make_check("projection_and_spectrum_bounds", violations, Relation::at_most, 0.0, 0.0, "100 random instances"));

    ExperimentConfig cfg = poisson_reference_config(64);
    RunOutcome run = solve_experiment(cfg);
    rep.add(make_check("poisson_reference_converged", run.trace.status == TraceStatus::converged ? 1.0 : 0.0,
                       Relation::at_least, 1.0, 0.0, run.trace.message));
    auto problem = build_poisson_1d(cfg.N);
    const Vec x_star = problem.minimizer();
    ProblemConstants k = estimate_constants(problem, 1);
    const TransferPair pair = transfer_to_level(cfg, cfg.problem_level() - 1);
    SolverConfig solver = cfg.solver;
    const double R0 = level_set_radius(k, run.trace.iterates.front(), x_star);
    rep.append(convergence_audit(run.trace, k, solver, pair, problem.value(x_star), R0));

    const Thresholds th = thresholds(k, pair, solver, R0);
    rep.add(make_check("coarse_step_count", run.trace.coarse_steps, Relation::at_most, th.max_coarse_bound, 0.0,
                       "loose bound; direction only"));

    int rate_fail = 0, unit_steps = 0;
    for (size_t j = 0; j < run.trace.records.size(); ++j) {
        const auto& r = run.trace.records[j];
        if (r.step_kind != StepKind::coarse || r.alpha != 1.0) continue;
        ++unit_steps;
        const Vec& xk = run.trace.iterates[j];
        auto cr = composite_rate_decomposition(r, xk, run.trace.iterates[j + 1], x_star, problem.matrix(), pair, k);
        if (cr.lhs > cr.r1_term + cr.r2_term + 1e-8) ++rate_fail;
        if (cr.lhs > interpolation_rate_bound(cfg.N, k, problem.matrix(), xk - x_star) + 1e-8) ++rate_fail;
    }
    rep.add(make_check("composite_rate", rate_fail, Relation::at_most, 0.0, 0.0,
                       std::to_string(unit_steps) + " unit coarse steps"));
    return rep;
}

inline AuditReport verify_suite(const std::string& scope) {
    if (scope == "operators") return verify_operators();
    if (scope == "theory") return verify_theory();
    if (scope == "all") {
        AuditReport rep = verify_operators();
        rep.append(verify_theory());
        return rep;
    }
    throw InvalidArgument("verify scope must be all, operators or theory");
}

} // namespace nemo
