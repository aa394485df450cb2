// Minimal use of the library: two-level solve of the 1D Poisson model problem
// with steepest-descent fine steps, printing the step pattern.

#include "nemo/nemo.hpp"

#include <iostream>

int main() {
    auto problem = nemo::build_poisson_1d(512);
    std::vector<nemo::TransferPair> pairs{nemo::build_interp_1d(512)};

    nemo::SolverConfig cfg;
    cfg.fine_variant = nemo::FineVariant::steepest_descent;
    cfg.kappa = 0.5;
    cfg.epsilon = 1e-6;
    cfg.max_iter = 5000;

    auto trace = nemo::nemo_solve(problem, pairs, cfg, nemo::Vec::Zero(problem.dimension()));
    for (const auto& r : trace.records) std::cout << (r.step_kind == nemo::StepKind::coarse ? 'C' : '.');
    std::cout << "\nstatus " << nemo::to_string(trace.status) << ", " << trace.coarse_steps << " coarse and "
              << trace.fine_steps << " fine steps, final |grad| "
              << (trace.records.empty() ? trace.initial_grad_norm : trace.records.back().grad_norm) << '\n';
    return trace.status == nemo::TraceStatus::converged ? 0 : 1;
}
