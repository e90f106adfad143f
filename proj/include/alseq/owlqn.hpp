#pragma once

#include <functional>
#include <span>
#include <vector>

namespace alseq {

struct OwlqnOptions {
    double l1 = 0.0;         // weight of the non-smooth sum|x_i| term
    int max_iterations = 100;
    int memory = 10;
    double c1 = 1e-4;        // Armijo sufficient-decrease constant
    double grad_tol = 1e-5;  // inf-norm of the pseudo-gradient
    double obj_tol = 1e-9;   // relative objective change per iteration
    int max_backtracks = 40;
};

struct OwlqnResult {
    double objective = 0.0;  // f(x) + l1*||x||_1 at the final point
    int iterations = 0;
    bool converged = false;
};

/// Smooth part of the objective: returns f(x), writes grad f(x).
using SmoothObjective = std::function<double(std::span<const double>, std::span<double>)>;

/// Orthant-wise limited-memory quasi-Newton minimization of
/// f(x) + l1*||x||_1; reduces to plain L-BFGS with backtracking line search
/// when l1 == 0. Deterministic for a deterministic objective.
OwlqnResult owlqn_minimize(const SmoothObjective& f, std::vector<double>& x,
                           const OwlqnOptions& opt);

}  // namespace alseq
