#pragma once

#include <functional>
#include <vector>

namespace volnp::optim {

struct NelderMeadOptions {
    int max_iter = 500;
    double f_tol = 1e-12;   // spread of simplex values
    double x_tol = 1e-9;    // simplex diameter
    double init_step = 0.25;
};

struct NelderMeadResult {
    std::vector<double> x;
    double fx = 0.0;
    int iterations = 0;
    bool converged = false;
};

// Downhill simplex minimization of f over R^n, standard
// reflection/expansion/contraction/shrink coefficients (1, 2, 0.5, 0.5).
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opt = {});

// Golden-section minimization of a unimodal-ish f on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double x_tol = 1e-8, int max_iter = 200);

// Pool-adjacent-violators: least-squares projection onto non-decreasing
// sequences. Values stay within [min(v), max(v)].
std::vector<double> isotonic_non_decreasing(const std::vector<double>& v);

}  // namespace volnp::optim
