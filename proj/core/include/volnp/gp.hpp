#pragma once

#include <vector>

#include "volnp/types.hpp"

namespace volnp::gp {

struct GpHyper {
    double signal_var = 0.01;   // > 0
    double length_k = 0.2;      // > 0
    double length_tau = 0.5;    // > 0
    double noise_var = 1e-6;    // >= noise floor
};

inline constexpr double kNoiseFloor = 1e-10;

// Fitted posterior state: anisotropic-RBF kernel over (k, tau), prior mean
// equal to the context vol average.
struct GpModel {
    GpHyper hyper;
    double prior_mean = 0.0;
    std::vector<Coordinate> x;
    std::vector<double> alpha;      // (K + sn2 I)^-1 (y - m)
    std::vector<double> chol;       // lower Cholesky factor, row-major n x n
    double log_marginal = 0.0;
    double jitter_used = 0.0;
};

struct FitOptions {
    bool optimize = true;  // maximize log marginal likelihood from multi-starts
    int nm_max_iter = 150;
};

// closed-form log marginal likelihood at fixed hyperparameters
double log_marginal_likelihood(const std::vector<Quote>& context, const GpHyper& h);

// Conditions on the context; when optimize is set, hyperparameters are chosen
// to maximize the log marginal likelihood over multi-started Nelder-Mead in
// log space (the returned LML is >= the LML of every start point).
GpModel fit(const std::vector<Quote>& context, const GpHyper& init, const FitOptions& opt = {});

// posterior mean and variance (latent function, no observation noise)
std::vector<std::pair<double, double>> predict(const GpModel& model,
                                               const std::vector<Coordinate>& targets);

}  // namespace volnp::gp
