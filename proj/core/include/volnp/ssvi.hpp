#pragma once

#include <optional>
#include <string>
#include <vector>

#include "volnp/types.hpp"

namespace volnp::ssvi {

// Gatheral-Jacquier surface SVI with power-law phi(theta) = eta * theta^(-gamma).
// Static no-butterfly-arbitrage holds when, at every theta on the curve,
//   theta * phi(theta) * (1 + |rho|) <= 4   and
//   theta * phi(theta)^2 * (1 + |rho|) <= 4.
// theta(tau) is linear between nodes, through the origin below the first
// maturity, and continues the last segment's slope above the last one.
struct SsviParams {
    std::vector<std::pair<double, double>> theta_curve;  // (tau, theta), theta non-decreasing
    double rho = 0.0;        // in (-1, 1)
    double eta = 1.0;        // > 0
    double gamma_exp = 0.5;  // in (0, 1)

    double phi(double theta) const;
    double theta_at(double tau) const;
};

// w(k, theta) = theta/2 * (1 + rho phi k + sqrt((phi k + rho)^2 + 1 - rho^2))
double total_variance(const SsviParams& p, double k, double tau);
double implied_vol(const SsviParams& p, double k, double tau);

// analytic strike derivatives of w at fixed theta, for the Durrleman check
double dw_dk(const SsviParams& p, double k, double theta);
double d2w_dk2(const SsviParams& p, double k, double theta);

// slack of the two arbitrage inequalities at theta: min(4/(1+|rho|) - theta*phi,
// 4/(1+|rho|) - theta*phi^2); negative means violated
double butterfly_slack(const SsviParams& p, double theta);
bool satisfies_butterfly(const SsviParams& p);

struct CalibrationOptions {
    int nm_max_iter = 300;
    double theta_min = 1e-6;
};

// Fits (rho, eta, gamma_exp) globally and one theta per maturity to implied
// vols, by Nelder-Mead over the globals with an inner per-slice line search
// restricted to the arbitrage-feasible theta interval, followed by isotonic
// projection of the theta curve. The returned parameters satisfy every
// SsviParams invariant exactly.
SsviParams calibrate(const std::vector<Quote>& quotes, const std::optional<SsviParams>& init = {},
                     const CalibrationOptions& opt = {});

std::string to_json_string(const SsviParams& p);
SsviParams params_from_json(const std::string& json_text);

}  // namespace volnp::ssvi
