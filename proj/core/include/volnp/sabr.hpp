#pragma once

#include <optional>
#include <string>
#include <vector>

#include "volnp/types.hpp"

namespace volnp::sabr {

struct SabrParams {
    double alpha = 0.2;  // > 0
    double beta = 1.0;   // in [0, 1], fixed by configuration, not calibrated
    double rho = 0.0;    // in (-1, 1)
    double nu = 0.0;     // >= 0
};

struct Slice {
    double tau = 0.0;
    SabrParams params;
};

// Per-maturity SABR parameters with linear interpolation across the term
// structure. Forwards are interpolated log-linearly in tau and held flat
// beyond the quoted range.
struct SabrTermStructure {
    std::vector<Slice> slices;                             // strictly increasing tau
    std::vector<std::pair<double, double>> forward_curve;  // (tau, forward), sorted

    double forward(double tau) const;
};

// Hagan (2002) lognormal implied-vol expansion. The K -> F limit is handled
// by the analytic ATM form; near-ATM strikes use the small-z series of
// z/x(z) so the formula stays continuous through the node.
double hagan_vol(const SabrParams& p, double forward, double strike, double tau);

struct SliceCalibrationOptions {
    int nm_max_iter = 400;
    // extra starts beyond the default rho x nu grid are taken from `init`
};

// Least-squares fit of (alpha, rho, nu) to one maturity slice, beta fixed.
// Quotes carry log-moneyness; strikes are reconstructed as F * exp(k).
// Multi-start Nelder-Mead in (log alpha, atanh rho, log nu).
SabrParams calibrate_slice(const std::vector<Quote>& quotes_at_tau, double forward, double tau,
                           double beta, const std::optional<SabrParams>& init = {},
                           const SliceCalibrationOptions& opt = {});

// Component-wise linear interpolation between bracketing slices, constant
// beyond the endpoints; rho clamped away from +-1.
SabrParams interpolate_params(const SabrTermStructure& ts, double tau);

// Evaluates the interpolated surface on the tensor grid k_grid x tau_grid.
// Output is ordered tau-major and has size |k_grid| * |tau_grid|.
std::vector<Quote> generate_surface(const SabrTermStructure& ts, const std::vector<double>& k_grid,
                                    const std::vector<double>& tau_grid);

// JSON round trip for checkpointing calibrated term structures.
std::string to_json_string(const SabrTermStructure& ts);
SabrTermStructure term_structure_from_json(const std::string& json_text);

}  // namespace volnp::sabr
