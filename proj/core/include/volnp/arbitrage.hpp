#pragma once

#include <functional>
#include <string>
#include <vector>

namespace volnp::arb {

// Butterfly-arbitrage diagnostic for one maturity slice. With total variance
// w(k) = vol(k)^2 * tau, the slice admits no butterfly arbitrage when
//   g(k) = (1 - k w'/(2w))^2 - (w'^2/4)(1/w + 1/4) + w''/2 >= 0
// (equivalently the implied risk-neutral density is non-negative).
struct SliceDiagnostic {
    double tau = 0.0;
    std::vector<double> k_grid;
    std::vector<double> g_values;
    std::vector<std::pair<double, double>> violation_intervals;  // (k_lo, k_hi)
    double min_g = 0.0;
    double violation_measure = 0.0;  // integral of max(0, -g) over the grid
};

// implied vol as a function of k at fixed tau
using SliceVolFn = std::function<double(double)>;

// total variance and its analytic strike derivatives at fixed tau
struct AnalyticSlice {
    std::function<double(double)> w;
    std::function<double(double)> dw;
    std::function<double(double)> d2w;
};

inline constexpr double kViolationTol = 1e-8;

// Finite-difference evaluation of g on the grid (central differences with
// step fd_step, Richardson-refined wherever |g| < 1e-4). Throws DomainError
// on non-positive vols.
SliceDiagnostic durrleman_g(const SliceVolFn& vol_fn, double tau,
                            const std::vector<double>& k_grid, double fd_step = 1e-3,
                            double tol = kViolationTol);

// Same diagnostic from closed-form derivatives (preferred when a model
// exposes them, e.g. SSVI).
SliceDiagnostic durrleman_g_analytic(const AnalyticSlice& slice, double tau,
                                     const std::vector<double>& k_grid,
                                     double tol = kViolationTol);

using SurfaceVolFn = std::function<double(double k, double tau)>;

struct SurfaceReport {
    std::vector<SliceDiagnostic> slices;
    double fraction_clean = 1.0;          // slices without violations / slices
    double total_violation_measure = 0.0;
};

SurfaceReport surface_report(const SurfaceVolFn& vol_fn, const std::vector<double>& tau_list,
                             const std::vector<double>& k_grid, double fd_step = 1e-3);

std::string report_to_json_string(const SurfaceReport& report);

}  // namespace volnp::arb
