#include "volnp/arbitrage.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "volnp/errors.hpp"

namespace volnp::arb {

namespace {

double g_formula(double k, double w, double wp, double wpp) {
    const double a = 1.0 - k * wp / (2.0 * w);
    return a * a - 0.25 * wp * wp * (1.0 / w + 0.25) + 0.5 * wpp;
}

// assembles intervals, min and the violation integral from evaluated g values
void finalize(SliceDiagnostic& d, double tol) {
    const auto& k = d.k_grid;
    const auto& g = d.g_values;
    d.min_g = *std::min_element(g.begin(), g.end());

    bool open = false;
    double lo = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const bool bad = g[i] < -tol;
        if (bad && !open) {
            open = true;
            lo = k[i];
        } else if (!bad && open) {
            open = false;
            d.violation_intervals.emplace_back(lo, k[i - 1]);
        }
    }
    if (open) d.violation_intervals.emplace_back(lo, k.back());

    // trapezoid integral of max(0, -g)
    double measure = 0.0;
    for (std::size_t i = 1; i < g.size(); ++i) {
        const double f0 = std::max(0.0, -g[i - 1]);
        const double f1 = std::max(0.0, -g[i]);
        measure += 0.5 * (f0 + f1) * (k[i] - k[i - 1]);
    }
    d.violation_measure = measure;
}

}  // namespace

SliceDiagnostic durrleman_g(const SliceVolFn& vol_fn, double tau,
                            const std::vector<double>& k_grid, double fd_step, double tol) {
    if (k_grid.empty()) throw DomainError("durrleman_g: empty k grid");
    if (!(fd_step > 0.0)) throw DomainError("durrleman_g: fd_step must be positive");

    auto total_var = [&](double k) {
        const double vol = vol_fn(k);
        if (!(vol > 0.0) || !std::isfinite(vol))
            throw DomainError("durrleman_g: vol must be positive on the grid");
        return vol * vol * tau;
    };

    SliceDiagnostic d;
    d.tau = tau;
    d.k_grid = k_grid;
    d.g_values.reserve(k_grid.size());

    auto derivs = [&](double k, double h, double& w, double& wp, double& wpp) {
        const double wm = total_var(k - h);
        const double w0 = total_var(k);
        const double wpl = total_var(k + h);
        w = w0;
        wp = (wpl - wm) / (2.0 * h);
        wpp = (wpl - 2.0 * w0 + wm) / (h * h);
    };

    for (double k : k_grid) {
        double w, wp, wpp;
        derivs(k, fd_step, w, wp, wpp);
        double g = g_formula(k, w, wp, wpp);
        if (std::abs(g) < 1e-4) {
            // Richardson refinement near the boundary: D = (4 D(h/2) - D(h)) / 3
            double w2, wp2, wpp2;
            derivs(k, 0.5 * fd_step, w2, wp2, wpp2);
            const double wp_r = (4.0 * wp2 - wp) / 3.0;
            const double wpp_r = (4.0 * wpp2 - wpp) / 3.0;
            g = g_formula(k, w, wp_r, wpp_r);
        }
        d.g_values.push_back(g);
    }
    finalize(d, tol);
    return d;
}

SliceDiagnostic durrleman_g_analytic(const AnalyticSlice& slice, double tau,
                                     const std::vector<double>& k_grid, double tol) {
    if (k_grid.empty()) throw DomainError("durrleman_g_analytic: empty k grid");
    SliceDiagnostic d;
    d.tau = tau;
    d.k_grid = k_grid;
    d.g_values.reserve(k_grid.size());
    for (double k : k_grid) {
        const double w = slice.w(k);
        if (!(w > 0.0)) throw DomainError("durrleman_g_analytic: total variance must be positive");
        d.g_values.push_back(g_formula(k, w, slice.dw(k), slice.d2w(k)));
    }
    finalize(d, tol);
    return d;
}

SurfaceReport surface_report(const SurfaceVolFn& vol_fn, const std::vector<double>& tau_list,
                             const std::vector<double>& k_grid, double fd_step) {
    if (tau_list.empty() || k_grid.empty())
        throw DomainError("surface_report: grids must be non-empty");
    SurfaceReport report;
    int clean = 0;
    for (double tau : tau_list) {
        SliceDiagnostic d =
            durrleman_g([&](double k) { return vol_fn(k, tau); }, tau, k_grid, fd_step);
        if (d.violation_intervals.empty()) ++clean;
        report.total_violation_measure += d.violation_measure;
        report.slices.push_back(std::move(d));
    }
    report.fraction_clean = static_cast<double>(clean) / static_cast<double>(tau_list.size());
    return report;
}

std::string report_to_json_string(const SurfaceReport& report) {
    nlohmann::json j;
    j["fraction_clean"] = report.fraction_clean;
    j["total_violation_measure"] = report.total_violation_measure;
    j["slices"] = nlohmann::json::array();
    for (const SliceDiagnostic& d : report.slices) {
        nlohmann::json js;
        js["tau"] = d.tau;
        js["k_grid"] = d.k_grid;
        js["g_values"] = d.g_values;
        js["min_g"] = d.min_g;
        js["violation_measure"] = d.violation_measure;
        js["violation_intervals"] = nlohmann::json::array();
        for (const auto& [lo, hi] : d.violation_intervals)
            js["violation_intervals"].push_back({{"k_lo", lo}, {"k_hi", hi}});
        j["slices"].push_back(std::move(js));
    }
    return j.dump(2);
}

}  // namespace volnp::arb
