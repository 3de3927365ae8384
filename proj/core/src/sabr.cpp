#include "volnp/sabr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "volnp/errors.hpp"
#include "volnp/optim.hpp"

namespace volnp::sabr {

namespace {

void check_params(const SabrParams& p) {
    if (!(p.alpha > 0.0) || !std::isfinite(p.alpha))
        throw DomainError("sabr: alpha must be positive");
    if (!(p.beta >= 0.0 && p.beta <= 1.0)) throw DomainError("sabr: beta must be in [0, 1]");
    if (!(p.rho > -1.0 && p.rho < 1.0)) throw DomainError("sabr: rho must be in (-1, 1)");
    if (!(p.nu >= 0.0) || !std::isfinite(p.nu)) throw DomainError("sabr: nu must be >= 0");
}

constexpr double kRhoCap = 1.0 - 1e-6;

}  // namespace

double SabrTermStructure::forward(double tau) const {
    if (forward_curve.empty()) throw DomainError("SabrTermStructure: empty forward curve");
    if (tau <= forward_curve.front().first) return forward_curve.front().second;
    if (tau >= forward_curve.back().first) return forward_curve.back().second;
    for (std::size_t i = 1; i < forward_curve.size(); ++i) {
        if (tau <= forward_curve[i].first) {
            const auto& [t0, f0] = forward_curve[i - 1];
            const auto& [t1, f1] = forward_curve[i];
            const double w = (tau - t0) / (t1 - t0);
            return std::exp((1.0 - w) * std::log(f0) + w * std::log(f1));
        }
    }
    return forward_curve.back().second;
}

double hagan_vol(const SabrParams& p, double forward, double strike, double tau) {
    check_params(p);
    if (!(forward > 0.0) || !(strike > 0.0) || !(tau > 0.0))
        throw DomainError("hagan_vol: forward, strike and tau must be positive");

    const double omb = 1.0 - p.beta;
    const double log_fk = std::log(forward / strike);
    const double fk_mid = std::pow(forward * strike, 0.5 * omb);  // (F K)^((1-beta)/2)

    // time-dependent correction shared by the ATM and generic branches
    const double b1 = omb * omb / 24.0 * p.alpha * p.alpha / (fk_mid * fk_mid);
    const double b2 = 0.25 * p.rho * p.beta * p.nu * p.alpha / fk_mid;
    const double b3 = (2.0 - 3.0 * p.rho * p.rho) * p.nu * p.nu / 24.0;
    const double time_factor = 1.0 + (b1 + b2 + b3) * tau;

    const double z = p.nu / p.alpha * fk_mid * log_fk;
    double zx_ratio;
    if (std::abs(z) < 1e-6) {
        // series of z / x(z); keeps the formula continuous through K = F
        zx_ratio = 1.0 - 0.5 * p.rho * z + (2.0 - 3.0 * p.rho * p.rho) / 12.0 * z * z;
    } else {
        const double xz =
            std::log((std::sqrt(1.0 - 2.0 * p.rho * z + z * z) + z - p.rho) / (1.0 - p.rho));
        zx_ratio = z / xz;
    }

    const double denom =
        fk_mid * (1.0 + omb * omb / 24.0 * log_fk * log_fk +
                  omb * omb * omb * omb / 1920.0 * log_fk * log_fk * log_fk * log_fk);
    return p.alpha / denom * zx_ratio * time_factor;
}

SabrParams calibrate_slice(const std::vector<Quote>& quotes_at_tau, double forward, double tau,
                           double beta, const std::optional<SabrParams>& init,
                           const SliceCalibrationOptions& opt) {
    if (quotes_at_tau.size() < 3)
        throw InsufficientQuotes("calibrate_slice: need >= 3 quotes, got " +
                                 std::to_string(quotes_at_tau.size()));
    if (!(forward > 0.0) || !(tau > 0.0))
        throw DomainError("calibrate_slice: forward and tau must be positive");

    // optimize in unconstrained space: (log alpha, atanh rho, log nu)
    auto to_params = [&](const std::vector<double>& u) {
        SabrParams p;
        p.alpha = std::exp(std::clamp(u[0], -20.0, 5.0));
        p.beta = beta;
        p.rho = std::clamp(std::tanh(u[1]), -kRhoCap, kRhoCap);
        p.nu = std::exp(std::clamp(u[2], -20.0, 5.0));
        return p;
    };

    auto objective = [&](const std::vector<double>& u) {
        const SabrParams p = to_params(u);
        double sse = 0.0;
        for (const Quote& q : quotes_at_tau) {
            const double strike = forward * std::exp(q.coord.k);
            const double model = hagan_vol(p, forward, strike, tau);
            if (!std::isfinite(model)) return std::numeric_limits<double>::max();
            const double e = model - q.vol;
            sse += e * e;
        }
        return sse;
    };

    // alpha start: the quote closest to the money, scaled back to alpha units
    double atm_vol = quotes_at_tau.front().vol;
    double best_abs_k = std::abs(quotes_at_tau.front().coord.k);
    for (const Quote& q : quotes_at_tau)
        if (std::abs(q.coord.k) < best_abs_k) {
            best_abs_k = std::abs(q.coord.k);
            atm_vol = q.vol;
        }
    const double alpha0 = std::max(1e-4, atm_vol * std::pow(forward, 1.0 - beta));

    std::vector<std::vector<double>> starts;
    for (double rho0 : {-0.8, 0.0, 0.8})
        for (double nu0 : {0.1, 1.0})
            starts.push_back({std::log(alpha0), std::atanh(rho0), std::log(nu0)});
    if (init) {
        check_params(*init);
        starts.push_back({std::log(init->alpha),
                          std::atanh(std::clamp(init->rho, -kRhoCap, kRhoCap)),
                          std::log(std::max(init->nu, 1e-8))});
    }

    optim::NelderMeadOptions nm;
    nm.max_iter = opt.nm_max_iter;
    double best_f = std::numeric_limits<double>::max();
    std::vector<double> best_u;
    for (const auto& u0 : starts) {
        const double f0 = objective(u0);
        if (f0 < best_f) {
            best_f = f0;
            best_u = u0;
        }
        auto res = optim::nelder_mead(objective, u0, nm);
        if (res.fx < best_f) {
            best_f = res.fx;
            best_u = res.x;
        }
    }
    if (best_u.empty() || !std::isfinite(best_f))
        throw CalibrationFailed("calibrate_slice: all starts diverged at tau " +
                                std::to_string(tau));
    return to_params(best_u);
}

SabrParams interpolate_params(const SabrTermStructure& ts, double tau) {
    if (ts.slices.empty()) throw DomainError("interpolate_params: empty term structure");
    const auto& s = ts.slices;
    if (tau <= s.front().tau) return s.front().params;
    if (tau >= s.back().tau) return s.back().params;
    for (std::size_t i = 1; i < s.size(); ++i) {
        if (tau <= s[i].tau) {
            const double w = (tau - s[i - 1].tau) / (s[i].tau - s[i - 1].tau);
            const SabrParams& a = s[i - 1].params;
            const SabrParams& b = s[i].params;
            SabrParams p;
            p.alpha = (1.0 - w) * a.alpha + w * b.alpha;
            p.beta = (1.0 - w) * a.beta + w * b.beta;
            p.rho = std::clamp((1.0 - w) * a.rho + w * b.rho, -kRhoCap, kRhoCap);
            p.nu = (1.0 - w) * a.nu + w * b.nu;
            return p;
        }
    }
    return s.back().params;
}

std::vector<Quote> generate_surface(const SabrTermStructure& ts, const std::vector<double>& k_grid,
                                    const std::vector<double>& tau_grid) {
    if (k_grid.empty() || tau_grid.empty())
        throw DomainError("generate_surface: grids must be non-empty");
    std::vector<Quote> out;
    out.reserve(k_grid.size() * tau_grid.size());
    for (double tau : tau_grid) {
        if (!(tau > 0.0)) throw DomainError("generate_surface: tau grid must be positive");
        const SabrParams p = interpolate_params(ts, tau);
        const double fwd = ts.forward(tau);
        for (double k : k_grid) {
            const double strike = fwd * std::exp(k);
            out.push_back(Quote{{k, tau}, hagan_vol(p, fwd, strike, tau)});
        }
    }
    return out;
}

std::string to_json_string(const SabrTermStructure& ts) {
    nlohmann::json j;
    j["slices"] = nlohmann::json::array();
    for (const Slice& s : ts.slices) {
        j["slices"].push_back({{"tau", s.tau},
                               {"alpha", s.params.alpha},
                               {"beta", s.params.beta},
                               {"rho", s.params.rho},
                               {"nu", s.params.nu}});
    }
    j["forward_curve"] = nlohmann::json::array();
    for (const auto& [tau, fwd] : ts.forward_curve)
        j["forward_curve"].push_back({{"tau", tau}, {"forward", fwd}});
    return j.dump(2);
}

SabrTermStructure term_structure_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("term_structure_from_json: ") + e.what());
    }
    SabrTermStructure ts;
    for (const auto& s : j.at("slices")) {
        Slice slice;
        slice.tau = s.at("tau").get<double>();
        slice.params.alpha = s.at("alpha").get<double>();
        slice.params.beta = s.at("beta").get<double>();
        slice.params.rho = s.at("rho").get<double>();
        slice.params.nu = s.at("nu").get<double>();
        ts.slices.push_back(slice);
    }
    for (const auto& f : j.at("forward_curve"))
        ts.forward_curve.emplace_back(f.at("tau").get<double>(), f.at("forward").get<double>());
    return ts;
}

}  // namespace volnp::sabr
