#include "volnp/ssvi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <json.hpp>

#include "volnp/errors.hpp"
#include "volnp/optim.hpp"

namespace volnp::ssvi {

namespace {

constexpr double kRhoCap = 1.0 - 1e-6;
// relative back-off from the arbitrage boundary so that re-evaluating the
// constraints on the returned parameters cannot go negative by rounding
constexpr double kBoundaryMargin = 1.0 - 1e-9;

double w_slice(double theta, double phi, double rho, double k) {
    const double pk = phi * k;
    return 0.5 * theta * (1.0 + rho * pk + std::sqrt((pk + rho) * (pk + rho) + 1.0 - rho * rho));
}

// feasible theta interval (lo, hi) for the two butterfly inequalities at
// given (rho, eta, gamma); empty when hi < lo
std::pair<double, double> feasible_theta(double rho, double eta, double gamma) {
    const double c = 4.0 / (1.0 + std::abs(rho));
    // ineq 1: eta * theta^(1-gamma) <= c, increasing in theta
    double hi = std::pow(c / eta, 1.0 / (1.0 - gamma)) * kBoundaryMargin;
    double lo = 0.0;
    // ineq 2: eta^2 * theta^(1-2gamma) <= c
    const double p = 1.0 - 2.0 * gamma;
    const double a = c / (eta * eta);
    if (std::abs(p) < 1e-12) {
        if (eta * eta > c) return {1.0, 0.0};  // infeasible for every theta
    } else if (p > 0.0) {
        hi = std::min(hi, std::pow(a, 1.0 / p) * kBoundaryMargin);
    } else {
        lo = std::pow(a, 1.0 / p) / kBoundaryMargin;
    }
    return {lo, hi};
}

}  // namespace

double SsviParams::phi(double theta) const { return eta * std::pow(theta, -gamma_exp); }

double SsviParams::theta_at(double tau) const {
    if (theta_curve.empty()) throw DomainError("ssvi: empty theta curve");
    const auto& c = theta_curve;
    if (tau <= c.front().first) {
        // through the origin: total variance vanishes at tau = 0
        return c.front().second * tau / c.front().first;
    }
    for (std::size_t i = 1; i < c.size(); ++i) {
        if (tau <= c[i].first) {
            const double w = (tau - c[i - 1].first) / (c[i].first - c[i - 1].first);
            return (1.0 - w) * c[i - 1].second + w * c[i].second;
        }
    }
    // continue the last segment's slope (theta_n / tau_n for a single node)
    double slope;
    if (c.size() == 1)
        slope = c.back().second / c.back().first;
    else
        slope = (c.back().second - c[c.size() - 2].second) /
                (c.back().first - c[c.size() - 2].first);
    return c.back().second + std::max(slope, 0.0) * (tau - c.back().first);
}

double total_variance(const SsviParams& p, double k, double tau) {
    if (!(tau > 0.0)) throw DomainError("ssvi: tau must be positive");
    const double theta = p.theta_at(tau);
    if (theta < 0.0) throw DomainError("ssvi: interpolated theta is negative");
    if (theta == 0.0) return 0.0;
    return w_slice(theta, p.phi(theta), p.rho, k);
}

double implied_vol(const SsviParams& p, double k, double tau) {
    return std::sqrt(total_variance(p, k, tau) / tau);
}

double dw_dk(const SsviParams& p, double k, double theta) {
    const double ph = p.phi(theta);
    const double pk = ph * k;
    const double disc = std::sqrt((pk + p.rho) * (pk + p.rho) + 1.0 - p.rho * p.rho);
    return 0.5 * theta * ph * (p.rho + (pk + p.rho) / disc);
}

double d2w_dk2(const SsviParams& p, double k, double theta) {
    const double ph = p.phi(theta);
    const double pk = ph * k;
    const double inner = (pk + p.rho) * (pk + p.rho) + 1.0 - p.rho * p.rho;
    const double disc = std::sqrt(inner);
    return 0.5 * theta * ph * ph * (1.0 - p.rho * p.rho) / (inner * disc);
}

double butterfly_slack(const SsviParams& p, double theta) {
    const double c = 4.0 / (1.0 + std::abs(p.rho));
    const double ph = p.phi(theta);
    return std::min(c - theta * ph, c - theta * ph * ph);
}

bool satisfies_butterfly(const SsviParams& p) {
    for (const auto& [tau, theta] : p.theta_curve) {
        (void)tau;
        if (theta > 0.0 && butterfly_slack(p, theta) < 0.0) return false;
    }
    return true;
}

SsviParams calibrate(const std::vector<Quote>& quotes, const std::optional<SsviParams>& init,
                     const CalibrationOptions& opt) {
    if (quotes.size() < 5)
        throw InsufficientQuotes("ssvi::calibrate: need >= 5 quotes, got " +
                                 std::to_string(quotes.size()));

    // group by maturity
    std::map<double, std::vector<Quote>> slices;
    for (const Quote& q : quotes) slices[q.coord.tau].push_back(q);
    if (slices.size() < 2)
        throw InsufficientQuotes("ssvi::calibrate: quotes must span >= 2 maturities");

    std::vector<double> taus;
    taus.reserve(slices.size());
    for (const auto& [tau, _] : slices) taus.push_back(tau);

    // box-map the globals: rho = tanh(u0), eta = exp(u1),
    // gamma = 0.05 + 0.9 * sigmoid(u2)
    auto to_globals = [](const std::vector<double>& u) {
        const double rho = std::clamp(std::tanh(u[0]), -kRhoCap, kRhoCap);
        const double eta = std::exp(std::clamp(u[1], -8.0, 4.0));
        const double gamma = 0.05 + 0.9 / (1.0 + std::exp(-std::clamp(u[2], -30.0, 30.0)));
        return std::array<double, 3>{rho, eta, gamma};
    };

    // inner fit: per-slice theta by golden-section over the feasible
    // interval, isotonic projection, then total squared vol error
    auto fit_thetas = [&](double rho, double eta, double gamma, std::vector<double>* out_thetas) {
        const auto [t_lo, t_hi] = feasible_theta(rho, eta, gamma);
        const double lo = std::max(t_lo, opt.theta_min);
        const double hi = std::max(t_hi, lo);
        if (!(hi > 0.0) || hi < lo) return std::numeric_limits<double>::max();

        std::vector<double> thetas;
        thetas.reserve(taus.size());
        for (const auto& [tau, sq] : slices) {
            auto slice_err = [&](double log_theta) {
                const double theta = std::exp(log_theta);
                const double ph = eta * std::pow(theta, -gamma);
                double sse = 0.0;
                for (const Quote& q : sq) {
                    const double iv = std::sqrt(w_slice(theta, ph, rho, q.coord.k) / tau);
                    const double e = iv - q.vol;
                    sse += e * e;
                }
                return sse;
            };
            const double log_theta =
                optim::golden_section(slice_err, std::log(lo), std::log(hi), 1e-10, 120);
            thetas.push_back(std::exp(log_theta));
        }

        thetas = optim::isotonic_non_decreasing(thetas);
        for (double& t : thetas) t = std::clamp(t, lo, hi);

        double sse = 0.0;
        std::size_t si = 0;
        for (const auto& [tau, sq] : slices) {
            const double theta = thetas[si++];
            const double ph = eta * std::pow(theta, -gamma);
            for (const Quote& q : sq) {
                const double iv = std::sqrt(w_slice(theta, ph, rho, q.coord.k) / tau);
                const double e = iv - q.vol;
                sse += e * e;
            }
        }
        if (out_thetas) *out_thetas = std::move(thetas);
        return sse;
    };

    auto objective = [&](const std::vector<double>& u) {
        const auto [rho, eta, gamma] = to_globals(u);
        return fit_thetas(rho, eta, gamma, nullptr);
    };

    std::vector<std::vector<double>> starts;
    for (double rho0 : {-0.5, 0.0})
        for (double gamma0 : {0.3, 0.6})
            starts.push_back({std::atanh(rho0),
                              std::log(1.0),
                              std::log((gamma0 - 0.05) / (0.95 - gamma0))});
    if (init) {
        const double g = std::clamp(init->gamma_exp, 0.06, 0.94);
        starts.push_back({std::atanh(std::clamp(init->rho, -kRhoCap, kRhoCap)),
                          std::log(std::max(init->eta, 1e-6)),
                          std::log((g - 0.05) / (0.95 - g))});
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
    if (best_u.empty() || best_f == std::numeric_limits<double>::max())
        throw CalibrationFailed("ssvi::calibrate: no feasible fit found");

    const auto [rho, eta, gamma] = to_globals(best_u);
    SsviParams p;
    p.rho = rho;
    p.eta = eta;
    p.gamma_exp = gamma;
    std::vector<double> thetas;
    fit_thetas(rho, eta, gamma, &thetas);
    for (std::size_t i = 0; i < taus.size(); ++i) p.theta_curve.emplace_back(taus[i], thetas[i]);

    if (!satisfies_butterfly(p))
        throw CalibrationFailed("ssvi::calibrate: fitted parameters violate the arbitrage bounds");
    return p;
}

std::string to_json_string(const SsviParams& p) {
    nlohmann::json j;
    j["rho"] = p.rho;
    j["eta"] = p.eta;
    j["gamma_exp"] = p.gamma_exp;
    j["theta_curve"] = nlohmann::json::array();
    for (const auto& [tau, theta] : p.theta_curve)
        j["theta_curve"].push_back({{"tau", tau}, {"theta", theta}});
    return j.dump(2);
}

SsviParams params_from_json(const std::string& json_text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("ssvi::params_from_json: ") + e.what());
    }
    SsviParams p;
    p.rho = j.at("rho").get<double>();
    p.eta = j.at("eta").get<double>();
    p.gamma_exp = j.at("gamma_exp").get<double>();
    for (const auto& t : j.at("theta_curve"))
        p.theta_curve.emplace_back(t.at("tau").get<double>(), t.at("theta").get<double>());
    return p;
}

}  // namespace volnp::ssvi
