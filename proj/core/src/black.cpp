#include "volnp/black.hpp"

#include <cmath>
#include <numbers>

#include "volnp/errors.hpp"

namespace volnp::black {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

void check_inputs(const BlackInputs& in) {
    if (!(in.forward > 0.0) || !std::isfinite(in.forward) || !(in.strike > 0.0) ||
        !std::isfinite(in.strike) || !(in.tau > 0.0) || !std::isfinite(in.tau) ||
        !(in.discount_factor > 0.0) || !(in.discount_factor <= 1.0))
        throw DomainError("black: inputs must satisfy F > 0, K > 0, tau > 0, DF in (0, 1]");
}

}  // namespace

double norm_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double price(const BlackInputs& in, double vol) {
    check_inputs(in);
    if (!(vol > 0.0) || !std::isfinite(vol)) throw DomainError("black: vol must be positive and finite");
    const double s = vol * std::sqrt(in.tau);
    const double d1 = (std::log(in.forward / in.strike) + 0.5 * s * s) / s;
    const double d2 = d1 - s;
    if (in.option_type == OptionType::call)
        return in.discount_factor * (in.forward * norm_cdf(d1) - in.strike * norm_cdf(d2));
    return in.discount_factor * (in.strike * norm_cdf(-d2) - in.forward * norm_cdf(-d1));
}

double vega(const BlackInputs& in, double vol) {
    check_inputs(in);
    const double sqrt_tau = std::sqrt(in.tau);
    const double s = vol * sqrt_tau;
    const double d1 = (std::log(in.forward / in.strike) + 0.5 * s * s) / s;
    return in.discount_factor * in.forward * norm_pdf(d1) * sqrt_tau;
}

double intrinsic_value(const BlackInputs& in) {
    const double payoff = in.option_type == OptionType::call ? in.forward - in.strike
                                                             : in.strike - in.forward;
    return in.discount_factor * std::max(payoff, 0.0);
}

double upper_bound(const BlackInputs& in) {
    return in.discount_factor * (in.option_type == OptionType::call ? in.forward : in.strike);
}

double implied_vol(const BlackInputs& in, double target_price, const ImpliedVolOptions& opt) {
    check_inputs(in);
    if (!std::isfinite(target_price)) throw DomainError("implied_vol: price must be finite");

    const double lo_bound = intrinsic_value(in);
    const double hi_bound = upper_bound(in);
    if (target_price <= lo_bound || target_price >= hi_bound)
        throw OutOfBounds("implied_vol: price " + std::to_string(target_price) +
                          " outside arbitrage bounds (" + std::to_string(lo_bound) + ", " +
                          std::to_string(hi_bound) + ")");

    const double tol = opt.rel_price_tol * in.discount_factor * in.forward;

    double lo = opt.vol_lo;
    double hi = opt.vol_hi;
    // price is strictly increasing in vol; expand hi if the cap is too low
    while (price(in, hi) < target_price) {
        hi *= 2.0;
        if (hi > 1e3) throw NoConvergence("implied_vol: could not bracket the price");
    }

    double v = 0.5 * (lo + hi);
    for (int it = 0; it < opt.max_iter; ++it) {
        const double p = price(in, v);
        const double diff = p - target_price;
        if (std::abs(diff) <= tol) return v;
        if (diff > 0.0)
            hi = v;
        else
            lo = v;

        // Newton step, falling back to bisection when it leaves the bracket
        const double vg = vega(in, v);
        double next = v - diff / vg;
        if (!(vg > 0.0) || !std::isfinite(next) || next <= lo || next >= hi)
            next = 0.5 * (lo + hi);
        v = next;
    }
    throw NoConvergence("implied_vol: no convergence after " + std::to_string(opt.max_iter) +
                        " iterations");
}

}  // namespace volnp::black
