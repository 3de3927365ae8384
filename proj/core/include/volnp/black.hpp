#pragma once

#include "volnp/types.hpp"

namespace volnp::black {

struct BlackInputs {
    double forward = 0.0;
    double strike = 0.0;
    double tau = 0.0;  // years
    double discount_factor = 1.0;
    OptionType option_type = OptionType::call;
};

// standard normal CDF via erfc, |error| < 1e-15
double norm_cdf(double x);
double norm_pdf(double x);

// Black-76 undiscounted-forward option price:
//   call = DF * (F * N(d1) - K * N(d2)),  d1 = (ln(F/K) + v^2 tau / 2) / (v sqrt(tau))
// Put computed directly from N(-d1), N(-d2) (equivalent to parity).
double price(const BlackInputs& in, double vol);

// dPrice/dVol, same for calls and puts
double vega(const BlackInputs& in, double vol);

// no-arbitrage price bounds for the given contract: (intrinsic, supremum)
double intrinsic_value(const BlackInputs& in);
double upper_bound(const BlackInputs& in);

struct ImpliedVolOptions {
    double rel_price_tol = 1e-10;  // tolerance, relative to DF * F
    int max_iter = 200;
    double vol_lo = 1e-9;
    double vol_hi = 10.0;
};

// Inverts price(). Bracketing bisection with Newton refinement; accurate to
// rel_price_tol * DF * F in price space. Throws OutOfBounds when the price
// violates (intrinsic, upper) and NoConvergence past the iteration cap.
double implied_vol(const BlackInputs& in, double target_price, const ImpliedVolOptions& opt = {});

}  // namespace volnp::black
