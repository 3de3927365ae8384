#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace volnp {

// Surface coordinate: log-moneyness k = log(K/F) and time-to-expiry in years.
struct Coordinate {
    double k = 0.0;
    double tau = 0.0;
};

// One implied-volatility observation. vol is in absolute units (0.20 = 20%).
struct Quote {
    Coordinate coord;
    double vol = 0.0;
};

enum class OptionType { call, put };

// One raw exchange record before preprocessing.
struct RawQuoteRecord {
    std::chrono::year_month_day date{};
    std::chrono::year_month_day expiry{};
    double strike = 0.0;
    OptionType option_type = OptionType::call;
    double bid = 0.0;
    double ask = 0.0;
    double forward = 0.0;          // forward at the record's expiry
    double discount_factor = 1.0;
};

// Everything known about one trading day. quotes are the observed market
// points; synthetic_surface is the dense slice-calibrated prior grid used as
// stage-1 targets; ground_truth is the noiseless generator grid carried only
// by synthetic benchmark days.
struct DayRecord {
    int day_id = 0;
    std::string date;  // ISO yyyy-mm-dd label, empty for purely in-memory days
    std::vector<Quote> quotes;
    std::optional<std::vector<Quote>> synthetic_surface;
    std::optional<std::vector<Quote>> ground_truth;
    std::map<double, double> forward_curve;  // tau -> forward
};

// Where a task's targets come from: held-out quotes of the same day, or the
// day's dense synthetic surface.
enum class TaskSource { real_to_real, real_to_synthetic };

// One meta-learning unit: a context set the model conditions on and a target
// set it is scored on, both from a single day.
struct Task {
    std::vector<Quote> context;
    std::vector<Quote> targets;
    int day_id = 0;
};

// Target count meaning "all quotes not drawn into the context".
inline constexpr int kAllRemaining = -1;

// Draws a task from one day. Context is sampled uniformly without replacement
// from day.quotes. Targets come from the remaining quotes (real_to_real) or
// from the synthetic surface (real_to_synthetic). Deterministic in rng_seed.
//
// n_target == kAllRemaining selects every remaining quote (real_to_real only).
// Throws InsufficientQuotes when the day cannot supply the requested sizes.
Task make_task(const DayRecord& day, int n_context, int n_target, TaskSource source,
               std::uint64_t rng_seed);

// --- date helpers (ISO yyyy-mm-dd, ACT/365) ---

std::chrono::year_month_day parse_date(const std::string& iso);
std::string format_date(const std::chrono::year_month_day& d);

// year fraction between two dates, days / 365
double year_fraction(const std::chrono::year_month_day& from,
                     const std::chrono::year_month_day& to);

}  // namespace volnp
