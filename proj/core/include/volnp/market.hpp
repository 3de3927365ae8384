#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "volnp/sabr.hpp"
#include "volnp/types.hpp"

namespace volnp::market {

struct PreprocessConfig {
    double min_bid = 0.01;          // drop records quoted below this bid
    double max_rel_spread = 0.4;    // drop when (ask - bid) / mid exceeds this
    double k_min = -0.8;
    double k_max = 0.8;
    double tau_min = 7.0 / 365.0;
    double tau_max = 3.0;
    bool dedup = true;              // keep the first record per (k, tau)
};

struct IngestStats {
    int input_records = 0;
    int dropped_liquidity = 0;
    int dropped_range = 0;
    int dropped_inversion = 0;
    int dropped_duplicates = 0;
};

// Mid-price construction, liquidity/range filters and Black implied-vol
// inversion for one day of raw records (all sharing one trade date).
// Inversion failures are dropped and counted, never clamped.
DayRecord ingest_day(const std::vector<RawQuoteRecord>& records, const PreprocessConfig& cfg,
                     int day_id = 0, IngestStats* stats = nullptr);

enum class TruthGenerator { ssvi_random, sabr_mixture };

struct SyntheticMarketConfig {
    int n_days = 250;
    std::uint64_t seed = 0;
    TruthGenerator generator = TruthGenerator::ssvi_random;
    double noise_bps = 30.0;  // additive implied-vol noise, standard deviation
    int quotes_per_day = 240;

    // quote layout targets, per axis: {short <= 3M, mid 3M-1Y, long > 1Y} and
    // {ATM |k| <= 0.05, NTM 0.05 < |k| <= 0.2, FTM |k| > 0.2}
    std::array<double, 3> maturity_shares{0.750, 0.203, 0.047};
    std::array<double, 3> moneyness_shares{0.499, 0.414, 0.087};

    // regime ranges; levels follow an AR(1) across days
    double atm_vol_min = 0.13;
    double atm_vol_max = 0.38;
    double day_autocorr = 0.90;

    // noiseless ground-truth grid attached to each day
    double truth_k_lo = -0.6;
    double truth_k_hi = 0.6;
    double truth_k_step = 0.05;

    std::string start_date = "2021-01-04";
    double forward_level = 100.0;
    double rate = 0.02;  // flat short rate used when materializing raw records
};

// maturity pillars (years, ACT/365) used by the synthetic market
const std::vector<double>& synthetic_expiries();

// Draws n_days day records with autocorrelated regimes: a ground-truth
// surface per day, quote coordinates following the configured layout and
// Gaussian vol noise on the quotes. Ground truth is attached to each day.
// Deterministic given the seed.
std::vector<DayRecord> generate_market(const SyntheticMarketConfig& cfg);

// Reprices a day's quotes into raw bid/ask records (OTM side, symmetric
// spread around the Black mid) so synthetic days can flow through the same
// CSV ingestion path as real data.
std::vector<RawQuoteRecord> to_raw_records(const DayRecord& day, const SyntheticMarketConfig& cfg);

struct SurfaceGridConfig {
    double k_lo = -0.5;
    double k_hi = 0.5;
    double k_step = 0.025;
    bool tau_midpoints = true;  // add midpoints between observed maturities
    double beta = 1.0;          // fixed SABR beta
    int min_slice_quotes = 3;
};

struct PriorBuildStats {
    int days_ok = 0;
    int days_failed = 0;
    int slices_skipped = 0;
    std::vector<int> failed_day_ids;
};

// Slice-calibrates SABR per day, interpolates across the term structure and
// fills day.synthetic_surface with the dense grid. Days whose calibration
// fails everywhere are left without a surface and reported in the stats.
// Optionally returns each day's calibrated term structure through
// out_term_structures (aligned with days, empty optional on failure).
PriorBuildStats build_pretraining_surfaces(
    std::vector<DayRecord>& days, const SurfaceGridConfig& cfg = {},
    std::vector<std::optional<sabr::SabrTermStructure>>* out_term_structures = nullptr);

// --- CSV / bundle I/O ---
// Quote CSV schema: date,expiry,strike,type,bid,ask,forward,discount_factor
// Surface CSV schema: k,tau,vol
// Bundle layout: <root>/index.json plus <root>/days/<date>/quotes.csv,
// truth.csv (synthetic days) and sabr_surface.csv (after prior building).

std::vector<RawQuoteRecord> read_quote_csv(const std::filesystem::path& path);
void write_quote_csv(const std::filesystem::path& path, const std::vector<RawQuoteRecord>& records);

std::vector<Quote> read_surface_csv(const std::filesystem::path& path);
void write_surface_csv(const std::filesystem::path& path, const std::vector<Quote>& quotes);

void write_bundle(const std::filesystem::path& root, const std::vector<DayRecord>& days,
                  const SyntheticMarketConfig& cfg);

struct LoadedBundle {
    std::vector<DayRecord> days;
    std::vector<IngestStats> stats;  // aligned with days
};

LoadedBundle load_bundle(const std::filesystem::path& root, const PreprocessConfig& cfg);

// writes day.synthetic_surface (and term structure json when given) into an
// existing bundle day directory
void write_prior_files(const std::filesystem::path& root, const DayRecord& day,
                       const std::optional<sabr::SabrTermStructure>& ts);

}  // namespace volnp::market
