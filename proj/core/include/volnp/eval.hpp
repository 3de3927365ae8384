#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "volnp/gp.hpp"
#include "volnp/model.hpp"
#include "volnp/sabr.hpp"
#include "volnp/ssvi.hpp"
#include "volnp/types.hpp"

namespace volnp::eval {

// Uniform evaluation surface: classical models calibrate per day inside
// fit_day, the neural process conditions on the context with frozen weights.
class ModelAdapter {
public:
    virtual ~ModelAdapter() = default;
    virtual std::string name() const = 0;
    // may throw CalibrationFailed / InsufficientQuotes / SingularKernel; the
    // harness then skips the day for every model (paired comparison)
    virtual void fit_day(const std::vector<Quote>& context) = 0;
    virtual std::vector<double> predict(const std::vector<Coordinate>& coords) = 0;
};

// Slice-calibrated SABR with linear parameter interpolation across the term
// structure. Slices with too few quotes are skipped; when no slice is
// calibratable the whole context is pooled into a single smile.
class SabrAdapter : public ModelAdapter {
public:
    explicit SabrAdapter(double beta = 1.0, int min_slice_quotes = 3)
        : beta_(beta), min_slice_quotes_(min_slice_quotes) {}
    std::string name() const override { return "SABR"; }
    void fit_day(const std::vector<Quote>& context) override;
    std::vector<double> predict(const std::vector<Coordinate>& coords) override;

private:
    double beta_;
    int min_slice_quotes_;
    sabr::SabrTermStructure ts_;
};

class SsviAdapter : public ModelAdapter {
public:
    std::string name() const override { return "SSVI"; }
    void fit_day(const std::vector<Quote>& context) override;
    std::vector<double> predict(const std::vector<Coordinate>& coords) override;

private:
    ssvi::SsviParams params_;
};

class GpAdapter : public ModelAdapter {
public:
    std::string name() const override { return "GP"; }
    void fit_day(const std::vector<Quote>& context) override;
    std::vector<double> predict(const std::vector<Coordinate>& coords) override;

private:
    std::optional<gp::GpModel> model_;
};

class VolnpAdapter : public ModelAdapter {
public:
    VolnpAdapter(std::string name, model::ModelParams params)
        : name_(std::move(name)), params_(std::move(params)) {}
    std::string name() const override { return name_; }
    void fit_day(const std::vector<Quote>& context) override { context_ = context; }
    std::vector<double> predict(const std::vector<Coordinate>& coords) override;

private:
    std::string name_;
    model::ModelParams params_;
    std::vector<Quote> context_;
};

// Table-1 stratification edges.
struct Buckets {
    double maturity_short_max = 0.25;  // <= 3M
    double maturity_mid_max = 1.0;     // 3M - 1Y
    double atm_max = 0.05;             // |k| <= 0.05
    double ntm_max = 0.2;              // 0.05 < |k| <= 0.2
};

struct CellError {
    double rmse_bps = 0.0;
    double mae_bps = 0.0;
    long n_points = 0;
};

struct ErrorReport {
    std::string model_name;
    CellError overall;
    std::map<std::string, CellError> by_maturity;   // short / mid / long
    std::map<std::string, CellError> by_moneyness;  // atm / ntm / ftm
    int days_evaluated = 0;
    int days_skipped = 0;
};

// The deterministic per-day split every adapter sees: context(n) is the first
// n entries of a seeded permutation of the day's quotes, targets are the
// rest. Splits depend only on (seed, day_id).
struct DaySplit {
    std::vector<Quote> context;
    std::vector<Quote> targets;
};
DaySplit day_split(const DayRecord& day, int n_context, std::uint64_t seed);

// Evaluates all adapters on identical context/target splits with N = 100 by
// default. Days a model cannot fit (or with too few quotes) are skipped for
// every model. Reports are in implied-vol basis points (1 BPS = 1e-4).
std::vector<ErrorReport> evaluate_all(const std::vector<ModelAdapter*>& adapters,
                                      const std::vector<DayRecord>& test_days, int n_context = 100,
                                      std::uint64_t seed = 0, const Buckets& buckets = {});

ErrorReport evaluate(ModelAdapter& adapter, const std::vector<DayRecord>& test_days,
                     int n_context = 100, std::uint64_t seed = 0, const Buckets& buckets = {});

// Sweep over context sizes with nested contexts: at fixed seed and day, the
// context at n is a prefix of the context at any larger n.
struct SweepResult {
    std::vector<int> n_values;
    // reports[i][j] = adapter j at n_values[i]
    std::vector<std::vector<ErrorReport>> reports;
};
SweepResult sparsity_sweep(const std::vector<ModelAdapter*>& adapters,
                           const std::vector<DayRecord>& test_days, const std::vector<int>& n_list,
                           std::uint64_t seed = 0);

// Pooled per-cell RMSE over (k, tau) bins; cells without points carry count 0
// and a null RMSE.
struct HeatmapCell {
    double k_lo, k_hi, tau_lo, tau_hi;
    std::optional<double> rmse_bps;
    long count = 0;
};
struct Heatmap {
    std::vector<double> k_edges;
    std::vector<double> tau_edges;
    std::vector<HeatmapCell> cells;  // tau-major order
};
Heatmap error_heatmap(ModelAdapter& adapter, const std::vector<DayRecord>& test_days,
                      const std::vector<double>& k_edges, const std::vector<double>& tau_edges,
                      int n_context = 100, std::uint64_t seed = 0);

std::string report_to_json_string(const ErrorReport& report);
std::string reports_to_json_string(const std::vector<ErrorReport>& reports);
std::string sweep_to_json_string(const SweepResult& sweep);
// schema: k_lo,k_hi,tau_lo,tau_hi,rmse_bps,count (empty rmse field for empty cells)
void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& heatmap);

}  // namespace volnp::eval
