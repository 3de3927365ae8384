#include "volnp/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "volnp/errors.hpp"
#include "volnp/rng.hpp"

namespace volnp::eval {

namespace {

constexpr std::uint64_t kStreamSplit = 0xE7;

// running sums for one report cell
struct Accum {
    double sq = 0.0;
    double abs = 0.0;
    long n = 0;

    void add(double err) {
        sq += err * err;
        abs += std::abs(err);
        n += 1;
    }
    CellError cell() const {
        CellError c;
        c.n_points = n;
        if (n > 0) {
            c.rmse_bps = std::sqrt(sq / static_cast<double>(n)) * 1e4;
            c.mae_bps = abs / static_cast<double>(n) * 1e4;
        }
        return c;
    }
};

const char* maturity_bucket(double tau, const Buckets& b) {
    if (tau <= b.maturity_short_max) return "short";
    if (tau <= b.maturity_mid_max) return "mid";
    return "long";
}

const char* moneyness_bucket(double k, const Buckets& b) {
    const double a = std::abs(k);
    if (a <= b.atm_max) return "atm";
    if (a <= b.ntm_max) return "ntm";
    return "ftm";
}

struct ReportAccum {
    Accum overall;
    std::map<std::string, Accum> by_maturity;
    std::map<std::string, Accum> by_moneyness;
    int days_evaluated = 0;
    int days_skipped = 0;

    ErrorReport report(const std::string& name) const {
        ErrorReport r;
        r.model_name = name;
        r.overall = overall.cell();
        for (const auto& [key, acc] : by_maturity) r.by_maturity[key] = acc.cell();
        for (const auto& [key, acc] : by_moneyness) r.by_moneyness[key] = acc.cell();
        r.days_evaluated = days_evaluated;
        r.days_skipped = days_skipped;
        return r;
    }
};

nlohmann::json cell_json(const CellError& c) {
    return {{"rmse_bps", c.rmse_bps}, {"mae_bps", c.mae_bps}, {"n_points", c.n_points}};
}

nlohmann::json report_json(const ErrorReport& r) {
    nlohmann::json j;
    j["model"] = r.model_name;
    j["overall"] = cell_json(r.overall);
    j["by_maturity"] = nlohmann::json::object();
    for (const auto& [key, c] : r.by_maturity) j["by_maturity"][key] = cell_json(c);
    j["by_moneyness"] = nlohmann::json::object();
    for (const auto& [key, c] : r.by_moneyness) j["by_moneyness"][key] = cell_json(c);
    j["days_evaluated"] = r.days_evaluated;
    j["days_skipped"] = r.days_skipped;
    return j;
}

}  // namespace

// ------------------------------------------------------------------
// adapters

void SabrAdapter::fit_day(const std::vector<Quote>& context) {
    std::map<double, std::vector<Quote>> slices;
    for (const Quote& q : context) slices[q.coord.tau].push_back(q);

    ts_ = sabr::SabrTermStructure{};
    for (const auto& [tau, quotes] : slices) {
        if (static_cast<int>(quotes.size()) < min_slice_quotes_) continue;
        try {
            // quotes live in k space already; a unit forward keeps the fit in
            // pure moneyness terms
            ts_.slices.push_back({tau, sabr::calibrate_slice(quotes, 1.0, tau, beta_)});
            ts_.forward_curve.emplace_back(tau, 1.0);
        } catch (const CalibrationFailed&) {
        }
    }
    if (ts_.slices.empty()) {
        // sparse-context fallback: pool everything into one smile at the
        // median maturity
        if (context.size() < 3)
            throw CalibrationFailed("SabrAdapter: not enough quotes to fit any slice");
        std::vector<double> taus;
        taus.reserve(context.size());
        for (const Quote& q : context) taus.push_back(q.coord.tau);
        std::sort(taus.begin(), taus.end());
        const double tau_med = taus[taus.size() / 2];
        ts_.slices.push_back({tau_med, sabr::calibrate_slice(context, 1.0, tau_med, beta_)});
        ts_.forward_curve.emplace_back(tau_med, 1.0);
    }
}

std::vector<double> SabrAdapter::predict(const std::vector<Coordinate>& coords) {
    std::vector<double> out;
    out.reserve(coords.size());
    for (const Coordinate& c : coords) {
        const sabr::SabrParams p = sabr::interpolate_params(ts_, c.tau);
        out.push_back(sabr::hagan_vol(p, 1.0, std::exp(c.k), c.tau));
    }
    return out;
}

void SsviAdapter::fit_day(const std::vector<Quote>& context) {
    params_ = ssvi::calibrate(context);
}

std::vector<double> SsviAdapter::predict(const std::vector<Coordinate>& coords) {
    std::vector<double> out;
    out.reserve(coords.size());
    for (const Coordinate& c : coords) out.push_back(ssvi::implied_vol(params_, c.k, c.tau));
    return out;
}

void GpAdapter::fit_day(const std::vector<Quote>& context) {
    model_ = gp::fit(context, gp::GpHyper{});
}

std::vector<double> GpAdapter::predict(const std::vector<Coordinate>& coords) {
    if (!model_) throw CalibrationFailed("GpAdapter: predict before fit_day");
    std::vector<double> out;
    out.reserve(coords.size());
    for (const auto& [mean, var] : gp::predict(*model_, coords)) {
        (void)var;
        out.push_back(mean);
    }
    return out;
}

std::vector<double> VolnpAdapter::predict(const std::vector<Coordinate>& coords) {
    if (context_.empty()) throw CalibrationFailed("VolnpAdapter: predict before fit_day");
    const auto preds = model::predict(params_, context_, coords);
    std::vector<double> out;
    out.reserve(preds.size());
    for (const auto& p : preds) out.push_back(p.mu);
    return out;
}

// ------------------------------------------------------------------
// harness

DaySplit day_split(const DayRecord& day, int n_context, std::uint64_t seed) {
    const int n = static_cast<int>(day.quotes.size());
    if (n <= n_context)
        throw InsufficientQuotes("day_split: day " + std::to_string(day.day_id) + " has " +
                                 std::to_string(n) + " quotes, need > " +
                                 std::to_string(n_context));
    Rng rng(mix_seed(seed, kStreamSplit, static_cast<std::uint64_t>(day.day_id)));
    std::vector<int> perm(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
    rng.shuffle(perm);

    DaySplit split;
    split.context.reserve(static_cast<std::size_t>(n_context));
    split.targets.reserve(static_cast<std::size_t>(n - n_context));
    for (int i = 0; i < n_context; ++i)
        split.context.push_back(day.quotes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    for (int i = n_context; i < n; ++i)
        split.targets.push_back(day.quotes[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
    return split;
}

std::vector<ErrorReport> evaluate_all(const std::vector<ModelAdapter*>& adapters,
                                      const std::vector<DayRecord>& test_days, int n_context,
                                      std::uint64_t seed, const Buckets& buckets) {
    std::vector<ReportAccum> accums(adapters.size());

    for (const DayRecord& day : test_days) {
        DaySplit split;
        try {
            split = day_split(day, n_context, seed);
        } catch (const InsufficientQuotes&) {
            for (auto& a : accums) ++a.days_skipped;
            continue;
        }

        // every adapter must fit before any is scored (paired comparison)
        bool fit_ok = true;
        for (ModelAdapter* adapter : adapters) {
            try {
                adapter->fit_day(split.context);
            } catch (const Error&) {
                fit_ok = false;
                break;
            }
        }
        if (!fit_ok) {
            for (auto& a : accums) ++a.days_skipped;
            continue;
        }

        std::vector<Coordinate> coords;
        coords.reserve(split.targets.size());
        for (const Quote& q : split.targets) coords.push_back(q.coord);

        for (std::size_t ai = 0; ai < adapters.size(); ++ai) {
            const std::vector<double> preds = adapters[ai]->predict(coords);
            ReportAccum& acc = accums[ai];
            for (std::size_t j = 0; j < split.targets.size(); ++j) {
                const Quote& target = split.targets[j];
                const double err = preds[j] - target.vol;
                acc.overall.add(err);
                acc.by_maturity[maturity_bucket(target.coord.tau, buckets)].add(err);
                acc.by_moneyness[moneyness_bucket(target.coord.k, buckets)].add(err);
            }
            ++acc.days_evaluated;
        }
    }

    std::vector<ErrorReport> reports;
    reports.reserve(adapters.size());
    for (std::size_t ai = 0; ai < adapters.size(); ++ai)
        reports.push_back(accums[ai].report(adapters[ai]->name()));
    return reports;
}

ErrorReport evaluate(ModelAdapter& adapter, const std::vector<DayRecord>& test_days, int n_context,
                     std::uint64_t seed, const Buckets& buckets) {
    return evaluate_all({&adapter}, test_days, n_context, seed, buckets).front();
}

SweepResult sparsity_sweep(const std::vector<ModelAdapter*>& adapters,
                           const std::vector<DayRecord>& test_days, const std::vector<int>& n_list,
                           std::uint64_t seed) {
    if (n_list.empty()) throw ConfigError("sparsity_sweep: n_list must be non-empty");
    SweepResult sweep;
    sweep.n_values = n_list;
    for (int n : n_list) sweep.reports.push_back(evaluate_all(adapters, test_days, n, seed));
    return sweep;
}

Heatmap error_heatmap(ModelAdapter& adapter, const std::vector<DayRecord>& test_days,
                      const std::vector<double>& k_edges, const std::vector<double>& tau_edges,
                      int n_context, std::uint64_t seed) {
    if (k_edges.size() < 2 || tau_edges.size() < 2)
        throw ConfigError("error_heatmap: need at least one bin per axis");
    const int nk = static_cast<int>(k_edges.size()) - 1;
    const int nt = static_cast<int>(tau_edges.size()) - 1;
    std::vector<double> sq(static_cast<std::size_t>(nk) * nt, 0.0);
    std::vector<long> count(static_cast<std::size_t>(nk) * nt, 0);

    auto bin_of = [](const std::vector<double>& edges, double x) {
        if (x < edges.front() || x > edges.back()) return -1;
        for (std::size_t i = 1; i < edges.size(); ++i)
            if (x <= edges[i]) return static_cast<int>(i) - 1;
        return -1;
    };

    for (const DayRecord& day : test_days) {
        DaySplit split;
        try {
            split = day_split(day, n_context, seed);
        } catch (const InsufficientQuotes&) {
            continue;
        }
        try {
            adapter.fit_day(split.context);
        } catch (const Error&) {
            continue;
        }
        std::vector<Coordinate> coords;
        coords.reserve(split.targets.size());
        for (const Quote& q : split.targets) coords.push_back(q.coord);
        const std::vector<double> preds = adapter.predict(coords);
        for (std::size_t j = 0; j < split.targets.size(); ++j) {
            const int bk = bin_of(k_edges, split.targets[j].coord.k);
            const int bt = bin_of(tau_edges, split.targets[j].coord.tau);
            if (bk < 0 || bt < 0) continue;
            const double err = preds[j] - split.targets[j].vol;
            sq[static_cast<std::size_t>(bt) * nk + bk] += err * err;
            count[static_cast<std::size_t>(bt) * nk + bk] += 1;
        }
    }

    Heatmap hm;
    hm.k_edges = k_edges;
    hm.tau_edges = tau_edges;
    for (int bt = 0; bt < nt; ++bt)
        for (int bk = 0; bk < nk; ++bk) {
            HeatmapCell cell{k_edges[static_cast<std::size_t>(bk)], k_edges[static_cast<std::size_t>(bk) + 1],
                             tau_edges[static_cast<std::size_t>(bt)], tau_edges[static_cast<std::size_t>(bt) + 1],
                             std::nullopt, 0};
            const std::size_t idx = static_cast<std::size_t>(bt) * nk + bk;
            cell.count = count[idx];
            if (cell.count > 0)
                cell.rmse_bps = std::sqrt(sq[idx] / static_cast<double>(cell.count)) * 1e4;
            hm.cells.push_back(cell);
        }
    return hm;
}

std::string report_to_json_string(const ErrorReport& report) { return report_json(report).dump(2); }

std::string reports_to_json_string(const std::vector<ErrorReport>& reports) {
    nlohmann::json j = nlohmann::json::array();
    for (const ErrorReport& r : reports) j.push_back(report_json(r));
    return j.dump(2);
}

std::string sweep_to_json_string(const SweepResult& sweep) {
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t i = 0; i < sweep.n_values.size(); ++i) {
        nlohmann::json jn;
        jn["n_context"] = sweep.n_values[i];
        jn["reports"] = nlohmann::json::array();
        for (const ErrorReport& r : sweep.reports[i]) jn["reports"].push_back(report_json(r));
        j.push_back(std::move(jn));
    }
    return j.dump(2);
}

void write_heatmap_csv(const std::filesystem::path& path, const Heatmap& heatmap) {
    std::ofstream out(path);
    if (!out) throw IoError("write_heatmap_csv: cannot open " + path.string());
    out << "k_lo,k_hi,tau_lo,tau_hi,rmse_bps,count\n";
    char buf[32];
    auto fmt = [&buf](double v) {
        auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    };
    for (const HeatmapCell& c : heatmap.cells) {
        out << fmt(c.k_lo) << ',' << fmt(c.k_hi) << ',' << fmt(c.tau_lo) << ',' << fmt(c.tau_hi)
            << ',' << (c.rmse_bps ? fmt(*c.rmse_bps) : "") << ',' << c.count << '\n';
    }
    if (!out) throw IoError("write_heatmap_csv: write failed for " + path.string());
}

}  // namespace volnp::eval
