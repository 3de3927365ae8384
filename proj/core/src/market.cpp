#include "volnp/market.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "volnp/black.hpp"
#include "volnp/errors.hpp"
#include "volnp/optim.hpp"
#include "volnp/rng.hpp"
#include "volnp/ssvi.hpp"

namespace volnp::market {

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(std::string_view s, const std::string& context) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw IoError("bad numeric field '" + std::string(s) + "' in " + context);
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ',') {
            fields.emplace_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return fields;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ------------------------------------------------------------------
// ground-truth surface generators

struct SsviTruth {
    ssvi::SsviParams params;
    double level = 0.0;

    double vol(double k, double tau) const { return ssvi::implied_vol(params, k, tau); }
};

struct SabrMixTruth {
    sabr::SabrTermStructure a;
    sabr::SabrTermStructure b;
    double lambda = 0.5;
    double level = 0.0;

    double vol(double k, double tau) const {
        const double strike = std::exp(k);
        const sabr::SabrParams pa = sabr::interpolate_params(a, tau);
        const sabr::SabrParams pb = sabr::interpolate_params(b, tau);
        const double va = sabr::hagan_vol(pa, 1.0, strike, tau);
        const double vb = sabr::hagan_vol(pb, 1.0, strike, tau);
        return std::sqrt(lambda * va * va + (1.0 - lambda) * vb * vb);
    }
};

struct TruthSurface {
    TruthGenerator kind = TruthGenerator::ssvi_random;
    SsviTruth ssvi_truth;
    SabrMixTruth sabr_truth;

    double vol(double k, double tau) const {
        return kind == TruthGenerator::ssvi_random ? ssvi_truth.vol(k, tau)
                                                   : sabr_truth.vol(k, tau);
    }
    double level() const {
        return kind == TruthGenerator::ssvi_random ? ssvi_truth.level : sabr_truth.level;
    }
};

SsviTruth make_ssvi_truth(const std::vector<double>& z, const SyntheticMarketConfig& cfg) {
    SsviTruth t;
    const double sigma0 = cfg.atm_vol_min + (cfg.atm_vol_max - cfg.atm_vol_min) * sigmoid(0.8 * z[0]);
    const double slope = -0.12 + 0.30 * sigmoid(0.7 * z[1]);
    const double rho = -0.75 + 0.50 * sigmoid(0.8 * z[2]);
    const double gamma = 0.30 + 0.18 * sigmoid(0.8 * z[3]);
    const double eta_base = 0.6 + 1.2 * sigmoid(0.8 * z[4]);

    const auto& taus = synthetic_expiries();
    std::vector<double> thetas;
    thetas.reserve(taus.size());
    for (double tau : taus) {
        const double level = sigma0 * (1.0 + slope * (std::sqrt(tau) - 0.5));
        thetas.push_back(level * level * tau);
    }
    thetas = optim::isotonic_non_decreasing(thetas);

    // cap eta so both butterfly inequalities hold up to theta_max
    const double theta_max = thetas.back();
    const double c4 = 4.0 / (1.0 + std::abs(rho));
    const double eta1 = c4 / std::pow(theta_max, 1.0 - gamma);
    const double eta2 = std::sqrt(c4 / std::pow(theta_max, 1.0 - 2.0 * gamma));
    const double eta = std::min(eta_base, 0.9 * std::min(eta1, eta2));

    t.params.rho = rho;
    t.params.eta = eta;
    t.params.gamma_exp = gamma;
    for (std::size_t i = 0; i < taus.size(); ++i) t.params.theta_curve.emplace_back(taus[i], thetas[i]);
    t.level = sigma0;
    return t;
}

sabr::SabrTermStructure make_sabr_leg(double level, double slope, double rho, double nu,
                                      double forward_level) {
    sabr::SabrTermStructure ts;
    for (double tau : synthetic_expiries()) {
        sabr::SabrParams p;
        p.alpha = std::max(0.03, level * (1.0 + slope * (std::sqrt(tau) - 0.5)));
        p.beta = 1.0;
        p.rho = rho;
        p.nu = nu * std::pow(0.25 + tau, -0.35);
        ts.slices.push_back({tau, p});
    }
    ts.forward_curve.emplace_back(synthetic_expiries().front(), forward_level);
    ts.forward_curve.emplace_back(synthetic_expiries().back(), forward_level);
    return ts;
}

SabrMixTruth make_sabr_mix_truth(const std::vector<double>& z, const SyntheticMarketConfig& cfg) {
    SabrMixTruth t;
    const double sigma0 = cfg.atm_vol_min + (cfg.atm_vol_max - cfg.atm_vol_min) * sigmoid(0.8 * z[0]);
    const double slope = -0.12 + 0.30 * sigmoid(0.7 * z[1]);
    const double rho1 = -0.80 + 0.55 * sigmoid(0.8 * z[2]);
    const double rho2 = -0.60 + 0.55 * sigmoid(0.8 * z[3]);
    const double nu1 = 0.35 + 0.70 * sigmoid(0.8 * z[4]);
    const double nu2 = 0.25 + 0.50 * sigmoid(0.8 * z[5]);
    t.a = make_sabr_leg(sigma0, slope, rho1, nu1, 1.0);
    t.b = make_sabr_leg(sigma0 * (0.9 + 0.2 * sigmoid(z[5])), slope * 0.5, rho2, nu2, 1.0);
    t.lambda = 0.3 + 0.4 * sigmoid(0.8 * z[1]);
    t.level = sigma0;
    return t;
}

std::chrono::year_month_day advance_weekdays(std::chrono::year_month_day from, int n) {
    std::chrono::sys_days d{from};
    while (n > 0) {
        d += std::chrono::days{1};
        const std::chrono::weekday wd{d};
        if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) --n;
    }
    return std::chrono::year_month_day{d};
}

}  // namespace

const std::vector<double>& synthetic_expiries() {
    static const std::vector<double> taus = {
        7.0 / 365.0,  14.0 / 365.0, 30.0 / 365.0,  61.0 / 365.0,  91.0 / 365.0,
        182.0 / 365.0, 273.0 / 365.0, 365.0 / 365.0, 548.0 / 365.0, 730.0 / 365.0};
    return taus;
}

DayRecord ingest_day(const std::vector<RawQuoteRecord>& records, const PreprocessConfig& cfg,
                     int day_id, IngestStats* stats) {
    IngestStats local;
    local.input_records = static_cast<int>(records.size());
    if (records.empty()) throw EmptyAfterFilter("ingest_day: no input records");
    const auto date = records.front().date;
    for (const RawQuoteRecord& r : records)
        if (r.date != date) throw DomainError("ingest_day: records span multiple dates");

    DayRecord day;
    day.day_id = day_id;
    day.date = format_date(date);

    std::set<std::pair<double, double>> seen;
    for (const RawQuoteRecord& r : records) {
        if (!(r.ask >= r.bid) || !(r.bid >= 0.0) || !(r.strike > 0.0) || !(r.forward > 0.0))
            throw DomainError("ingest_day: record violates bid/ask/strike/forward invariants");
        if (r.bid < cfg.min_bid) {
            ++local.dropped_liquidity;
            continue;
        }
        const double mid = 0.5 * (r.bid + r.ask);
        if (mid <= 0.0 || (r.ask - r.bid) / mid > cfg.max_rel_spread) {
            ++local.dropped_liquidity;
            continue;
        }
        const double tau = year_fraction(r.date, r.expiry);
        if (!(tau > 0.0)) throw DomainError("ingest_day: expiry not after trade date");
        const double k = std::log(r.strike / r.forward);
        if (tau < cfg.tau_min || tau > cfg.tau_max || k < cfg.k_min || k > cfg.k_max) {
            ++local.dropped_range;
            continue;
        }

        black::BlackInputs bi{r.forward, r.strike, tau, r.discount_factor, r.option_type};
        double vol = 0.0;
        try {
            vol = black::implied_vol(bi, mid);
        } catch (const OutOfBounds&) {
            ++local.dropped_inversion;
            continue;
        } catch (const NoConvergence&) {
            ++local.dropped_inversion;
            continue;
        }
        if (!(vol > 0.0) || vol >= 5.0) {
            ++local.dropped_inversion;
            continue;
        }

        if (cfg.dedup && !seen.insert({k, tau}).second) {
            ++local.dropped_duplicates;
            continue;
        }
        day.quotes.push_back(Quote{{k, tau}, vol});
        if (day.forward_curve.find(tau) == day.forward_curve.end())
            day.forward_curve[tau] = r.forward;
    }

    if (stats) *stats = local;
    if (day.quotes.empty()) throw EmptyAfterFilter("ingest_day: every record was filtered out");
    return day;
}

std::vector<DayRecord> generate_market(const SyntheticMarketConfig& cfg) {
    if (!(cfg.noise_bps >= 0.0)) throw DomainError("generate_market: noise_bps must be >= 0");
    auto check_shares = [](const std::array<double, 3>& s, const char* what) {
        const double total = s[0] + s[1] + s[2];
        if (std::abs(total - 1.0) > 1e-9 || s[0] < 0 || s[1] < 0 || s[2] < 0)
            throw DomainError(std::string("generate_market: ") + what +
                              " proportions must be non-negative and sum to 1");
    };
    check_shares(cfg.maturity_shares, "maturity");
    check_shares(cfg.moneyness_shares, "moneyness");

    const auto& taus = synthetic_expiries();
    std::vector<std::vector<double>> maturity_buckets(3);
    for (double tau : taus) {
        if (tau <= 0.25)
            maturity_buckets[0].push_back(tau);
        else if (tau <= 1.0)
            maturity_buckets[1].push_back(tau);
        else
            maturity_buckets[2].push_back(tau);
    }

    Rng regime_rng(mix_seed(cfg.seed, 0x11));
    std::vector<double> z(6, 0.0);
    for (double& zi : z) zi = regime_rng.normal();
    const double c = cfg.day_autocorr;
    const double innov = std::sqrt(std::max(0.0, 1.0 - c * c));

    auto first_date = parse_date(cfg.start_date);
    std::vector<DayRecord> days;
    days.reserve(static_cast<std::size_t>(cfg.n_days));

    for (int q = 0; q < cfg.n_days; ++q) {
        if (q > 0)
            for (double& zi : z) zi = c * zi + innov * regime_rng.normal();

        TruthSurface truth;
        truth.kind = cfg.generator;
        if (cfg.generator == TruthGenerator::ssvi_random)
            truth.ssvi_truth = make_ssvi_truth(z, cfg);
        else
            truth.sabr_truth = make_sabr_mix_truth(z, cfg);

        DayRecord day;
        day.day_id = q;
        day.date = format_date(advance_weekdays(first_date, q));
        for (double tau : taus) day.forward_curve[tau] = cfg.forward_level;

        Rng rng(mix_seed(cfg.seed, 0xDA, static_cast<std::uint64_t>(q)));
        const double sigma0 = truth.level();
        day.quotes.reserve(static_cast<std::size_t>(cfg.quotes_per_day));
        for (int j = 0; j < cfg.quotes_per_day; ++j) {
            // maturity bucket, then a pillar expiry inside it
            const double um = rng.uniform();
            int mb = um < cfg.maturity_shares[0]
                         ? 0
                         : (um < cfg.maturity_shares[0] + cfg.maturity_shares[1] ? 1 : 2);
            const auto& bucket = maturity_buckets[static_cast<std::size_t>(mb)];
            const double tau = bucket[rng.uniform_int(bucket.size())];

            // moneyness bucket, demoted toward ATM when the maturity cannot
            // support far strikes
            const double k_cap = std::min(0.8, 0.05 + 2.4 * sigma0 * std::sqrt(tau));
            const double uk = rng.uniform();
            int kb = uk < cfg.moneyness_shares[0]
                         ? 0
                         : (uk < cfg.moneyness_shares[0] + cfg.moneyness_shares[1] ? 1 : 2);
            static constexpr double edges[4] = {0.0, 0.05, 0.2, 0.8};
            while (kb > 0 && edges[kb] >= k_cap) --kb;
            const double abs_k = rng.uniform(edges[kb], std::min(edges[kb + 1], k_cap));
            const double k = rng.uniform() < 0.5 ? -abs_k : abs_k;

            double vol = truth.vol(k, tau) + cfg.noise_bps * 1e-4 * rng.normal();
            vol = std::clamp(vol, 0.01, 4.99);
            day.quotes.push_back(Quote{{k, tau}, vol});
        }

        std::vector<Quote> grid;
        const int nk = static_cast<int>(std::floor((cfg.truth_k_hi - cfg.truth_k_lo) / cfg.truth_k_step + 1e-9)) + 1;
        grid.reserve(static_cast<std::size_t>(nk) * taus.size());
        for (double tau : taus)
            for (int i = 0; i < nk; ++i) {
                const double k = cfg.truth_k_lo + i * cfg.truth_k_step;
                grid.push_back(Quote{{k, tau}, truth.vol(k, tau)});
            }
        day.ground_truth = std::move(grid);
        days.push_back(std::move(day));
    }
    return days;
}

std::vector<RawQuoteRecord> to_raw_records(const DayRecord& day, const SyntheticMarketConfig& cfg) {
    const auto date = parse_date(day.date);
    std::vector<RawQuoteRecord> out;
    out.reserve(day.quotes.size());
    for (const Quote& q : day.quotes) {
        RawQuoteRecord r;
        r.date = date;
        const int days_to_expiry = static_cast<int>(std::lround(q.coord.tau * 365.0));
        r.expiry = std::chrono::year_month_day{std::chrono::sys_days{date} +
                                               std::chrono::days{days_to_expiry}};
        r.forward = cfg.forward_level;
        r.strike = cfg.forward_level * std::exp(q.coord.k);
        r.discount_factor = std::exp(-cfg.rate * q.coord.tau);
        r.option_type = q.coord.k >= 0.0 ? OptionType::call : OptionType::put;
        const black::BlackInputs bi{r.forward, r.strike, q.coord.tau, r.discount_factor,
                                    r.option_type};
        const double mid = black::price(bi, q.vol);
        const double half = std::max(0.005, 0.01 * mid);
        r.bid = std::max(mid - half, 0.0);
        r.ask = mid + half;
        out.push_back(r);
    }
    return out;
}

PriorBuildStats build_pretraining_surfaces(
    std::vector<DayRecord>& days, const SurfaceGridConfig& cfg,
    std::vector<std::optional<sabr::SabrTermStructure>>* out_term_structures) {
    PriorBuildStats stats;
    if (out_term_structures) out_term_structures->assign(days.size(), std::nullopt);

    std::vector<double> k_grid;
    for (double k = cfg.k_lo; k <= cfg.k_hi + 1e-12; k += cfg.k_step) k_grid.push_back(k);

    for (std::size_t di = 0; di < days.size(); ++di) {
        DayRecord& day = days[di];
        std::map<double, std::vector<Quote>> slices;
        for (const Quote& q : day.quotes) slices[q.coord.tau].push_back(q);

        sabr::SabrTermStructure ts;
        bool failed = false;
        for (const auto& [tau, quotes] : slices) {
            if (static_cast<int>(quotes.size()) < cfg.min_slice_quotes) {
                ++stats.slices_skipped;
                continue;
            }
            const auto fit = day.forward_curve.find(tau);
            const double fwd = fit != day.forward_curve.end() ? fit->second : 1.0;
            try {
                ts.slices.push_back({tau, sabr::calibrate_slice(quotes, fwd, tau, cfg.beta)});
                ts.forward_curve.emplace_back(tau, fwd);
            } catch (const CalibrationFailed&) {
                ++stats.slices_skipped;
            }
        }

        if (ts.slices.empty()) failed = true;

        if (!failed) {
            std::vector<double> tau_grid;
            for (std::size_t i = 0; i < ts.slices.size(); ++i) {
                tau_grid.push_back(ts.slices[i].tau);
                if (cfg.tau_midpoints && i + 1 < ts.slices.size())
                    tau_grid.push_back(0.5 * (ts.slices[i].tau + ts.slices[i + 1].tau));
            }
            std::sort(tau_grid.begin(), tau_grid.end());
            try {
                day.synthetic_surface = sabr::generate_surface(ts, k_grid, tau_grid);
                if (out_term_structures) (*out_term_structures)[di] = ts;
                ++stats.days_ok;
            } catch (const Error&) {
                failed = true;
            }
        }
        if (failed) {
            day.synthetic_surface.reset();
            ++stats.days_failed;
            stats.failed_day_ids.push_back(day.day_id);
        }
    }
    return stats;
}

// ------------------------------------------------------------------
// CSV and bundle I/O

namespace {
constexpr const char* kQuoteHeader = "date,expiry,strike,type,bid,ask,forward,discount_factor";
constexpr const char* kSurfaceHeader = "k,tau,vol";
}  // namespace

std::vector<RawQuoteRecord> read_quote_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_quote_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kQuoteHeader)
        throw IoError("read_quote_csv: bad header in " + path.string());
    std::vector<RawQuoteRecord> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        const std::string ctx = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 8) throw IoError("read_quote_csv: expected 8 fields in " + ctx);
        RawQuoteRecord r;
        r.date = parse_date(f[0]);
        r.expiry = parse_date(f[1]);
        r.strike = parse_double(f[2], ctx);
        if (f[3] == "call")
            r.option_type = OptionType::call;
        else if (f[3] == "put")
            r.option_type = OptionType::put;
        else
            throw IoError("read_quote_csv: bad option type '" + f[3] + "' in " + ctx);
        r.bid = parse_double(f[4], ctx);
        r.ask = parse_double(f[5], ctx);
        r.forward = parse_double(f[6], ctx);
        r.discount_factor = parse_double(f[7], ctx);
        out.push_back(r);
    }
    return out;
}

void write_quote_csv(const std::filesystem::path& path, const std::vector<RawQuoteRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("write_quote_csv: cannot open " + path.string());
    out << kQuoteHeader << '\n';
    for (const RawQuoteRecord& r : records) {
        out << format_date(r.date) << ',' << format_date(r.expiry) << ',' << fmt_double(r.strike)
            << ',' << (r.option_type == OptionType::call ? "call" : "put") << ','
            << fmt_double(r.bid) << ',' << fmt_double(r.ask) << ',' << fmt_double(r.forward) << ','
            << fmt_double(r.discount_factor) << '\n';
    }
    if (!out) throw IoError("write_quote_csv: write failed for " + path.string());
}

std::vector<Quote> read_surface_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_surface_csv: cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kSurfaceHeader)
        throw IoError("read_surface_csv: bad header in " + path.string());
    std::vector<Quote> out;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        const std::string ctx = path.string() + ":" + std::to_string(lineno);
        if (f.size() != 3) throw IoError("read_surface_csv: expected 3 fields in " + ctx);
        out.push_back(Quote{{parse_double(f[0], ctx), parse_double(f[1], ctx)},
                            parse_double(f[2], ctx)});
    }
    return out;
}

void write_surface_csv(const std::filesystem::path& path, const std::vector<Quote>& quotes) {
    std::ofstream out(path);
    if (!out) throw IoError("write_surface_csv: cannot open " + path.string());
    out << kSurfaceHeader << '\n';
    for (const Quote& q : quotes)
        out << fmt_double(q.coord.k) << ',' << fmt_double(q.coord.tau) << ',' << fmt_double(q.vol)
            << '\n';
    if (!out) throw IoError("write_surface_csv: write failed for " + path.string());
}

void write_bundle(const std::filesystem::path& root, const std::vector<DayRecord>& days,
                  const SyntheticMarketConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(root / "days", ec);
    if (ec) throw IoError("write_bundle: cannot create " + (root / "days").string());

    nlohmann::json index;
    index["format"] = "volnp-bundle";
    index["version"] = 1;
    index["generator"] = cfg.generator == TruthGenerator::ssvi_random ? "ssvi_random" : "sabr_mixture";
    index["seed"] = cfg.seed;
    index["noise_bps"] = cfg.noise_bps;
    index["quotes_per_day"] = cfg.quotes_per_day;
    index["days"] = nlohmann::json::array();

    for (const DayRecord& day : days) {
        const auto dir = root / "days" / day.date;
        std::filesystem::create_directories(dir, ec);
        if (ec) throw IoError("write_bundle: cannot create " + dir.string());
        write_quote_csv(dir / "quotes.csv", to_raw_records(day, cfg));
        if (day.ground_truth) write_surface_csv(dir / "truth.csv", *day.ground_truth);
        if (day.synthetic_surface) write_surface_csv(dir / "sabr_surface.csv", *day.synthetic_surface);
        index["days"].push_back(day.date);
    }

    std::ofstream out(root / "index.json");
    if (!out) throw IoError("write_bundle: cannot open " + (root / "index.json").string());
    out << index.dump(2) << '\n';
}

LoadedBundle load_bundle(const std::filesystem::path& root, const PreprocessConfig& cfg) {
    std::ifstream in(root / "index.json");
    if (!in) throw IoError("load_bundle: cannot open " + (root / "index.json").string());
    nlohmann::json index;
    try {
        in >> index;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("load_bundle: bad index.json: " + std::string(e.what()));
    }
    if (index.value("format", "") != "volnp-bundle")
        throw IoError("load_bundle: " + root.string() + " is not a day bundle");

    LoadedBundle bundle;
    int day_id = 0;
    for (const auto& jd : index.at("days")) {
        const std::string date = jd.get<std::string>();
        const auto dir = root / "days" / date;
        IngestStats stats;
        DayRecord day = ingest_day(read_quote_csv(dir / "quotes.csv"), cfg, day_id, &stats);
        if (std::filesystem::exists(dir / "truth.csv"))
            day.ground_truth = read_surface_csv(dir / "truth.csv");
        if (std::filesystem::exists(dir / "sabr_surface.csv"))
            day.synthetic_surface = read_surface_csv(dir / "sabr_surface.csv");
        bundle.days.push_back(std::move(day));
        bundle.stats.push_back(stats);
        ++day_id;
    }
    return bundle;
}

void write_prior_files(const std::filesystem::path& root, const DayRecord& day,
                       const std::optional<sabr::SabrTermStructure>& ts) {
    const auto dir = root / "days" / day.date;
    if (!std::filesystem::exists(dir))
        throw IoError("write_prior_files: no bundle day directory " + dir.string());
    if (day.synthetic_surface) write_surface_csv(dir / "sabr_surface.csv", *day.synthetic_surface);
    if (ts) {
        std::ofstream out(dir / "sabr_params.json");
        if (!out) throw IoError("write_prior_files: cannot open " + (dir / "sabr_params.json").string());
        out << sabr::to_json_string(*ts) << '\n';
    }
}

}  // namespace volnp::market
