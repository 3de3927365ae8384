#include "volnp/types.hpp"

#include <algorithm>
#include <charconv>

#include "volnp/errors.hpp"
#include "volnp/rng.hpp"

namespace volnp {

Task make_task(const DayRecord& day, int n_context, int n_target, TaskSource source,
               std::uint64_t rng_seed) {
    const int n_quotes = static_cast<int>(day.quotes.size());
    if (n_context < 1)
        throw InsufficientQuotes("make_task: n_context must be >= 1");
    if (n_quotes < n_context)
        throw InsufficientQuotes("make_task: day " + std::to_string(day.day_id) + " has " +
                                 std::to_string(n_quotes) + " quotes, need " +
                                 std::to_string(n_context) + " for the context");

    Rng rng(rng_seed);
    Task task;
    task.day_id = day.day_id;

    std::vector<int> ctx_idx = rng.sample_without_replacement(n_quotes, n_context);
    std::vector<bool> in_context(static_cast<std::size_t>(n_quotes), false);
    task.context.reserve(static_cast<std::size_t>(n_context));
    for (int i : ctx_idx) {
        task.context.push_back(day.quotes[static_cast<std::size_t>(i)]);
        in_context[static_cast<std::size_t>(i)] = true;
    }

    if (source == TaskSource::real_to_real) {
        std::vector<int> remaining;
        remaining.reserve(static_cast<std::size_t>(n_quotes - n_context));
        for (int i = 0; i < n_quotes; ++i)
            if (!in_context[static_cast<std::size_t>(i)]) remaining.push_back(i);

        const int n_rem = static_cast<int>(remaining.size());
        const int m = (n_target == kAllRemaining) ? n_rem : n_target;
        if (m < 1 || n_rem < m)
            throw InsufficientQuotes("make_task: day " + std::to_string(day.day_id) + " has " +
                                     std::to_string(n_rem) + " quotes left for targets, need " +
                                     std::to_string(std::max(m, 1)));
        if (m == n_rem) {
            for (int i : remaining) task.targets.push_back(day.quotes[static_cast<std::size_t>(i)]);
        } else {
            std::vector<int> pick = rng.sample_without_replacement(n_rem, m);
            for (int p : pick) task.targets.push_back(day.quotes[static_cast<std::size_t>(remaining[static_cast<std::size_t>(p)])]);
        }
    } else {
        if (!day.synthetic_surface.has_value())
            throw InsufficientQuotes("make_task: day " + std::to_string(day.day_id) +
                                     " has no synthetic surface for real_to_synthetic targets");
        const auto& surf = *day.synthetic_surface;
        const int n_surf = static_cast<int>(surf.size());
        if (n_target < 1 || n_surf < n_target)
            throw InsufficientQuotes("make_task: synthetic surface of day " +
                                     std::to_string(day.day_id) + " has " + std::to_string(n_surf) +
                                     " points, need " + std::to_string(std::max(n_target, 1)));
        std::vector<int> pick = rng.sample_without_replacement(n_surf, n_target);
        for (int p : pick) task.targets.push_back(surf[static_cast<std::size_t>(p)]);
    }
    return task;
}

std::chrono::year_month_day parse_date(const std::string& iso) {
    int y = 0;
    unsigned m = 0, d = 0;
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-')
        throw IoError("parse_date: expected yyyy-mm-dd, got '" + iso + "'");
    auto num = [&](int lo, int hi, auto& out) {
        auto res = std::from_chars(iso.data() + lo, iso.data() + hi, out);
        if (res.ec != std::errc{} || res.ptr != iso.data() + hi)
            throw IoError("parse_date: expected yyyy-mm-dd, got '" + iso + "'");
    };
    num(0, 4, y);
    num(5, 7, m);
    num(8, 10, d);
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw IoError("parse_date: invalid calendar date '" + iso + "'");
    return ymd;
}

std::string format_date(const std::chrono::year_month_day& d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                  static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
    return buf;
}

double year_fraction(const std::chrono::year_month_day& from,
                     const std::chrono::year_month_day& to) {
    const auto days = std::chrono::sys_days{to} - std::chrono::sys_days{from};
    return static_cast<double>(days.count()) / 365.0;
}

}  // namespace volnp
