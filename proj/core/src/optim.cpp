#include "volnp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace volnp::optim {

NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                             std::vector<double> x0, const NelderMeadOptions& opt) {
    const std::size_t n = x0.size();
    std::vector<std::vector<double>> simplex(n + 1, x0);
    for (std::size_t i = 0; i < n; ++i)
        simplex[i + 1][i] += (x0[i] != 0.0) ? opt.init_step * std::abs(x0[i]) : opt.init_step;

    std::vector<double> fx(n + 1);
    for (std::size_t i = 0; i <= n; ++i) fx[i] = f(simplex[i]);

    std::vector<std::size_t> order(n + 1);
    NelderMeadResult result;
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
        const std::size_t best = order[0], worst = order[n], second_worst = order[n - 1];

        double diam = 0.0;
        for (std::size_t i = 1; i <= n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                diam = std::max(diam, std::abs(simplex[order[i]][j] - simplex[best][j]));
        if (std::abs(fx[worst] - fx[best]) <= opt.f_tol && diam <= opt.x_tol) {
            result.converged = true;
            break;
        }

        std::vector<double> centroid(n, 0.0);
        for (std::size_t i = 0; i <= n; ++i) {
            if (i == worst) continue;
            for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[i][j];
        }
        for (double& c : centroid) c /= static_cast<double>(n);

        auto blend = [&](double t) {
            std::vector<double> p(n);
            for (std::size_t j = 0; j < n; ++j)
                p[j] = centroid[j] + t * (simplex[worst][j] - centroid[j]);
            return p;
        };

        std::vector<double> refl = blend(-1.0);
        const double f_refl = f(refl);
        if (f_refl < fx[best]) {
            std::vector<double> expd = blend(-2.0);
            const double f_expd = f(expd);
            if (f_expd < f_refl) {
                simplex[worst] = std::move(expd);
                fx[worst] = f_expd;
            } else {
                simplex[worst] = std::move(refl);
                fx[worst] = f_refl;
            }
        } else if (f_refl < fx[second_worst]) {
            simplex[worst] = std::move(refl);
            fx[worst] = f_refl;
        } else {
            const bool outside = f_refl < fx[worst];
            std::vector<double> contr = blend(outside ? -0.5 : 0.5);
            const double f_contr = f(contr);
            if (f_contr < std::min(f_refl, fx[worst])) {
                simplex[worst] = std::move(contr);
                fx[worst] = f_contr;
            } else {
                // shrink toward the best vertex
                for (std::size_t i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (std::size_t j = 0; j < n; ++j)
                        simplex[i][j] = simplex[best][j] + 0.5 * (simplex[i][j] - simplex[best][j]);
                    fx[i] = f(simplex[i]);
                }
            }
        }
    }

    std::size_t best = 0;
    for (std::size_t i = 1; i <= n; ++i)
        if (fx[i] < fx[best]) best = i;
    result.x = simplex[best];
    result.fx = fx[best];
    result.iterations = it;
    return result;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi,
                      double x_tol, int max_iter) {
    constexpr double inv_phi = 0.6180339887498949;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = f(c), fd = f(d);
    for (int it = 0; it < max_iter && (b - a) > x_tol; ++it) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

std::vector<double> isotonic_non_decreasing(const std::vector<double>& v) {
    // pool adjacent violators with unit weights
    std::vector<double> level;
    std::vector<int> count;
    for (double x : v) {
        level.push_back(x);
        count.push_back(1);
        while (level.size() > 1 && level[level.size() - 2] > level.back()) {
            const double merged = (level[level.size() - 2] * count[count.size() - 2] +
                                   level.back() * count.back()) /
                                  (count[count.size() - 2] + count.back());
            const int c = count[count.size() - 2] + count.back();
            level.pop_back();
            count.pop_back();
            level.back() = merged;
            count.back() = c;
        }
    }
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < level.size(); ++i)
        out.insert(out.end(), static_cast<std::size_t>(count[i]), level[i]);
    return out;
}

}  // namespace volnp::optim
