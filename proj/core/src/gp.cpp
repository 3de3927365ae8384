#include "volnp/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "volnp/errors.hpp"
#include "volnp/optim.hpp"

namespace volnp::gp {

namespace {

double kernel(const GpHyper& h, const Coordinate& a, const Coordinate& b) {
    const double dk = (a.k - b.k) / h.length_k;
    const double dt = (a.tau - b.tau) / h.length_tau;
    return h.signal_var * std::exp(-0.5 * (dk * dk + dt * dt));
}

// in-place lower Cholesky of a row-major n x n matrix; returns false when a
// pivot goes non-positive
bool cholesky(std::vector<double>& m, int n) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = m[static_cast<std::size_t>(i) * n + j];
            for (int l = 0; l < j; ++l)
                s -= m[static_cast<std::size_t>(i) * n + l] * m[static_cast<std::size_t>(j) * n + l];
            if (i == j) {
                if (!(s > 0.0)) return false;
                m[static_cast<std::size_t>(i) * n + j] = std::sqrt(s);
            } else {
                m[static_cast<std::size_t>(i) * n + j] = s / m[static_cast<std::size_t>(j) * n + j];
            }
        }
        for (int j = i + 1; j < n; ++j) m[static_cast<std::size_t>(i) * n + j] = 0.0;
    }
    return true;
}

void solve_lower(const std::vector<double>& L, int n, std::vector<double>& b) {
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int j = 0; j < i; ++j) s -= L[static_cast<std::size_t>(i) * n + j] * b[static_cast<std::size_t>(j)];
        b[static_cast<std::size_t>(i)] = s / L[static_cast<std::size_t>(i) * n + i];
    }
}

void solve_upper_t(const std::vector<double>& L, int n, std::vector<double>& b) {
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) s -= L[static_cast<std::size_t>(j) * n + i] * b[static_cast<std::size_t>(j)];
        b[static_cast<std::size_t>(i)] = s / L[static_cast<std::size_t>(i) * n + i];
    }
}

void check_hyper(const GpHyper& h) {
    if (!(h.signal_var > 0.0) || !(h.length_k > 0.0) || !(h.length_tau > 0.0) ||
        !(h.noise_var >= kNoiseFloor))
        throw DomainError("gp: hyperparameters must be positive (noise >= floor)");
}

// builds the factorized state for fixed hyperparameters, escalating jitter up
// to 1e-4 before giving up
GpModel condition(const std::vector<Quote>& context, const GpHyper& h) {
    check_hyper(h);
    const int n = static_cast<int>(context.size());
    GpModel m;
    m.hyper = h;
    m.x.reserve(static_cast<std::size_t>(n));
    double mean = 0.0;
    for (const Quote& q : context) {
        m.x.push_back(q.coord);
        mean += q.vol;
    }
    m.prior_mean = mean / n;

    std::vector<double> base(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            base[static_cast<std::size_t>(i) * n + j] = kernel(h, m.x[static_cast<std::size_t>(i)], m.x[static_cast<std::size_t>(j)]);

    double jitter = 0.0;
    for (;;) {
        m.chol = base;
        for (int i = 0; i < n; ++i)
            m.chol[static_cast<std::size_t>(i) * n + i] += h.noise_var + jitter;
        if (cholesky(m.chol, n)) break;
        jitter = (jitter == 0.0) ? 1e-10 : jitter * 10.0;
        if (jitter > 1e-4)
            throw SingularKernel("gp: kernel factorization failed at jitter 1e-4");
    }
    m.jitter_used = jitter;

    m.alpha.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) m.alpha[static_cast<std::size_t>(i)] = context[static_cast<std::size_t>(i)].vol - m.prior_mean;
    std::vector<double> z = m.alpha;  // z = L^-1 (y - m)
    solve_lower(m.chol, n, z);

    double quad = 0.0, logdet = 0.0;
    for (int i = 0; i < n; ++i) {
        quad += z[static_cast<std::size_t>(i)] * z[static_cast<std::size_t>(i)];
        logdet += std::log(m.chol[static_cast<std::size_t>(i) * n + i]);
    }
    m.log_marginal = -0.5 * quad - logdet - 0.5 * n * std::log(2.0 * std::numbers::pi);

    solve_lower(m.chol, n, m.alpha);
    solve_upper_t(m.chol, n, m.alpha);  // alpha = (K + sn2 I)^-1 (y - m)
    return m;
}

}  // namespace

double log_marginal_likelihood(const std::vector<Quote>& context, const GpHyper& h) {
    return condition(context, h).log_marginal;
}

GpModel fit(const std::vector<Quote>& context, const GpHyper& init, const FitOptions& opt) {
    if (context.size() < 2) throw InsufficientQuotes("gp::fit: need >= 2 context points");
    bool all_same = true;
    for (const Quote& q : context)
        if (q.coord.k != context.front().coord.k || q.coord.tau != context.front().coord.tau) {
            all_same = false;
            break;
        }
    if (all_same) throw InsufficientQuotes("gp::fit: all context coordinates are identical");
    check_hyper(init);

    if (!opt.optimize) return condition(context, init);

    // scale-aware multi-starts plus the caller's init
    double y_mean = 0.0;
    for (const Quote& q : context) y_mean += q.vol;
    y_mean /= static_cast<double>(context.size());
    double y_var = 0.0;
    for (const Quote& q : context) y_var += (q.vol - y_mean) * (q.vol - y_mean);
    y_var = std::max(y_var / static_cast<double>(context.size()), 1e-8);

    auto pack = [](const GpHyper& h) {
        return std::vector<double>{std::log(h.signal_var), std::log(h.length_k),
                                   std::log(h.length_tau), std::log(h.noise_var)};
    };
    auto unpack = [](const std::vector<double>& u) {
        GpHyper h;
        h.signal_var = std::exp(std::clamp(u[0], -18.0, 6.0));
        h.length_k = std::exp(std::clamp(u[1], -6.0, 4.0));
        h.length_tau = std::exp(std::clamp(u[2], -6.0, 4.0));
        h.noise_var = std::max(std::exp(std::clamp(u[3], -25.0, 2.0)), kNoiseFloor);
        return h;
    };
    auto objective = [&](const std::vector<double>& u) {
        try {
            return -log_marginal_likelihood(context, unpack(u));
        } catch (const SingularKernel&) {
            return std::numeric_limits<double>::max();
        }
    };

    std::vector<GpHyper> start_hypers = {
        init,
        GpHyper{y_var, 0.1, 0.3, 1e-6},
        GpHyper{y_var, 0.3, 1.0, 1e-4 * y_var + kNoiseFloor},
        GpHyper{4.0 * y_var, 0.2, 0.5, 1e-5},
    };

    optim::NelderMeadOptions nm;
    nm.max_iter = opt.nm_max_iter;
    double best_f = std::numeric_limits<double>::max();
    std::vector<double> best_u;
    for (const GpHyper& h0 : start_hypers) {
        const std::vector<double> u0 = pack(h0);
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
    if (best_u.empty()) throw SingularKernel("gp::fit: every start failed to factorize");
    return condition(context, unpack(best_u));
}

std::vector<std::pair<double, double>> predict(const GpModel& model,
                                               const std::vector<Coordinate>& targets) {
    const int n = static_cast<int>(model.x.size());
    std::vector<std::pair<double, double>> out;
    out.reserve(targets.size());
    std::vector<double> ks(static_cast<std::size_t>(n));
    for (const Coordinate& t : targets) {
        for (int i = 0; i < n; ++i) ks[static_cast<std::size_t>(i)] = kernel(model.hyper, model.x[static_cast<std::size_t>(i)], t);
        double mean = model.prior_mean;
        for (int i = 0; i < n; ++i) mean += ks[static_cast<std::size_t>(i)] * model.alpha[static_cast<std::size_t>(i)];
        std::vector<double> v = ks;
        solve_lower(model.chol, n, v);
        double reduction = 0.0;
        for (int i = 0; i < n; ++i) reduction += v[static_cast<std::size_t>(i)] * v[static_cast<std::size_t>(i)];
        const double var = std::max(model.hyper.signal_var - reduction, 0.0);
        out.emplace_back(mean, var);
    }
    return out;
}

}  // namespace volnp::gp
