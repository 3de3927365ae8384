#include "volnp/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "volnp/errors.hpp"
#include "volnp/parallel.hpp"
#include "volnp/rng.hpp"

namespace volnp::train {

namespace {

constexpr std::uint64_t kStreamShuffle = 0x53;
constexpr std::uint64_t kStreamTask = 0x7A;
constexpr std::uint64_t kStreamVal = 0xA1;

TaskSource stage_source(Stage s) {
    return s == Stage::pretrain ? TaskSource::real_to_synthetic : TaskSource::real_to_real;
}

void check_day_for_stage(const DayRecord& day, const TrainConfig& cfg) {
    if (cfg.stage == Stage::pretrain) {
        if (!day.synthetic_surface.has_value() || day.synthetic_surface->empty())
            throw DataStageMismatch("run_stage: day " + std::to_string(day.day_id) +
                                    " has no synthetic surface for pre-training");
    } else {
        if (static_cast<int>(day.quotes.size()) < cfg.n_context_min + 1)
            throw DataStageMismatch("run_stage: day " + std::to_string(day.day_id) + " has " +
                                    std::to_string(day.quotes.size()) + " quotes, need >= " +
                                    std::to_string(cfg.n_context_min + 1));
    }
}

// context cap for one day: leave at least one real quote for targets in
// real_to_real mode
int max_context(const DayRecord& day, TaskSource source, int cfg_max) {
    const int n = static_cast<int>(day.quotes.size());
    const int cap = source == TaskSource::real_to_real ? n - 1 : n;
    return std::min(cfg_max, cap);
}

double validation_nll(const model::ModelParams& params, const std::vector<Task>& tasks,
                      int n_threads) {
    std::vector<double> losses(tasks.size(), 0.0);
    std::vector<double> counts(tasks.size(), 0.0);
    parallel_for(static_cast<int>(tasks.size()), n_threads, [&](int i) {
        const Task& t = tasks[static_cast<std::size_t>(i)];
        std::vector<Coordinate> coords;
        coords.reserve(t.targets.size());
        for (const Quote& q : t.targets) coords.push_back(q.coord);
        const auto preds = model::predict(params, t.context, coords);
        losses[static_cast<std::size_t>(i)] = model::nll(preds, t.targets);
        counts[static_cast<std::size_t>(i)] = static_cast<double>(t.targets.size());
    });
    const double total = std::accumulate(losses.begin(), losses.end(), 0.0);
    const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
    return total / std::max(n, 1.0);
}

}  // namespace

std::string stage_name(Stage s) {
    switch (s) {
        case Stage::pretrain: return "pretrain";
        case Stage::finetune: return "finetune";
        case Stage::base: return "base";
    }
    return "base";
}

Stage stage_from_name(const std::string& name) {
    if (name == "pretrain") return Stage::pretrain;
    if (name == "finetune") return Stage::finetune;
    if (name == "base") return Stage::base;
    throw ConfigError("unknown training stage '" + name + "'");
}

TrainConfig TrainConfig::defaults_for(Stage s) {
    TrainConfig cfg;
    cfg.stage = s;
    switch (s) {
        case Stage::pretrain:
            cfg.lr = 5e-5;
            cfg.max_epochs = 200;
            break;
        case Stage::finetune:
            cfg.lr = 1e-6;
            cfg.max_epochs = 100;
            break;
        case Stage::base:
            cfg.lr = 5e-5;
            cfg.max_epochs = 300;
            break;
    }
    return cfg;
}

void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr, double weight_decay, double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != state.m.size() ||
        params.size() != state.v.size())
        throw ShapeMismatch("adamw_step: parameter, gradient and state sizes differ");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * (m_hat / (std::sqrt(v_hat) + eps) + weight_decay * params[i]);
    }
}

double clip_global_norm(std::span<double> grads, double max_norm) {
    double sq = 0.0;
    for (double g : grads) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (double& g : grads) g *= s;
    }
    return norm;
}

std::vector<Task> make_validation_tasks(const std::vector<DayRecord>& val_days,
                                        const TrainConfig& cfg, std::uint64_t seed) {
    if (val_days.empty()) throw DataStageMismatch("make_validation_tasks: no validation days");
    const TaskSource source = stage_source(cfg.stage);
    std::vector<Task> tasks;
    tasks.reserve(val_days.size());
    for (std::size_t i = 0; i < val_days.size(); ++i) {
        const DayRecord& day = val_days[i];
        check_day_for_stage(day, cfg);
        const int n_ctx = std::min(100, max_context(day, source, 100));
        const int n_tgt = source == TaskSource::real_to_synthetic ? cfg.stage1_targets
                                                                  : kAllRemaining;
        tasks.push_back(make_task(day, n_ctx, n_tgt, source,
                                  mix_seed(seed, kStreamVal, static_cast<std::uint64_t>(i))));
    }
    return tasks;
}

TrainResult run_stage(const std::vector<DayRecord>& train_days,
                      const std::vector<DayRecord>& val_days, model::ModelParams initial,
                      const TrainConfig& cfg) {
    if (train_days.empty()) throw DataStageMismatch("run_stage: no training days");
    if (!(cfg.lr > 0.0) || cfg.n_context_min < 1 || cfg.n_context_min > cfg.n_context_max)
        throw ConfigError("run_stage: lr must be positive and context range valid");
    for (const DayRecord& day : train_days) check_day_for_stage(day, cfg);

    const TaskSource source = stage_source(cfg.stage);
    const std::vector<Task> val_tasks = make_validation_tasks(val_days, cfg, cfg.seed);

    model::ModelParams params = std::move(initial);
    const std::size_t n_params = params.data.size();
    AdamWState opt_state(n_params);

    TrainResult result;
    result.init_val_nll = validation_nll(params, val_tasks, cfg.n_threads);
    result.best = params;
    result.best_val_nll = result.init_val_nll;
    result.best_epoch = 0;

    const int n_days = static_cast<int>(train_days.size());
    std::vector<int> order(static_cast<std::size_t>(n_days));
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> batch_grad(n_params);
    int epochs_since_best = 0;
    std::uint64_t task_counter = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng epoch_rng(mix_seed(cfg.seed, kStreamShuffle, static_cast<std::uint64_t>(epoch)));
        epoch_rng.shuffle(order);

        double epoch_loss = 0.0;
        double epoch_targets = 0.0;
        double norm_sum = 0.0;
        int n_steps = 0;

        for (int start = 0; start < n_days; start += cfg.batch_tasks) {
            const int b = std::min(cfg.batch_tasks, n_days - start);
            std::vector<Task> tasks;
            tasks.reserve(static_cast<std::size_t>(b));
            for (int i = 0; i < b; ++i) {
                const DayRecord& day = train_days[static_cast<std::size_t>(order[static_cast<std::size_t>(start + i)])];
                const int cap = max_context(day, source, cfg.n_context_max);
                const int n_ctx = epoch_rng.uniform_int(std::min(cfg.n_context_min, cap), cap);
                const int n_tgt = source == TaskSource::real_to_synthetic ? cfg.stage1_targets
                                                                          : kAllRemaining;
                tasks.push_back(make_task(day, n_ctx, n_tgt, source,
                                          mix_seed(cfg.seed, kStreamTask, task_counter++)));
            }

            std::vector<std::vector<double>> grads(tasks.size());
            std::vector<double> losses(tasks.size(), 0.0);
            parallel_for(static_cast<int>(tasks.size()), cfg.n_threads, [&](int i) {
                grads[static_cast<std::size_t>(i)].assign(n_params, 0.0);
                losses[static_cast<std::size_t>(i)] =
                    model::loss_and_grad(params, tasks[static_cast<std::size_t>(i)],
                                         grads[static_cast<std::size_t>(i)]);
            });

            // merge in task order, normalize by the batch's total target count
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            double total_targets = 0.0;
            for (std::size_t t = 0; t < tasks.size(); ++t) {
                const std::vector<double>& g = grads[t];
                for (std::size_t i = 0; i < n_params; ++i) batch_grad[i] += g[i];
                total_targets += static_cast<double>(tasks[t].targets.size());
                epoch_loss += losses[t];
            }
            const double inv = 1.0 / total_targets;
            for (double& g : batch_grad) g *= inv;
            epoch_targets += total_targets;

            norm_sum += clip_global_norm(batch_grad, cfg.grad_clip);
            n_steps += 1;
            adamw_step(params.data, batch_grad, opt_state, cfg.lr, cfg.weight_decay);
        }

        const double val = validation_nll(params, val_tasks, cfg.n_threads);
        const auto t1 = std::chrono::steady_clock::now();

        EpochLog entry;
        entry.epoch = epoch;
        entry.train_nll = epoch_loss / epoch_targets;
        entry.val_nll = val;
        entry.grad_norm = norm_sum / std::max(n_steps, 1);
        entry.wall_time_s = std::chrono::duration<double>(t1 - t0).count();
        result.log.push_back(entry);

        if (val < result.best_val_nll) {
            result.best_val_nll = val;
            result.best = params;
            result.best_epoch = epoch;
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if (epochs_since_best >= cfg.early_stop_patience) break;
        }
    }
    return result;
}

void write_training_log(const std::filesystem::path& path, const TrainResult& result) {
    std::ofstream out(path);
    if (!out) throw IoError("write_training_log: cannot open " + path.string());
    for (const EpochLog& e : result.log) {
        nlohmann::json j{{"epoch", e.epoch},
                         {"train_nll", e.train_nll},
                         {"val_nll", e.val_nll},
                         {"grad_norm", e.grad_norm},
                         {"wall_time_s", e.wall_time_s}};
        out << j.dump() << '\n';
    }
    if (!out) throw IoError("write_training_log: write failed for " + path.string());
}

}  // namespace volnp::train
