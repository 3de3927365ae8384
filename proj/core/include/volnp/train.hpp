#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "volnp/model.hpp"
#include "volnp/types.hpp"

namespace volnp::train {

enum class Stage { pretrain, finetune, base };

std::string stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct TrainConfig {
    Stage stage = Stage::base;
    double lr = 5e-5;
    int max_epochs = 300;
    int batch_tasks = 16;
    int n_context_min = 20;
    int n_context_max = 200;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    std::uint64_t seed = 0;
    int early_stop_patience = 20;
    int stage1_targets = 256;  // target draw per pre-training task
    int n_threads = 0;         // 0 = hardware concurrency

    // stage presets: pretrain lr 5e-5 / 200 epochs, finetune 1e-6 / 100,
    // base 5e-5 / 300
    static TrainConfig defaults_for(Stage s);
};

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;

    explicit AdamWState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

// Decoupled-weight-decay Adam update with bias-corrected moments.
void adamw_step(std::span<double> params, std::span<const double> grads, AdamWState& state,
                double lr, double weight_decay, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

// Scales grads so the global L2 norm is at most max_norm; returns the
// pre-clip norm.
double clip_global_norm(std::span<double> grads, double max_norm);

struct EpochLog {
    int epoch = 0;
    double train_nll = 0.0;  // mean per target point
    double val_nll = 0.0;
    double grad_norm = 0.0;  // mean pre-clip norm over the epoch's steps
    double wall_time_s = 0.0;
};

struct TrainResult {
    model::ModelParams best;
    double best_val_nll = 0.0;
    int best_epoch = 0;  // 0 = initial parameters were never improved upon
    double init_val_nll = 0.0;
    std::vector<EpochLog> log;
};

// One deterministic task per validation day, context size 100 (clamped to
// what the day can supply), targets drawn by the stage's source.
std::vector<Task> make_validation_tasks(const std::vector<DayRecord>& val_days,
                                        const TrainConfig& cfg, std::uint64_t seed);

// One training stage. Each epoch is a shuffled pass in which every training
// day seeds one batch-element task; batches accumulate summed task NLLs
// normalized by the total target count, clip the global gradient norm and
// take one AdamW step. Checkpoint selection is by best validation NLL with
// early stopping. Deterministic given (data, config, seed), independent of
// n_threads.
TrainResult run_stage(const std::vector<DayRecord>& train_days,
                      const std::vector<DayRecord>& val_days, model::ModelParams initial,
                      const TrainConfig& cfg);

// JSON-lines training log: {"epoch":..,"train_nll":..,"val_nll":..,
// "grad_norm":..,"wall_time_s":..}
void write_training_log(const std::filesystem::path& path, const TrainResult& result);

}  // namespace volnp::train
