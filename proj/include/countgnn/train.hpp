#ifndef COUNTGNN_TRAIN_HPP
#define COUNTGNN_TRAIN_HPP

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "countgnn/graph.hpp"
#include "countgnn/model.hpp"

namespace countgnn::train {

struct TrainConfig {
    double film_weight = 1e-4; // lambda, FiLM factor regularizer
    double l2_weight = 1e-5;   // mu
    double lr = 1e-3;
    int epochs = 100;
    int batch_size = 16;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int patience = 20;            // early stopping on validation MAE
    bool use_embeddings = false;  // train on embedding counts instead
    std::uint64_t max_steps = 0;  // optimizer step cap; 0 = no cap
    /// Before the first step, set a fresh (exactly zero) head bias to the
    /// median training count. The final ReLU passes no gradient below
    /// zero, so a head that starts dead on every triple never recovers;
    /// starting at the median keeps it live.
    bool warm_start_head = true;
    /// Global gradient-norm clip; 0 disables. Sum pooling over large
    /// input graphs makes early head gradients violent enough to push
    /// every logit under the output ReLU.
    double grad_clip = 5.0;
    /// Halve the learning rate when validation MAE has not improved for
    /// lr_patience epochs; 1.0 disables decay.
    double lr_decay = 0.5;
    int lr_patience = 8;
    double min_lr = 1e-5;
};

struct Metrics {
    double mae = 0.0;
    double q_error_mean = 0.0;
    double q_error_median = 0.0;
    double inference_time_s = 0.0;
    int n_triples = 0;
    std::vector<double> per_triple_abs_err;
    std::vector<double> per_triple_q_error;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_mae = 0.0;
    double val_qerr = 0.0;
    double seconds = 0.0;
};

struct FitResult {
    model::ModelParams best_params;
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_val_mae = std::numeric_limits<double>::infinity();
    std::uint64_t steps = 0;
};

/// Batch objective: mean absolute error of the predictions plus the
/// FiLM-factor regularizer (summed over every input-graph edge in the
/// batch) and an L2 penalty over all parameters. With both weights zero
/// this is exactly the batch MAE.
ad::Tensor loss(ad::Tape& tape, std::span<const Triple> batch,
                const model::ModelParams& params, const TrainConfig& cfg);

/// Adam on shuffled minibatches; per-epoch validation MAE with early
/// stopping; returns the best-validation snapshot. Deterministic under a
/// fixed seed. The caller's params are cloned, not mutated. Throws on a
/// non-finite loss.
FitResult fit(const std::vector<Triple>& train_set,
              const std::vector<Triple>& val_set,
              const model::ModelParams& params, const TrainConfig& cfg);

double mae(std::span<const double> preds, std::span<const double> truths);

/// Per-triple max(n/n_hat, n_hat/n) after clamping both to >= 1.
std::vector<double> q_error(std::span<const double> preds,
                            std::span<const double> truths);

/// Runs a predictor over all triples, timing the prediction loop.
Metrics evaluate_with(const std::function<double(const Triple&)>& predictor,
                      const std::vector<Triple>& triples, bool use_embeddings,
                      int jobs = 1);

/// Model inference metrics; never mutates params.
Metrics evaluate(const model::ModelParams& params,
                 const std::vector<Triple>& triples, const TrainConfig& cfg,
                 int jobs = 1);

/// Predicts the training-mean count for every input.
struct MeanBaseline {
    double value = 0.0;
    double predict(const Triple&) const { return value; }
};

MeanBaseline baseline_mean(const std::vector<Triple>& train_set,
                           bool use_embeddings = false);

/// Mean of ||gamma||^2 + ||beta||^2 over every input-graph edge of the
/// probe triples. Probes modulation strength after training.
double mean_film_norm(const model::ModelParams& params,
                      const std::vector<Triple>& probes);

void save_metrics(const Metrics& m, const std::string& path);
std::string metrics_to_json(const Metrics& m);
void save_history(const std::vector<EpochRecord>& history,
                  const std::string& path);

} // namespace countgnn::train

#endif
