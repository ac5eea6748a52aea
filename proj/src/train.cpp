#include "countgnn/train.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "countgnn/rng.hpp"

namespace countgnn::train {

using ad::Tape;
using ad::Tensor;

ad::Tensor loss(Tape& tape, std::span<const Triple> batch,
                const model::ModelParams& params, const TrainConfig& cfg) {
    if (batch.empty()) throw Error("loss: empty batch");
    std::vector<Tensor> abs_errors;
    abs_errors.reserve(batch.size());
    std::vector<Tensor> film_terms;
    for (const auto& t : batch) {
        model::ForwardCapture capture;
        Tensor pred = model::predict_count_t(tape, t.query, t.graph, params,
                                             &capture);
        Tensor truth = Tensor::scalar(
            static_cast<double>(t.target(cfg.use_embeddings)));
        abs_errors.push_back(tape.abs(tape.sub(pred, truth)));
        if (cfg.film_weight > 0.0) {
            for (const auto& [gamma, beta] : capture.film_factors) {
                film_terms.push_back(tape.sum_squares(gamma));
                film_terms.push_back(tape.sum_squares(beta));
            }
        }
    }
    Tensor total = tape.scale(tape.sum_rows(abs_errors),
                              1.0 / static_cast<double>(batch.size()));
    if (cfg.film_weight > 0.0 && !film_terms.empty())
        total = tape.add(total,
                         tape.scale(tape.sum_rows(film_terms), cfg.film_weight));
    if (cfg.l2_weight > 0.0) {
        std::vector<Tensor> sq;
        for (const auto& p : params.all()) sq.push_back(tape.sum_squares(p));
        total = tape.add(total, tape.scale(tape.sum_rows(sq), cfg.l2_weight));
    }
    return total;
}

namespace {

class Adam {
public:
    Adam(std::vector<Tensor> params, const TrainConfig& cfg)
        : params_(std::move(params)), lr_(cfg.lr), beta1_(cfg.adam_beta1),
          beta2_(cfg.adam_beta2), eps_(cfg.adam_eps) {
        for (const auto& p : params_) {
            m_.emplace_back(p.size(), 0.0);
            v_.emplace_back(p.size(), 0.0);
        }
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            auto& value = params_[pi].value();
            const auto& grad = params_[pi].grad();
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (std::size_t i = 0; i < value.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * grad[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * grad[i] * grad[i];
                value[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
            }
        }
    }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
};

} // namespace

FitResult fit(const std::vector<Triple>& train_set,
              const std::vector<Triple>& val_set,
              const model::ModelParams& params, const TrainConfig& cfg) {
    if (train_set.empty()) throw Error("fit: empty training set");
    if (cfg.lr < 0.0 || cfg.batch_size < 1) throw Error("fit: bad config");

    FitResult result;
    model::ModelParams work = params.clone();
    if (cfg.warm_start_head && work.head_bias.value()[0] == 0.0) {
        // fresh head: start every prediction at the median count. A random
        // head weight on top of sum-pooled representations swings the
        // logit by orders of magnitude, and logits pushed under the output
        // ReLU stop learning for good.
        std::vector<double> targets;
        targets.reserve(train_set.size());
        for (const auto& t : train_set)
            targets.push_back(static_cast<double>(t.target(cfg.use_embeddings)));
        std::sort(targets.begin(), targets.end());
        const std::size_t n = targets.size();
        const double median = n % 2 == 1
                                  ? targets[n / 2]
                                  : 0.5 * (targets[n / 2 - 1] + targets[n / 2]);
        work.head_bias.value()[0] = std::max(1.0, median);
        std::fill(work.head_weight.value().begin(),
                  work.head_weight.value().end(), 0.0);
    }
    Adam adam(work.all(), cfg);
    Rng rng(cfg.seed);
    const std::vector<Triple>& probe = val_set.empty() ? train_set : val_set;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    int stale_epochs = 0;
    int stale_for_lr = 0;
    bool out_of_steps = false;
    for (int epoch = 0; epoch < cfg.epochs && !out_of_steps; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double loss_sum = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += cfg.batch_size) {
            if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
                out_of_steps = true;
                break;
            }
            std::vector<Triple> batch;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + cfg.batch_size); ++i)
                batch.push_back(train_set[order[i]]);
            Tape tape;
            Tensor l = loss(tape, batch, work, cfg);
            const double lv = l.scalar_value();
            if (!std::isfinite(lv))
                throw Error("training diverged: non-finite loss at step " +
                            std::to_string(result.steps));
            work.zero_grads();
            tape.backward(l);
            if (cfg.grad_clip > 0.0) {
                double sq = 0.0;
                for (const auto& p : work.all())
                    for (double g : p.grad()) sq += g * g;
                const double norm = std::sqrt(sq);
                if (norm > cfg.grad_clip) {
                    const double s = cfg.grad_clip / norm;
                    for (const auto& p : work.all())
                        for (double& g : p.grad()) g *= s;
                }
            }
            adam.step();
            ++result.steps;
            loss_sum += lv;
            ++batches;
        }
        if (batches == 0) break;

        Metrics val = evaluate(work, probe, cfg);
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.history.push_back({epoch, loss_sum / batches, val.mae,
                                  val.q_error_mean, secs});

        if (val.mae < result.best_val_mae) {
            result.best_val_mae = val.mae;
            result.best_epoch = epoch;
            result.best_params = work.clone();
            stale_epochs = 0;
            stale_for_lr = 0;
        } else {
            if (++stale_epochs >= cfg.patience) break;
            if (cfg.lr_decay < 1.0 && ++stale_for_lr >= cfg.lr_patience) {
                adam.set_lr(std::max(cfg.min_lr, adam.lr() * cfg.lr_decay));
                stale_for_lr = 0;
            }
        }
    }
    if (result.best_epoch < 0) result.best_params = work.clone();
    return result;
}

double mae(std::span<const double> preds, std::span<const double> truths) {
    if (preds.size() != truths.size()) throw Error("mae: length mismatch");
    if (preds.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        s += std::fabs(preds[i] - truths[i]);
    return s / static_cast<double>(preds.size());
}

std::vector<double> q_error(std::span<const double> preds,
                            std::span<const double> truths) {
    if (preds.size() != truths.size()) throw Error("q_error: length mismatch");
    std::vector<double> out(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        // pseudocount: both sides clamp up to 1
        const double p = std::max(preds[i], 1.0);
        const double t = std::max(truths[i], 1.0);
        out[i] = std::max(p / t, t / p);
    }
    return out;
}

namespace {

Metrics metrics_from(std::vector<double> preds, std::vector<double> truths,
                     double seconds) {
    Metrics m;
    m.n_triples = static_cast<int>(preds.size());
    m.inference_time_s = seconds;
    m.per_triple_abs_err.resize(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i)
        m.per_triple_abs_err[i] = std::fabs(preds[i] - truths[i]);
    m.mae = mae(preds, truths);
    m.per_triple_q_error = q_error(preds, truths);
    if (!m.per_triple_q_error.empty()) {
        m.q_error_mean =
            std::accumulate(m.per_triple_q_error.begin(),
                            m.per_triple_q_error.end(), 0.0) /
            static_cast<double>(m.per_triple_q_error.size());
        std::vector<double> sorted = m.per_triple_q_error;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t n = sorted.size();
        m.q_error_median = n % 2 == 1
                               ? sorted[n / 2]
                               : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    }
    return m;
}

} // namespace

Metrics evaluate_with(const std::function<double(const Triple&)>& predictor,
                      const std::vector<Triple>& triples, bool use_embeddings,
                      int jobs) {
    std::vector<double> preds(triples.size(), 0.0);
    const auto t0 = std::chrono::steady_clock::now();
    if (jobs <= 1 || triples.size() < 2) {
        for (std::size_t i = 0; i < triples.size(); ++i)
            preds[i] = predictor(triples[i]);
    } else {
        const int n_threads = std::min<int>(jobs, static_cast<int>(triples.size()));
        std::vector<std::thread> pool;
        std::atomic<std::size_t> cursor{0};
        for (int w = 0; w < n_threads; ++w)
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = cursor.fetch_add(1);
                    if (i >= triples.size()) return;
                    preds[i] = predictor(triples[i]);
                }
            });
        for (auto& th : pool) th.join();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::vector<double> truths(triples.size());
    for (std::size_t i = 0; i < triples.size(); ++i)
        truths[i] = static_cast<double>(triples[i].target(use_embeddings));
    return metrics_from(std::move(preds), std::move(truths), secs);
}

Metrics evaluate(const model::ModelParams& params,
                 const std::vector<Triple>& triples, const TrainConfig& cfg,
                 int jobs) {
    return evaluate_with(
        [&params](const Triple& t) {
            return model::predict_count(t.query, t.graph, params);
        },
        triples, cfg.use_embeddings, jobs);
}

MeanBaseline baseline_mean(const std::vector<Triple>& train_set,
                           bool use_embeddings) {
    if (train_set.empty()) throw Error("baseline_mean: empty training set");
    double s = 0.0;
    for (const auto& t : train_set)
        s += static_cast<double>(t.target(use_embeddings));
    return MeanBaseline{s / static_cast<double>(train_set.size())};
}

double mean_film_norm(const model::ModelParams& params,
                      const std::vector<Triple>& probes) {
    double total = 0.0;
    std::size_t edges = 0;
    for (const auto& t : probes) {
        Tape tape;
        model::ForwardCapture capture;
        model::predict_count_t(tape, t.query, t.graph, params, &capture);
        for (const auto& [gamma, beta] : capture.film_factors) {
            for (double x : gamma.value()) total += x * x;
            for (double x : beta.value()) total += x * x;
            ++edges;
        }
    }
    return edges == 0 ? 0.0 : total / static_cast<double>(edges);
}

std::string metrics_to_json(const Metrics& m) {
    nlohmann::ordered_json j;
    j["mae"] = m.mae;
    j["q_error_mean"] = m.q_error_mean;
    j["q_error_median"] = m.q_error_median;
    j["inference_time_s"] = m.inference_time_s;
    j["n_triples"] = m.n_triples;
    return j.dump();
}

void save_metrics(const Metrics& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write metrics: " + path);
    out << metrics_to_json(m) << '\n';
}

void save_history(const std::vector<EpochRecord>& history,
                  const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write history: " + path);
    out << "epoch,train_loss,val_mae,val_qerr,seconds\n";
    char buf[160];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.3f\n", r.epoch,
                      r.train_loss, r.val_mae, r.val_qerr, r.seconds);
        out << buf;
    }
}

} // namespace countgnn::train
