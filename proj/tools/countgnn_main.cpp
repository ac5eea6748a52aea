// Command-line driver: generate corpora, compute exact ground truth,
// train, evaluate, and predict single counts.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "countgnn/datagen.hpp"
#include "countgnn/exact.hpp"
#include "countgnn/graph.hpp"
#include "countgnn/model.hpp"
#include "countgnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitTimeout = 3;

struct CommonOpts {
    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 0; // 0: logical cores
    int verbosity = 1;

    int resolved_jobs() const {
        if (jobs > 0) return jobs;
        const unsigned hw = std::thread::hardware_concurrency();
        return hw == 0 ? 1 : static_cast<int>(hw);
    }
};

struct GenOpts {
    CommonOpts common;
    std::string out_dir;
    countgnn::datagen::GenSpec spec;
};

struct TruthOpts {
    CommonOpts common;
    std::string queries_dir;
    std::string graphs_dir;
    std::string out_path;
    std::uint64_t budget = countgnn::exact::kDefaultBudget;
};

struct ModelOpts {
    int layers = 3;
    int hidden_dim = 64;
    int match_dim = 64;
    double leaky_slope = 0.01;
    bool residual = false;
    bool exclude_backtrack = false;
    bool input_projection = false;
    std::string ablation = "full";
};

struct TrainOpts {
    CommonOpts common;
    std::string triples_path;
    std::string val_triples_path;
    double val_fraction = 0.1;
    std::string out_path;
    std::string history_path;
    ModelOpts model;
    countgnn::train::TrainConfig train;
};

struct EvalOpts {
    CommonOpts common;
    std::string triples_path;
    std::string model_path;
    std::string out_path;
    bool use_embeddings = false;
};

struct PredictOpts {
    CommonOpts common;
    std::string query_path;
    std::string graph_path;
    std::string model_path;
    bool exact = false;
    bool use_embeddings = false;
    std::uint64_t budget = countgnn::exact::kDefaultBudget;
};

// --config FILE supplies defaults below explicit flags: values load
// before parsing, so anything typed on the command line wins.
json preload_config(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config" && i + 1 < argc) path = argv[i + 1];
        else if (a.rfind("--config=", 0) == 0) path = a.substr(9);
    }
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw countgnn::SchemaError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw countgnn::SchemaError(std::string("malformed config: ") + e.what());
    }
    if (!j.is_object()) throw countgnn::SchemaError("config must be a JSON object");
    return j;
}

template <typename T>
void cfg_get(const json& j, const char* key, T& target) {
    if (j.contains(key)) target = j.at(key).get<T>();
}

void apply_common_config(const json& j, CommonOpts& c) {
    cfg_get(j, "seed", c.seed);
    cfg_get(j, "jobs", c.jobs);
    cfg_get(j, "verbosity", c.verbosity);
}

void apply_genspec_config(const json& j, countgnn::datagen::GenSpec& s) {
    cfg_get(j, "n_queries", s.n_queries);
    cfg_get(j, "n_graphs", s.n_graphs);
    cfg_get(j, "n_triples", s.n_triples);
    cfg_get(j, "query_nodes_min", s.query_nodes_min);
    cfg_get(j, "query_nodes_max", s.query_nodes_max);
    cfg_get(j, "query_edge_factor", s.query_edge_factor);
    cfg_get(j, "graph_nodes_min", s.graph_nodes_min);
    cfg_get(j, "graph_nodes_max", s.graph_nodes_max);
    cfg_get(j, "graph_edge_factor", s.graph_edge_factor);
    cfg_get(j, "num_node_labels", s.num_node_labels);
    cfg_get(j, "num_edge_labels", s.num_edge_labels);
    cfg_get(j, "allow_self_loops", s.allow_self_loops);
    cfg_get(j, "allow_parallel", s.allow_parallel);
    cfg_get(j, "max_count_budget", s.max_count_budget);
}

void apply_model_config(const json& j, ModelOpts& m) {
    cfg_get(j, "layers", m.layers);
    cfg_get(j, "hidden_dim", m.hidden_dim);
    cfg_get(j, "match_dim", m.match_dim);
    cfg_get(j, "leaky_slope", m.leaky_slope);
    cfg_get(j, "residual", m.residual);
    cfg_get(j, "exclude_backtrack", m.exclude_backtrack);
    cfg_get(j, "input_projection", m.input_projection);
    cfg_get(j, "ablation", m.ablation);
}

void apply_train_config(const json& j, countgnn::train::TrainConfig& t) {
    cfg_get(j, "lambda", t.film_weight);
    cfg_get(j, "mu", t.l2_weight);
    cfg_get(j, "lr", t.lr);
    cfg_get(j, "epochs", t.epochs);
    cfg_get(j, "batch_size", t.batch_size);
    cfg_get(j, "patience", t.patience);
    cfg_get(j, "max_steps", t.max_steps);
    cfg_get(j, "embeddings", t.use_embeddings);
}

void add_common_flags(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path,
                    "JSON file with defaults; explicit flags win");
    cmd->add_option("--seed", c.seed, "seed for all randomness");
    cmd->add_option("--jobs", c.jobs, "worker threads (0 = logical cores)");
    cmd->add_option("-v,--verbosity", c.verbosity, "0 quiet, 1 normal, 2 chatty");
}

void add_model_flags(CLI::App* cmd, ModelOpts& m) {
    cmd->add_option("--layers", m.layers, "message passing layers");
    cmd->add_option("--hidden-dim", m.hidden_dim, "hidden width d");
    cmd->add_option("--match-dim", m.match_dim, "match head width");
    cmd->add_option("--leaky-slope", m.leaky_slope, "LeakyReLU negative slope");
    cmd->add_flag("--residual", m.residual, "residual message passing");
    cmd->add_flag("--exclude-backtrack", m.exclude_backtrack,
                  "drop the reverse edge from preceding sets");
    cmd->add_flag("--input-projection", m.input_projection,
                  "linear lift of raw messages");
    cmd->add_option("--ablation", m.ablation,
                    "full | no_modulation | node_centric");
}

ordered_json common_to_json(const CommonOpts& c) {
    return ordered_json{{"config", c.config_path},
                        {"seed", c.seed},
                        {"jobs", c.resolved_jobs()},
                        {"verbosity", c.verbosity}};
}

void log_resolved(const CommonOpts& common, const std::string& cmd,
                  ordered_json resolved) {
    if (common.verbosity < 1) return;
    resolved["command"] = cmd;
    std::cerr << "[countgnn] resolved config: " << resolved.dump() << "\n";
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw countgnn::SchemaError("cannot open file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

countgnn::LabeledDigraph load_graph_file(const std::string& path) {
    return countgnn::from_json(slurp(path));
}

std::vector<countgnn::LabeledDigraph> load_graph_dir(const std::string& dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir))
        throw countgnn::SchemaError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::vector<countgnn::LabeledDigraph> out;
    out.reserve(files.size());
    for (const auto& f : files) out.push_back(load_graph_file(f.string()));
    return out;
}

countgnn::model::ModelConfig make_model_config(
    const ModelOpts& m, const std::vector<countgnn::Triple>& triples) {
    countgnn::model::ModelConfig cfg;
    cfg.layers = m.layers;
    cfg.hidden_dim = m.hidden_dim;
    cfg.match_dim = m.match_dim;
    cfg.leaky_slope = m.leaky_slope;
    cfg.residual = m.residual;
    cfg.exclude_backtrack = m.exclude_backtrack;
    cfg.input_projection = m.input_projection;
    cfg.ablation = countgnn::model::ablation_from_name(m.ablation);

    const auto& first = triples.front().query;
    cfg.vocab = first.vocab();
    cfg.node_feature_dim =
        first.has_node_features() ? first.node_features().cols : 0;
    cfg.edge_feature_dim =
        first.has_edge_features() ? first.edge_features().cols : 0;
    for (const auto& t : triples) {
        for (const auto* g : {&t.query, &t.graph}) {
            if (g->vocab() != cfg.vocab)
                throw countgnn::SchemaError(
                    "triples mix label vocabularies; one corpus per run");
            if (g->node_feature_dim() != cfg.node_dim() ||
                g->edge_feature_dim() != cfg.edge_dim())
                throw countgnn::SchemaError(
                    "triples mix feature widths; one corpus per run");
        }
    }
    return cfg;
}

// -------------------------------------------------------------------

int run_gen(const GenOpts& opts) {
    auto spec = opts.spec;
    spec.seed = opts.common.seed;
    ordered_json resolved = common_to_json(opts.common);
    resolved["out"] = opts.out_dir;
    resolved["genspec"] = json::parse(countgnn::datagen::genspec_to_json(spec));
    log_resolved(opts.common, "gen", std::move(resolved));

    auto corpus = countgnn::datagen::generate_corpus(spec, opts.common.resolved_jobs());
    countgnn::datagen::write_corpus(corpus, opts.out_dir);
    if (opts.common.verbosity >= 1) {
        std::cerr << "[countgnn] gen: " << corpus.queries.size() << " queries, "
                  << corpus.graphs.size() << " graphs, " << corpus.triples.size()
                  << " triples (" << corpus.dropped_pairs << " dropped";
        if (corpus.edge_factor_retries > 0)
            std::cerr << ", " << corpus.edge_factor_retries
                      << " edge-factor retries";
        std::cerr << ") -> " << opts.out_dir << "\n";
    }
    return kExitOk;
}

int run_truth(const TruthOpts& opts) {
    ordered_json resolved = common_to_json(opts.common);
    resolved["queries"] = opts.queries_dir;
    resolved["graphs"] = opts.graphs_dir;
    resolved["out"] = opts.out_path;
    resolved["budget"] = opts.budget;
    log_resolved(opts.common, "truth", std::move(resolved));

    auto queries = load_graph_dir(opts.queries_dir);
    auto graphs = load_graph_dir(opts.graphs_dir);
    if (queries.empty() || graphs.empty())
        throw CLI::ValidationError("truth", "need at least one query and one graph");

    int dropped = 0;
    auto triples = countgnn::datagen::make_triples(
        queries, graphs, opts.budget, opts.common.resolved_jobs(), &dropped);
    countgnn::save_triples(triples, opts.out_path);
    if (opts.common.verbosity >= 1)
        std::cerr << "[countgnn] truth: labeled " << triples.size() << " pairs ("
                  << dropped << " dropped on budget) -> " << opts.out_path << "\n";
    return kExitOk;
}

int run_train(const TrainOpts& opts) {
    ordered_json resolved = common_to_json(opts.common);
    resolved["triples"] = opts.triples_path;
    resolved["val_triples"] = opts.val_triples_path;
    resolved["val_fraction"] = opts.val_fraction;
    resolved["out"] = opts.out_path;
    resolved["history"] = opts.history_path;
    resolved["model"] =
        ordered_json{{"layers", opts.model.layers},
                     {"hidden_dim", opts.model.hidden_dim},
                     {"match_dim", opts.model.match_dim},
                     {"leaky_slope", opts.model.leaky_slope},
                     {"residual", opts.model.residual},
                     {"exclude_backtrack", opts.model.exclude_backtrack},
                     {"input_projection", opts.model.input_projection},
                     {"ablation", opts.model.ablation}};
    resolved["train"] = ordered_json{{"lambda", opts.train.film_weight},
                                     {"mu", opts.train.l2_weight},
                                     {"lr", opts.train.lr},
                                     {"epochs", opts.train.epochs},
                                     {"batch_size", opts.train.batch_size},
                                     {"patience", opts.train.patience},
                                     {"max_steps", opts.train.max_steps},
                                     {"embeddings", opts.train.use_embeddings}};
    log_resolved(opts.common, "train", std::move(resolved));

    auto triples = countgnn::load_triples(opts.triples_path);
    if (triples.empty())
        throw CLI::ValidationError("train", "triple file is empty");

    std::vector<countgnn::Triple> train_set, val_set;
    if (!opts.val_triples_path.empty()) {
        train_set = std::move(triples);
        val_set = countgnn::load_triples(opts.val_triples_path);
    } else if (opts.val_fraction > 0.0 && triples.size() > 1) {
        auto [tr, va, te] = countgnn::datagen::split(
            triples, 1.0 - opts.val_fraction, opts.val_fraction, 0.0,
            opts.common.seed);
        train_set = std::move(tr);
        val_set = std::move(va);
    } else {
        train_set = std::move(triples);
    }

    auto tc = opts.train;
    tc.seed = opts.common.seed;
    auto cfg = make_model_config(opts.model, train_set);
    auto params = countgnn::model::init_params(cfg, opts.common.seed);
    auto result = countgnn::train::fit(train_set, val_set, params, tc);
    countgnn::model::save_checkpoint(result.best_params, opts.out_path);
    const std::string history_path = opts.history_path.empty()
                                         ? opts.out_path + ".history.csv"
                                         : opts.history_path;
    countgnn::train::save_history(result.history, history_path);
    if (opts.common.verbosity >= 1)
        std::cerr << "[countgnn] train: " << result.steps << " steps, best val MAE "
                  << result.best_val_mae << " at epoch " << result.best_epoch
                  << " -> " << opts.out_path << "\n";
    return kExitOk;
}

int run_eval(const EvalOpts& opts) {
    ordered_json resolved = common_to_json(opts.common);
    resolved["triples"] = opts.triples_path;
    resolved["model"] = opts.model_path;
    resolved["out"] = opts.out_path;
    resolved["embeddings"] = opts.use_embeddings;
    log_resolved(opts.common, "eval", std::move(resolved));

    auto triples = countgnn::load_triples(opts.triples_path);
    if (triples.empty())
        throw CLI::ValidationError("eval", "triple file is empty");
    auto params = countgnn::model::load_checkpoint(opts.model_path);
    countgnn::train::TrainConfig tc;
    tc.use_embeddings = opts.use_embeddings;
    auto metrics = countgnn::train::evaluate(params, triples, tc,
                                             opts.common.resolved_jobs());
    countgnn::train::save_metrics(metrics, opts.out_path);
    if (opts.common.verbosity >= 1)
        std::cerr << "[countgnn] eval: " << countgnn::train::metrics_to_json(metrics)
                  << " -> " << opts.out_path << "\n";
    return kExitOk;
}

int run_predict(const PredictOpts& opts) {
    ordered_json resolved = common_to_json(opts.common);
    resolved["query"] = opts.query_path;
    resolved["graph"] = opts.graph_path;
    resolved["model"] = opts.model_path;
    resolved["exact"] = opts.exact;
    resolved["embeddings"] = opts.use_embeddings;
    log_resolved(opts.common, "predict", std::move(resolved));

    auto q = load_graph_file(opts.query_path);
    auto g = load_graph_file(opts.graph_path);
    if (opts.exact) {
        auto r = countgnn::exact::count_subgraphs(q, g, opts.budget);
        std::printf("%lld\n", static_cast<long long>(
                                  opts.use_embeddings ? r.embeddings : r.subgraphs));
        return kExitOk;
    }
    auto params = countgnn::model::load_checkpoint(opts.model_path);
    std::printf("%.17g\n", countgnn::model::predict_count(q, g, params));
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"subgraph isomorphism counting: exact backtracking and an "
                 "edge-centric message passing estimator"};
    app.require_subcommand(1);

    GenOpts gen;
    TruthOpts truth;
    TrainOpts train;
    EvalOpts eval;
    PredictOpts predict;

    try {
        const json file_cfg = preload_config(argc, argv);
        apply_common_config(file_cfg, gen.common);
        apply_common_config(file_cfg, truth.common);
        apply_common_config(file_cfg, train.common);
        apply_common_config(file_cfg, eval.common);
        apply_common_config(file_cfg, predict.common);
        apply_genspec_config(file_cfg, gen.spec);
        apply_model_config(file_cfg, train.model);
        apply_train_config(file_cfg, train.train);

        auto* cmd_gen = app.add_subcommand(
            "gen", "generate a labeled corpus of queries, graphs and triples");
        add_common_flags(cmd_gen, gen.common);
        cmd_gen->add_option("--out", gen.out_dir, "output directory")->required();
        cmd_gen->add_option("--n-queries", gen.spec.n_queries, "query count");
        cmd_gen->add_option("--n-graphs", gen.spec.n_graphs, "graph count");
        cmd_gen->add_option("--n-triples", gen.spec.n_triples,
                            "pairs sampled from the coupling (0 = all)");
        cmd_gen->add_option("--query-nodes-min", gen.spec.query_nodes_min);
        cmd_gen->add_option("--query-nodes-max", gen.spec.query_nodes_max);
        cmd_gen->add_option("--query-edge-factor", gen.spec.query_edge_factor);
        cmd_gen->add_option("--graph-nodes-min", gen.spec.graph_nodes_min);
        cmd_gen->add_option("--graph-nodes-max", gen.spec.graph_nodes_max);
        cmd_gen->add_option("--graph-edge-factor", gen.spec.graph_edge_factor);
        cmd_gen->add_option("--num-node-labels", gen.spec.num_node_labels);
        cmd_gen->add_option("--num-edge-labels", gen.spec.num_edge_labels);
        cmd_gen->add_flag("--allow-self-loops", gen.spec.allow_self_loops);
        cmd_gen->add_flag("--allow-parallel", gen.spec.allow_parallel);
        cmd_gen->add_option("--budget", gen.spec.max_count_budget,
                            "backtracking step cap per pair");

        auto* cmd_truth = app.add_subcommand(
            "truth", "label existing query/graph pairs with exact counts");
        add_common_flags(cmd_truth, truth.common);
        cmd_truth->add_option("--queries", truth.queries_dir, "directory of query JSON files")
            ->required();
        cmd_truth->add_option("--graphs", truth.graphs_dir, "directory of graph JSON files")
            ->required();
        cmd_truth->add_option("--out", truth.out_path, "output triples.jsonl")
            ->required();
        cmd_truth->add_option("--budget", truth.budget);

        auto* cmd_train =
            app.add_subcommand("train", "fit the neural counter on a triple file");
        add_common_flags(cmd_train, train.common);
        add_model_flags(cmd_train, train.model);
        cmd_train->add_option("--triples", train.triples_path, "training triples")
            ->required();
        cmd_train->add_option("--val-triples", train.val_triples_path,
                              "separate validation triples");
        cmd_train->add_option("--val-fraction", train.val_fraction,
                              "validation share when --val-triples is absent");
        cmd_train->add_option("--out", train.out_path, "checkpoint path")
            ->required();
        cmd_train->add_option("--history", train.history_path,
                              "training history CSV (default <out>.history.csv)");
        cmd_train->add_option("--lambda", train.train.film_weight,
                              "FiLM regularizer weight");
        cmd_train->add_option("--mu", train.train.l2_weight, "L2 weight");
        cmd_train->add_option("--lr", train.train.lr, "learning rate");
        cmd_train->add_option("--epochs", train.train.epochs);
        cmd_train->add_option("--batch-size", train.train.batch_size);
        cmd_train->add_option("--patience", train.train.patience,
                              "early stopping patience in epochs");
        cmd_train->add_option("--max-steps", train.train.max_steps,
                              "optimizer step cap (0 = none)");
        cmd_train->add_flag("--embeddings", train.train.use_embeddings,
                            "train on embedding counts instead of subgraphs");

        auto* cmd_eval =
            app.add_subcommand("eval", "evaluate a checkpoint on a triple file");
        add_common_flags(cmd_eval, eval.common);
        cmd_eval->add_option("--triples", eval.triples_path)->required();
        cmd_eval->add_option("--model", eval.model_path)->required();
        cmd_eval->add_option("--out", eval.out_path, "metrics JSON path")
            ->required();
        cmd_eval->add_flag("--embeddings", eval.use_embeddings);

        auto* cmd_predict = app.add_subcommand(
            "predict", "print one count for a (query, graph) pair");
        add_common_flags(cmd_predict, predict.common);
        cmd_predict->add_option("--query", predict.query_path)->required();
        cmd_predict->add_option("--graph", predict.graph_path)->required();
        cmd_predict->add_option("--model", predict.model_path,
                                "checkpoint for the neural estimate");
        cmd_predict->add_flag("--exact", predict.exact,
                              "exact backtracking count");
        cmd_predict->add_flag("--embeddings", predict.use_embeddings,
                              "print embeddings instead of subgraphs (--exact)");
        cmd_predict->add_option("--budget", predict.budget);

        app.parse(argc, argv);

        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_truth->parsed()) return run_truth(truth);
        if (cmd_train->parsed()) return run_train(train);
        if (cmd_eval->parsed()) return run_eval(eval);
        if (cmd_predict->parsed()) {
            if (!predict.exact && predict.model_path.empty())
                throw CLI::ValidationError("predict",
                                           "needs --model or --exact");
            return run_predict(predict);
        }
        return kExitUsage;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    } catch (const countgnn::BudgetError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTimeout;
    } catch (const countgnn::SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const countgnn::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
