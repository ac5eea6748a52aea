#include "countgnn/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "countgnn/rng.hpp"

namespace countgnn::model {

using ad::Tape;
using ad::Tensor;

std::string ablation_name(Ablation a) {
    switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoModulation: return "no_modulation";
    case Ablation::NodeCentric: return "node_centric";
    }
    throw Error("unknown ablation");
}

Ablation ablation_from_name(const std::string& name) {
    if (name == "full") return Ablation::Full;
    if (name == "no_modulation") return Ablation::NoModulation;
    if (name == "node_centric") return Ablation::NodeCentric;
    throw SchemaError("unknown ablation \"" + name + "\"");
}

// ---------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------

namespace {

Tensor init_matrix(Rng& rng, int rows, int cols, std::string name) {
    const double a = std::sqrt(6.0 / (rows + cols));
    std::vector<double> v(static_cast<std::size_t>(rows) * cols);
    for (auto& x : v) x = rng.uniform_real(-a, a);
    Tensor t = Tensor::matrix(rows, cols, std::move(v), true);
    t.set_name(std::move(name));
    return t;
}

Tensor init_row(Rng& rng, int n, std::string name) {
    // fan_out 1: the head weight acts as a 1 x n map
    const double a = std::sqrt(6.0 / (n + 1));
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform_real(-a, a);
    Tensor t = Tensor::vector(std::move(v), true);
    t.set_name(std::move(name));
    return t;
}

Tensor zero_vec(int n, std::string name) {
    Tensor t = Tensor::zeros(n, true);
    t.set_name(std::move(name));
    return t;
}

} // namespace

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
    if (cfg.layers < 1) throw Error("layer count must be >= 1");
    if (cfg.hidden_dim < 1 || cfg.match_dim < 1)
        throw Error("hidden and match dims must be >= 1");
    Rng rng(seed);
    ModelParams p;
    p.config = cfg;
    const int d = cfg.hidden_dim;
    const bool node_mode = cfg.ablation == Ablation::NodeCentric;
    const int d0 = node_mode ? cfg.node_dim() : cfg.message_dim();
    const int d_in = cfg.input_projection ? d : d0;

    auto make_side = [&](const std::string& side, std::vector<EdgeLayerParams>& edge,
                         std::vector<NodeLayerParams>& node, Tensor& proj_w,
                         Tensor& proj_b) {
        if (cfg.input_projection) {
            proj_w = init_matrix(rng, d, d0, side + "_proj/W");
            proj_b = zero_vec(d, side + "_proj/b");
        }
        for (int l = 0; l < cfg.layers; ++l) {
            const int in = l == 0 ? d_in : d;
            const std::string base = side + "_layer_" + std::to_string(l);
            if (node_mode) {
                NodeLayerParams lp;
                lp.lift_weight = init_matrix(rng, d, 3 * in, base + "/W1");
                lp.lift_bias = zero_vec(d, base + "/b1");
                lp.out_weight = init_matrix(rng, d, d, base + "/W2");
                lp.out_bias = zero_vec(d, base + "/b2");
                node.push_back(std::move(lp));
            } else {
                EdgeLayerParams lp;
                lp.self_weight = init_matrix(rng, d, in, base + "/W");
                lp.agg_weight = init_matrix(rng, d, in, base + "/U");
                lp.bias = zero_vec(d, base + "/b");
                edge.push_back(std::move(lp));
            }
        }
    };
    make_side("query", p.query_layers, p.query_node_layers, p.query_proj_weight,
              p.query_proj_bias);
    make_side("graph", p.graph_layers, p.graph_node_layers, p.graph_proj_weight,
              p.graph_proj_bias);

    p.query_pool = init_matrix(rng, d, d, "pool/Q");
    p.graph_pool = init_matrix(rng, d, d, "pool/G");

    if (cfg.ablation != Ablation::NoModulation) {
        p.film.scale_from_edge = init_matrix(rng, d, d, "film/W_gamma");
        p.film.scale_from_query = init_matrix(rng, d, d, "film/U_gamma");
        p.film.scale_bias = zero_vec(d, "film/b_gamma");
        p.film.shift_from_edge = init_matrix(rng, d, d, "film/W_beta");
        p.film.shift_from_query = init_matrix(rng, d, d, "film/U_beta");
        p.film.shift_bias = zero_vec(d, "film/b_beta");
    }

    p.match_weight = init_matrix(rng, cfg.match_dim, 4 * d, "match/W");
    p.match_bias = zero_vec(cfg.match_dim, "match/b");
    p.head_weight = init_row(rng, cfg.match_dim, "head/w");
    p.head_bias = zero_vec(1, "head/b");
    return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
    std::vector<std::pair<std::string, Tensor>> out;
    auto push = [&out](const Tensor& t) {
        if (t.defined()) out.emplace_back(t.name(), t);
    };
    push(query_proj_weight);
    push(query_proj_bias);
    for (const auto& l : query_layers) {
        push(l.self_weight);
        push(l.agg_weight);
        push(l.bias);
    }
    for (const auto& l : query_node_layers) {
        push(l.lift_weight);
        push(l.lift_bias);
        push(l.out_weight);
        push(l.out_bias);
    }
    push(graph_proj_weight);
    push(graph_proj_bias);
    for (const auto& l : graph_layers) {
        push(l.self_weight);
        push(l.agg_weight);
        push(l.bias);
    }
    for (const auto& l : graph_node_layers) {
        push(l.lift_weight);
        push(l.lift_bias);
        push(l.out_weight);
        push(l.out_bias);
    }
    push(query_pool);
    push(graph_pool);
    push(film.scale_from_edge);
    push(film.scale_from_query);
    push(film.scale_bias);
    push(film.shift_from_edge);
    push(film.shift_from_query);
    push(film.shift_bias);
    push(match_weight);
    push(match_bias);
    push(head_weight);
    push(head_bias);
    return out;
}

std::vector<Tensor> ModelParams::all() const {
    std::vector<Tensor> out;
    for (auto& [name, t] : named()) out.push_back(t);
    return out;
}

void ModelParams::zero_grads() const {
    for (const auto& t : all()) t.zero_grad();
}

ModelParams ModelParams::clone() const {
    ModelParams c;
    c.config = config;
    auto cp = [](const Tensor& t) {
        return t.defined() ? t.clone_detached() : Tensor();
    };
    for (const auto& l : query_layers)
        c.query_layers.push_back({cp(l.self_weight), cp(l.agg_weight), cp(l.bias)});
    for (const auto& l : graph_layers)
        c.graph_layers.push_back({cp(l.self_weight), cp(l.agg_weight), cp(l.bias)});
    for (const auto& l : query_node_layers)
        c.query_node_layers.push_back(
            {cp(l.lift_weight), cp(l.lift_bias), cp(l.out_weight), cp(l.out_bias)});
    for (const auto& l : graph_node_layers)
        c.graph_node_layers.push_back(
            {cp(l.lift_weight), cp(l.lift_bias), cp(l.out_weight), cp(l.out_bias)});
    c.query_proj_weight = cp(query_proj_weight);
    c.query_proj_bias = cp(query_proj_bias);
    c.graph_proj_weight = cp(graph_proj_weight);
    c.graph_proj_bias = cp(graph_proj_bias);
    c.query_pool = cp(query_pool);
    c.graph_pool = cp(graph_pool);
    c.film = {cp(film.scale_from_edge), cp(film.scale_from_query),
              cp(film.scale_bias),      cp(film.shift_from_edge),
              cp(film.shift_from_query), cp(film.shift_bias)};
    c.match_weight = cp(match_weight);
    c.match_bias = cp(match_bias);
    c.head_weight = cp(head_weight);
    c.head_bias = cp(head_bias);
    return c;
}

ModelParams strip_modulation(const ModelParams& params) {
    if (params.config.ablation == Ablation::NodeCentric)
        throw Error("strip_modulation expects an edge-centric model");
    ModelParams out = params.clone();
    out.config.ablation = Ablation::NoModulation;
    out.film = {};
    return out;
}

// ---------------------------------------------------------------------
// Forward pipeline
// ---------------------------------------------------------------------

namespace {

void note_margin(const Tensor& preact, ForwardCapture* capture) {
    if (!capture) return;
    for (double v : preact.value())
        capture->min_activation_margin =
            std::min(capture->min_activation_margin, std::fabs(v));
}

Tensor act(Tape& tape, const Tensor& preact, const ModelConfig& cfg,
           ForwardCapture* capture) {
    note_margin(preact, capture);
    return tape.leaky_relu(preact, cfg.leaky_slope);
}

void check_vocab(const LabeledDigraph& g, const ModelConfig& cfg) {
    if (g.vocab() != cfg.vocab)
        throw VocabError("graph vocabulary does not match the model config");
    if (g.node_feature_dim() != cfg.node_dim() ||
        g.edge_feature_dim() != cfg.edge_dim())
        throw ShapeError("graph feature dims do not match the model config");
}

} // namespace

StateTable init_edge_messages(const LabeledDigraph& g, const ModelConfig& cfg) {
    check_vocab(g, cfg);
    StateTable table;
    table.layer = 0;
    table.states.reserve(g.num_edges());
    std::vector<double> xu, xe, xv;
    for (int e = 0; e < g.num_edges(); ++e) {
        const auto& er = g.edge(e);
        g.node_feature_into(er.src, xu);
        g.edge_feature_into(e, xe);
        g.node_feature_into(er.dst, xv);
        std::vector<double> msg;
        msg.reserve(xu.size() + xe.size() + xv.size());
        msg.insert(msg.end(), xu.begin(), xu.end());
        msg.insert(msg.end(), xe.begin(), xe.end());
        msg.insert(msg.end(), xv.begin(), xv.end());
        table.states.push_back(Tensor::vector(std::move(msg)));
    }
    return table;
}

StateTable edge_layer(Tape& tape, const LabeledDigraph& g,
                      const StateTable& states, const EdgeLayerParams& layer,
                      const ModelConfig& cfg, ForwardCapture* capture) {
    if (static_cast<int>(states.states.size()) != g.num_edges())
        throw ShapeError("state table does not match the graph");
    StateTable next;
    next.layer = states.layer + 1;
    next.states.reserve(g.num_edges());
    const int in_dim = g.num_edges() > 0 ? states.states[0].size() : 0;
    Tensor zero_in = Tensor::zeros(in_dim);
    for (int e = 0; e < g.num_edges(); ++e) {
        const auto preds = preceding_edges(g, e, cfg.exclude_backtrack);
        Tensor agg;
        if (preds.empty()) {
            agg = zero_in; // empty preceding set pools to zero
        } else {
            std::vector<Tensor> rows;
            rows.reserve(preds.size());
            for (int f : preds) rows.push_back(states.states[f]);
            agg = tape.mean_rows(rows);
        }
        Tensor pre = tape.add(
            tape.add(tape.matvec(layer.self_weight, states.states[e]),
                     tape.matvec(layer.agg_weight, agg)),
            layer.bias);
        Tensor h = act(tape, pre, cfg, capture);
        if (cfg.residual && h.size() == states.states[e].size())
            h = tape.add(h, states.states[e]);
        next.states.push_back(std::move(h));
    }
    return next;
}

namespace {

StateTable init_node_states(const LabeledDigraph& g, const ModelConfig& cfg) {
    check_vocab(g, cfg);
    StateTable table;
    table.layer = 0;
    std::vector<double> x;
    for (int v = 0; v < g.num_nodes(); ++v) {
        g.node_feature_into(v, x);
        table.states.push_back(Tensor::vector(x));
    }
    return table;
}

StateTable node_layer(Tape& tape, const LabeledDigraph& g,
                      const StateTable& states, const NodeLayerParams& layer,
                      const ModelConfig& cfg, ForwardCapture* capture) {
    StateTable next;
    next.layer = states.layer + 1;
    const int in_dim = g.num_nodes() > 0 ? states.states[0].size() : 0;
    Tensor zero_in = Tensor::zeros(in_dim);
    std::vector<std::vector<int>> out_nbrs(g.num_nodes());
    for (const auto& e : g.edges()) out_nbrs[e.src].push_back(e.dst);
    for (int v = 0; v < g.num_nodes(); ++v) {
        std::vector<Tensor> ins, outs;
        for (int e : g.in_index(v)) ins.push_back(states.states[g.edge(e).src]);
        for (int w : out_nbrs[v]) outs.push_back(states.states[w]);
        Tensor mean_in = ins.empty() ? zero_in : tape.mean_rows(ins);
        Tensor mean_out = outs.empty() ? zero_in : tape.mean_rows(outs);
        Tensor z = tape.concat({states.states[v], mean_in, mean_out});
        Tensor t1 = act(tape,
                        tape.add(tape.matvec(layer.lift_weight, z), layer.lift_bias),
                        cfg, capture);
        Tensor h = act(tape,
                       tape.add(tape.matvec(layer.out_weight, t1), layer.out_bias),
                       cfg, capture);
        next.states.push_back(std::move(h));
    }
    return next;
}

Tensor apply_projection(Tape& tape, const Tensor& x, const Tensor& w,
                        const Tensor& b, const ModelConfig& cfg,
                        ForwardCapture* capture) {
    return act(tape, tape.add(tape.matvec(w, x), b), cfg, capture);
}

} // namespace

StateTable encode(Tape& tape, const LabeledDigraph& g, Side side,
                  const ModelParams& params, ForwardCapture* capture) {
    const auto& cfg = params.config;
    const bool node_mode = cfg.ablation == Ablation::NodeCentric;
    StateTable table =
        node_mode ? init_node_states(g, cfg) : init_edge_messages(g, cfg);
    if (cfg.input_projection) {
        const Tensor& w = side == Side::Query ? params.query_proj_weight
                                              : params.graph_proj_weight;
        const Tensor& b =
            side == Side::Query ? params.query_proj_bias : params.graph_proj_bias;
        for (auto& s : table.states)
            s = apply_projection(tape, s, w, b, cfg, capture);
    }
    if (node_mode) {
        const auto& layers = side == Side::Query ? params.query_node_layers
                                                 : params.graph_node_layers;
        for (const auto& l : layers)
            table = node_layer(tape, g, table, l, cfg, capture);
    } else {
        const auto& layers =
            side == Side::Query ? params.query_layers : params.graph_layers;
        for (const auto& l : layers)
            table = edge_layer(tape, g, table, l, cfg, capture);
    }
    return table;
}

Tensor query_readout(Tape& tape, const StateTable& states,
                     const ModelParams& params, ForwardCapture* capture) {
    if (states.states.empty())
        throw StructureError("query readout requires at least one edge");
    Tensor pooled = tape.sum_rows(states.states);
    return act(tape, tape.matvec(params.query_pool, pooled), params.config,
               capture);
}

std::pair<Tensor, Tensor> film_factors(Tape& tape, const Tensor& edge_state,
                                       const Tensor& query_state,
                                       const ModelParams& params,
                                       ForwardCapture* capture) {
    const auto& f = params.film;
    if (!f.scale_from_edge.defined())
        throw Error("model has no FiLM parameters");
    Tensor gamma = act(tape,
                       tape.add(tape.add(tape.matvec(f.scale_from_edge, edge_state),
                                         tape.matvec(f.scale_from_query, query_state)),
                                f.scale_bias),
                       params.config, capture);
    Tensor beta = act(tape,
                      tape.add(tape.add(tape.matvec(f.shift_from_edge, edge_state),
                                        tape.matvec(f.shift_from_query, query_state)),
                               f.shift_bias),
                      params.config, capture);
    return {gamma, beta};
}

Tensor modulate(Tape& tape, const Tensor& edge_state, const Tensor& gamma,
                const Tensor& beta) {
    Tensor ones = Tensor::vector(std::vector<double>(gamma.size(), 1.0));
    return tape.add(tape.hadamard(tape.add(gamma, ones), edge_state), beta);
}

Tensor graph_readout(Tape& tape, const std::vector<Tensor>& states,
                     const ModelParams& params, ForwardCapture* capture) {
    const int d = params.config.hidden_dim;
    Tensor pooled = states.empty() ? Tensor::zeros(d) : tape.sum_rows(states);
    return act(tape, tape.matvec(params.graph_pool, pooled), params.config,
               capture);
}

Tensor match(Tape& tape, const Tensor& query_vec, const Tensor& graph_vec,
             const ModelParams& params, ForwardCapture* capture) {
    Tensor diff = tape.sub(query_vec, graph_vec);
    Tensor prod = tape.hadamard(query_vec, graph_vec);
    Tensor joint = tape.concat({query_vec, graph_vec, diff, prod});
    return act(tape, tape.add(tape.matvec(params.match_weight, joint),
                              params.match_bias),
               params.config, capture);
}

Tensor predict_count_t(Tape& tape, const LabeledDigraph& q,
                       const LabeledDigraph& g, const ModelParams& params,
                       ForwardCapture* capture) {
    const auto& cfg = params.config;
    if (q.num_edges() == 0)
        throw StructureError("query must have at least one edge");

    StateTable q_states = encode(tape, q, Side::Query, params, capture);
    StateTable g_states = encode(tape, g, Side::Graph, params, capture);

    Tensor h_query;
    if (cfg.ablation == Ablation::NodeCentric) {
        Tensor pooled = tape.sum_rows(q_states.states);
        h_query = act(tape, tape.matvec(params.query_pool, pooled), cfg, capture);
    } else {
        h_query = query_readout(tape, q_states, params, capture);
    }

    std::vector<Tensor> pooled_states;
    pooled_states.reserve(g_states.states.size());
    if (cfg.ablation == Ablation::NoModulation) {
        pooled_states = g_states.states;
    } else {
        for (const auto& h : g_states.states) {
            auto [gamma, beta] = film_factors(tape, h, h_query, params, capture);
            if (capture) capture->film_factors.emplace_back(gamma, beta);
            pooled_states.push_back(modulate(tape, h, gamma, beta));
        }
    }
    Tensor h_graph = graph_readout(tape, pooled_states, params, capture);

    Tensor m = match(tape, h_query, h_graph, params, capture);
    Tensor logit = tape.add(tape.dot(params.head_weight, m), params.head_bias);
    note_margin(logit, capture);
    return tape.relu(logit);
}

double predict_count(const LabeledDigraph& q, const LabeledDigraph& g,
                     const ModelParams& params) {
    Tape tape;
    return predict_count_t(tape, q, g, params).scalar_value();
}

Tensor graph_embedding(Tape& tape, const LabeledDigraph& g,
                       const ModelParams& params) {
    StateTable states = encode(tape, g, Side::Graph, params);
    return graph_readout(tape, states.states, params);
}

// ---------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json config_to_json(const ModelConfig& cfg) {
    ordered_json j;
    j["layers"] = cfg.layers;
    j["hidden_dim"] = cfg.hidden_dim;
    j["match_dim"] = cfg.match_dim;
    j["leaky_slope"] = cfg.leaky_slope;
    j["residual"] = cfg.residual;
    j["exclude_backtrack"] = cfg.exclude_backtrack;
    j["input_projection"] = cfg.input_projection;
    j["ablation"] = ablation_name(cfg.ablation);
    j["num_node_labels"] = cfg.vocab.num_node_labels;
    j["num_edge_labels"] = cfg.vocab.num_edge_labels;
    j["node_feature_dim"] = cfg.node_feature_dim;
    j["edge_feature_dim"] = cfg.edge_feature_dim;
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig cfg;
    cfg.layers = j.at("layers").get<int>();
    cfg.hidden_dim = j.at("hidden_dim").get<int>();
    cfg.match_dim = j.at("match_dim").get<int>();
    cfg.leaky_slope = j.at("leaky_slope").get<double>();
    cfg.residual = j.at("residual").get<bool>();
    cfg.exclude_backtrack = j.at("exclude_backtrack").get<bool>();
    cfg.input_projection = j.at("input_projection").get<bool>();
    cfg.ablation = ablation_from_name(j.at("ablation").get<std::string>());
    cfg.vocab.num_node_labels = j.at("num_node_labels").get<int>();
    cfg.vocab.num_edge_labels = j.at("num_edge_labels").get<int>();
    cfg.node_feature_dim = j.at("node_feature_dim").get<int>();
    cfg.edge_feature_dim = j.at("edge_feature_dim").get<int>();
    return cfg;
}

} // namespace

std::string checkpoint_to_json(const ModelParams& params) {
    ordered_json j;
    j["config"] = config_to_json(params.config);
    // alphabetical tensor order keeps serialization deterministic
    auto named = params.named();
    std::sort(named.begin(), named.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    ordered_json jp = ordered_json::object();
    for (const auto& [name, t] : named) {
        ordered_json jt;
        if (t.is_matrix())
            jt["shape"] = std::vector<int>{t.rows(), t.cols()};
        else
            jt["shape"] = std::vector<int>{t.size()};
        jt["data"] = t.value();
        jp[name] = std::move(jt);
    }
    j["params"] = std::move(jp);
    return j.dump();
}

ModelParams checkpoint_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed checkpoint: ") + e.what());
    }
    if (!j.contains("config") || !j.contains("params"))
        throw SchemaError("checkpoint needs \"config\" and \"params\"");
    ModelConfig cfg = config_from_json(j.at("config"));
    // seed irrelevant: every tensor is overwritten below
    ModelParams p = init_params(cfg, 0);
    const auto& jp = j.at("params");
    for (auto& [name, t] : p.named()) {
        if (!jp.contains(name))
            throw SchemaError("checkpoint missing tensor \"" + name + "\"");
        const auto& jt = jp.at(name);
        auto shape = jt.at("shape").get<std::vector<int>>();
        auto data = jt.at("data").get<std::vector<double>>();
        bool shape_ok = t.is_matrix()
                            ? (shape.size() == 2 && shape[0] == t.rows() &&
                               shape[1] == t.cols())
                            : (shape.size() == 1 && shape[0] == t.size());
        if (!shape_ok || static_cast<int>(data.size()) != t.size())
            throw SchemaError("checkpoint tensor \"" + name + "\" has wrong shape");
        t.value() = std::move(data);
    }
    return p;
}

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write checkpoint: " + path);
    out << checkpoint_to_json(params) << '\n';
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

} // namespace countgnn::model
