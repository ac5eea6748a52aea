#include "countgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace countgnn {

using nlohmann::json;
using nlohmann::ordered_json;

void LabeledDigraph::node_feature_into(int v, std::vector<double>& out) const {
    if (node_features_) {
        auto r = node_features_->row(v);
        out.assign(r.begin(), r.end());
    } else {
        out.assign(vocab_.num_node_labels, 0.0);
        out[node_labels_[v]] = 1.0;
    }
}

void LabeledDigraph::edge_feature_into(int e, std::vector<double>& out) const {
    if (edge_features_) {
        auto r = edge_features_->row(e);
        out.assign(r.begin(), r.end());
    } else {
        out.assign(vocab_.num_edge_labels, 0.0);
        out[edges_[e].label] = 1.0;
    }
}

LabeledDigraph build_graph(std::vector<int> node_labels,
                           std::vector<EdgeRecord> edges, LabelVocab vocab,
                           std::optional<DenseMatrix> node_features,
                           std::optional<DenseMatrix> edge_features) {
    const int n = static_cast<int>(node_labels.size());
    if (vocab.num_node_labels < 1 || vocab.num_edge_labels < 1)
        throw VocabError("label vocabulary sizes must be >= 1");
    for (int v = 0; v < n; ++v) {
        if (node_labels[v] < 0 || node_labels[v] >= vocab.num_node_labels)
            throw VocabError("node label " + std::to_string(node_labels[v]) +
                             " out of range [0," +
                             std::to_string(vocab.num_node_labels) + ")");
    }
    for (const auto& e : edges) {
        if (e.src < 0 || e.src >= n || e.dst < 0 || e.dst >= n)
            throw StructureError("edge endpoint <" + std::to_string(e.src) + "," +
                                 std::to_string(e.dst) + "> outside 0.." +
                                 std::to_string(n - 1));
        if (e.label < 0 || e.label >= vocab.num_edge_labels)
            throw VocabError("edge label " + std::to_string(e.label) +
                             " out of range [0," +
                             std::to_string(vocab.num_edge_labels) + ")");
    }
    if (node_features) {
        if (node_features->rows != n ||
            static_cast<int>(node_features->data.size()) !=
                node_features->rows * node_features->cols)
            throw ShapeError("node feature matrix must be |V| x d");
    }
    if (edge_features) {
        if (edge_features->rows != static_cast<int>(edges.size()) ||
            static_cast<int>(edge_features->data.size()) !=
                edge_features->rows * edge_features->cols)
            throw ShapeError("edge feature matrix must be |E| x d");
    }

    LabeledDigraph g;
    g.node_labels_ = std::move(node_labels);
    g.edges_ = std::move(edges);
    g.vocab_ = vocab;
    g.node_features_ = std::move(node_features);
    g.edge_features_ = std::move(edge_features);
    g.in_index_.assign(n, {});
    g.out_degree_.assign(n, 0);
    for (int e = 0; e < static_cast<int>(g.edges_.size()); ++e) {
        g.in_index_[g.edges_[e].dst].push_back(e);
        ++g.out_degree_[g.edges_[e].src];
    }
    // edge ids are pushed in ascending order, so in_index is already sorted
    return g;
}

LabeledDigraph undirected_to_directed(std::vector<int> node_labels,
                                      const std::vector<EdgeRecord>& undirected_edges,
                                      LabelVocab vocab) {
    std::vector<EdgeRecord> directed;
    directed.reserve(undirected_edges.size() * 2);
    for (const auto& e : undirected_edges) {
        directed.push_back({e.src, e.dst, e.label});
        directed.push_back({e.dst, e.src, e.label});
    }
    return build_graph(std::move(node_labels), std::move(directed), vocab);
}

std::vector<int> preceding_edges(const LabeledDigraph& g, int edge_id,
                                 bool exclude_backtrack) {
    if (edge_id < 0 || edge_id >= g.num_edges())
        throw StructureError("invalid edge id " + std::to_string(edge_id));
    const auto& e = g.edge(edge_id);
    const auto& in = g.in_index(e.src);
    if (!exclude_backtrack) return in;
    std::vector<int> out;
    out.reserve(in.size());
    for (int f : in) {
        if (g.edge(f).src == e.dst && g.edge(f).dst == e.src) continue;
        out.push_back(f);
    }
    return out;
}

namespace {

DenseMatrix matrix_from_json(const json& arr, const char* what) {
    if (!arr.is_array()) throw SchemaError(std::string(what) + " must be an array");
    DenseMatrix m;
    m.rows = static_cast<int>(arr.size());
    for (int r = 0; r < m.rows; ++r) {
        const auto& row = arr[r];
        if (!row.is_array())
            throw SchemaError(std::string(what) + " rows must be arrays");
        if (r == 0) m.cols = static_cast<int>(row.size());
        if (static_cast<int>(row.size()) != m.cols)
            throw SchemaError(std::string(what) + " rows must have equal length");
        for (const auto& x : row) {
            if (!x.is_number())
                throw SchemaError(std::string(what) + " entries must be numbers");
            m.data.push_back(x.get<double>());
        }
    }
    return m;
}

json matrix_to_json(const DenseMatrix& m) {
    json arr = json::array();
    for (int r = 0; r < m.rows; ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols; ++c)
            row.push_back(m.data[static_cast<std::size_t>(r) * m.cols + c]);
        arr.push_back(std::move(row));
    }
    return arr;
}

int require_int(const json& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("missing key \"") + key + "\"");
    const auto& v = j.at(key);
    if (!v.is_number_integer())
        throw SchemaError(std::string("\"") + key + "\" must be an integer");
    return v.get<int>();
}

LabeledDigraph graph_from_json_obj(const json& j) {
    if (!j.is_object()) throw SchemaError("graph must be a JSON object");
    if (!j.contains("directed") || !j.at("directed").is_boolean() ||
        !j.at("directed").get<bool>())
        throw SchemaError("graph requires \"directed\": true");
    LabelVocab vocab{require_int(j, "num_node_labels"), require_int(j, "num_edge_labels")};
    if (!j.contains("nodes") || !j.at("nodes").is_array())
        throw SchemaError("missing key \"nodes\"");
    if (!j.contains("edges") || !j.at("edges").is_array())
        throw SchemaError("missing key \"edges\"");

    const auto& jnodes = j.at("nodes");
    const int n = static_cast<int>(jnodes.size());
    std::vector<int> labels(n, -1);
    for (const auto& jn : jnodes) {
        int id = require_int(jn, "id");
        int label = require_int(jn, "label");
        if (id < 0 || id >= n || labels[id] != -1)
            throw SchemaError("node ids must be exactly 0..|V|-1 without repeats");
        labels[id] = label;
    }

    std::vector<EdgeRecord> edges;
    edges.reserve(j.at("edges").size());
    for (const auto& je : j.at("edges"))
        edges.push_back({require_int(je, "src"), require_int(je, "dst"),
                         require_int(je, "label")});

    std::optional<DenseMatrix> nf, ef;
    if (j.contains("node_features") && !j.at("node_features").is_null())
        nf = matrix_from_json(j.at("node_features"), "node_features");
    if (j.contains("edge_features") && !j.at("edge_features").is_null())
        ef = matrix_from_json(j.at("edge_features"), "edge_features");

    try {
        return build_graph(std::move(labels), std::move(edges), vocab,
                           std::move(nf), std::move(ef));
    } catch (const Error& e) {
        throw SchemaError(e.what());
    }
}

ordered_json graph_to_json_obj(const LabeledDigraph& g) {
    ordered_json j;
    j["directed"] = true;
    j["num_node_labels"] = g.vocab().num_node_labels;
    j["num_edge_labels"] = g.vocab().num_edge_labels;
    ordered_json nodes = ordered_json::array();
    for (int v = 0; v < g.num_nodes(); ++v)
        nodes.push_back(ordered_json{{"id", v}, {"label", g.node_label(v)}});
    j["nodes"] = std::move(nodes);
    ordered_json edges = ordered_json::array();
    for (const auto& e : g.edges())
        edges.push_back(
            ordered_json{{"src", e.src}, {"dst", e.dst}, {"label", e.label}});
    j["edges"] = std::move(edges);
    if (g.has_node_features()) j["node_features"] = matrix_to_json(g.node_features());
    if (g.has_edge_features()) j["edge_features"] = matrix_to_json(g.edge_features());
    return j;
}

} // namespace

std::string to_json(const LabeledDigraph& g) { return graph_to_json_obj(g).dump(); }

LabeledDigraph from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SchemaError(std::string("malformed JSON: ") + e.what());
    }
    return graph_from_json_obj(j);
}

std::vector<Triple> load_triples(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open triple file: " + path);
    const auto base = std::filesystem::path(path).parent_path();

    auto load_side = [&](const json& v) {
        if (v.is_string()) {
            auto p = std::filesystem::path(v.get<std::string>());
            if (p.is_relative()) p = base / p;
            std::ifstream gf(p);
            if (!gf) throw SchemaError("cannot open graph file: " + p.string());
            std::stringstream ss;
            ss << gf.rdbuf();
            return from_json(ss.str());
        }
        json copy = v;
        return graph_from_json_obj(copy);
    };

    std::vector<Triple> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw SchemaError("triple line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("query") || !j.contains("graph"))
            throw SchemaError("triple line " + std::to_string(lineno) +
                              ": needs \"query\" and \"graph\"");
        Triple t;
        t.query = load_side(j.at("query"));
        t.graph = load_side(j.at("graph"));
        t.subgraphs = j.value("subgraphs", std::int64_t{0});
        t.embeddings = j.value("embeddings", std::int64_t{0});
        t.automorphisms = j.value("automorphisms", std::int64_t{1});
        out.push_back(std::move(t));
    }
    return out;
}

void save_triples(const std::vector<Triple>& triples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write triple file: " + path);
    for (const auto& t : triples) {
        ordered_json j;
        j["query"] = graph_to_json_obj(t.query);
        j["graph"] = graph_to_json_obj(t.graph);
        j["subgraphs"] = t.subgraphs;
        j["embeddings"] = t.embeddings;
        j["automorphisms"] = t.automorphisms;
        out << j.dump() << '\n';
    }
}

} // namespace countgnn
