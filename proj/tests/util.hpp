#ifndef COUNTGNN_TESTS_UTIL_HPP
#define COUNTGNN_TESTS_UTIL_HPP

// Small random-graph helpers shared by the test binaries. Kept separate
// from the library's corpus generator so tests do not depend on the code
// they check.

#include <algorithm>
#include <numeric>
#include <vector>

#include "countgnn/graph.hpp"
#include "countgnn/rng.hpp"

namespace testutil {

inline countgnn::LabeledDigraph random_graph(countgnn::Rng& rng, int min_nodes,
                                             int max_nodes, double edge_factor,
                                             countgnn::LabelVocab vocab,
                                             bool allow_self_loops = false) {
    const int n = static_cast<int>(rng.uniform_int(min_nodes, max_nodes));
    std::vector<int> labels(n);
    for (auto& l : labels)
        l = static_cast<int>(rng.uniform(vocab.num_node_labels));
    std::vector<countgnn::EdgeRecord> cand;
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) {
            if (!allow_self_loops && u == v) continue;
            for (int c = 0; c < vocab.num_edge_labels; ++c)
                cand.push_back({u, v, c});
        }
    rng.shuffle(cand);
    const int m = std::min<int>(static_cast<int>(edge_factor * n + rng.uniform(2)),
                                static_cast<int>(cand.size()));
    std::vector<countgnn::EdgeRecord> edges(cand.begin(), cand.begin() + m);
    return countgnn::build_graph(std::move(labels), std::move(edges), vocab);
}

inline bool weakly_connected(const countgnn::LabeledDigraph& g) {
    const int n = g.num_nodes();
    if (n == 0) return true;
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : g.edges()) {
        adj[e.src].push_back(e.dst);
        adj[e.dst].push_back(e.src);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int cnt = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : adj[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++cnt;
                stack.push_back(w);
            }
    }
    return cnt == n;
}

inline countgnn::LabeledDigraph random_connected_graph(
    countgnn::Rng& rng, int min_nodes, int max_nodes, double edge_factor,
    countgnn::LabelVocab vocab) {
    for (int attempt = 0; attempt < 10000; ++attempt) {
        auto g = random_graph(rng, min_nodes, max_nodes, edge_factor, vocab);
        if (g.num_edges() >= 1 && weakly_connected(g)) return g;
    }
    throw countgnn::Error("random_connected_graph: give up");
}

/// Applies a random node permutation and shuffles edge order. Preserves
/// explicit feature matrices by moving rows along.
inline countgnn::LabeledDigraph permute_graph(const countgnn::LabeledDigraph& g,
                                              countgnn::Rng& rng) {
    const int n = g.num_nodes();
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);

    std::vector<int> labels(n);
    for (int v = 0; v < n; ++v) labels[perm[v]] = g.node_label(v);

    std::vector<int> edge_order(g.num_edges());
    std::iota(edge_order.begin(), edge_order.end(), 0);
    rng.shuffle(edge_order);

    std::vector<countgnn::EdgeRecord> edges;
    edges.reserve(g.num_edges());
    for (int e : edge_order) {
        const auto& er = g.edge(e);
        edges.push_back({perm[er.src], perm[er.dst], er.label});
    }

    std::optional<countgnn::DenseMatrix> nf, ef;
    if (g.has_node_features()) {
        countgnn::DenseMatrix m;
        m.rows = n;
        m.cols = g.node_features().cols;
        m.data.resize(static_cast<std::size_t>(m.rows) * m.cols);
        for (int v = 0; v < n; ++v) {
            auto r = g.node_features().row(v);
            std::copy(r.begin(), r.end(),
                      m.data.begin() + static_cast<std::size_t>(perm[v]) * m.cols);
        }
        nf = std::move(m);
    }
    if (g.has_edge_features()) {
        countgnn::DenseMatrix m;
        m.rows = g.num_edges();
        m.cols = g.edge_features().cols;
        m.data.resize(static_cast<std::size_t>(m.rows) * m.cols);
        for (int i = 0; i < g.num_edges(); ++i) {
            auto r = g.edge_features().row(edge_order[i]);
            std::copy(r.begin(), r.end(),
                      m.data.begin() + static_cast<std::size_t>(i) * m.cols);
        }
        ef = std::move(m);
    }
    return countgnn::build_graph(std::move(labels), std::move(edges), g.vocab(),
                                 std::move(nf), std::move(ef));
}

/// Uniform-label undirected clique on n nodes, as doubled directed edges.
inline countgnn::LabeledDigraph complete_bidirected(int n) {
    std::vector<countgnn::EdgeRecord> und;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) und.push_back({u, v, 0});
    return countgnn::undirected_to_directed(std::vector<int>(n, 0), und, {1, 1});
}

} // namespace testutil

#endif
