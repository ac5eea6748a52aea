#ifndef COUNTGNN_DATAGEN_HPP
#define COUNTGNN_DATAGEN_HPP

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

#include "countgnn/exact.hpp"
#include "countgnn/graph.hpp"
#include "countgnn/rng.hpp"

namespace countgnn::datagen {

/// Desk-scale corpus recipe. A fixed (spec, seed) regenerates the corpus
/// bit for bit.
struct GenSpec {
    int n_queries = 60;
    int n_graphs = 300;
    int query_nodes_min = 3;
    int query_nodes_max = 4;
    double query_edge_factor = 1.3;
    int graph_nodes_min = 8;
    int graph_nodes_max = 16;
    double graph_edge_factor = 8.0;
    int num_node_labels = 2;
    int num_edge_labels = 2;
    std::uint64_t seed = 0;
    bool allow_self_loops = false;
    bool allow_parallel = false; // duplicate (src,dst,label) triples
    std::uint64_t max_count_budget = exact::kDefaultBudget;
    /// Number of (query, graph) pairs sampled from the full coupling;
    /// 0 keeps the whole Cartesian product.
    int n_triples = 1000;

    LabelVocab vocab() const { return {num_node_labels, num_edge_labels}; }
};

/// Weakly connected labeled digraph with at least one edge; labels
/// uniform over the vocabulary; rejection-sampled until connected.
LabeledDigraph gen_query(const GenSpec& spec, Rng& rng);

/// Random labeled digraph with about edge_factor * n edges. By default
/// (src, dst, label) triples are distinct and self-loops are excluded.
LabeledDigraph gen_graph(const GenSpec& spec, Rng& rng);

/// Couples queries with graphs and labels each pair with the exact
/// counter. Pairs whose budget runs out are dropped (and counted in
/// *dropped when given).
std::vector<Triple> make_triples(const std::vector<LabeledDigraph>& queries,
                                 const std::vector<LabeledDigraph>& graphs,
                                 std::uint64_t budget, int jobs = 1,
                                 int* dropped = nullptr);

/// Deterministic disjoint exhaustive split. Sizes follow the fractions
/// exactly (largest remainder); every query id present in the input gets
/// at least one triple in train when capacity allows.
std::tuple<std::vector<Triple>, std::vector<Triple>, std::vector<Triple>>
split(const std::vector<Triple>& triples, double train_frac, double val_frac,
      double test_frac, std::uint64_t seed);

struct Corpus {
    GenSpec spec;
    std::vector<LabeledDigraph> queries;
    std::vector<LabeledDigraph> graphs;
    std::vector<Triple> triples;
    std::vector<std::pair<int, int>> pairs; // (query, graph) index per triple
    int dropped_pairs = 0;
    int edge_factor_retries = 0;
};

/// Full pipeline: generate queries and graphs, sample pairs, label them.
/// A corpus with zero count variance is regenerated with a higher graph
/// edge factor.
Corpus generate_corpus(const GenSpec& spec, int jobs = 1);

/// Writes queries/*.json, graphs/*.json, triples.jsonl and genspec.json.
void write_corpus(const Corpus& corpus, const std::string& out_dir);

std::string genspec_to_json(const GenSpec& spec);
GenSpec genspec_from_json(const std::string& text);

} // namespace countgnn::datagen

#endif
