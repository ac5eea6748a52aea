#ifndef COUNTGNN_GRAPH_HPP
#define COUNTGNN_GRAPH_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "countgnn/error.hpp"

namespace countgnn {

/// Label alphabet sizes shared by a corpus of graphs.
struct LabelVocab {
    int num_node_labels = 1;
    int num_edge_labels = 1;

    bool operator==(const LabelVocab&) const = default;
};

struct EdgeRecord {
    int src = 0;
    int dst = 0;
    int label = 0;

    bool operator==(const EdgeRecord&) const = default;
};

/// Dense row-major feature matrix.
struct DenseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    std::span<const double> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols,
                static_cast<std::size_t>(cols)};
    }

    bool operator==(const DenseMatrix&) const = default;
};

/// Immutable labeled directed multigraph. Node ids are dense 0..|V|-1.
/// Parallel edges and self-loops are permitted and counted as distinct.
class LabeledDigraph {
public:
    LabeledDigraph() = default;

    int num_nodes() const { return static_cast<int>(node_labels_.size()); }
    int num_edges() const { return static_cast<int>(edges_.size()); }

    int node_label(int v) const { return node_labels_[v]; }
    const std::vector<int>& node_labels() const { return node_labels_; }

    const EdgeRecord& edge(int e) const { return edges_[e]; }
    const std::vector<EdgeRecord>& edges() const { return edges_; }

    /// Edge ids whose destination is v, sorted ascending. A self-loop at
    /// v appears here.
    const std::vector<int>& in_index(int v) const { return in_index_[v]; }

    int in_degree(int v) const { return static_cast<int>(in_index_[v].size()); }
    int out_degree(int v) const { return out_degree_[v]; }

    const LabelVocab& vocab() const { return vocab_; }

    bool has_node_features() const { return node_features_.has_value(); }
    bool has_edge_features() const { return edge_features_.has_value(); }
    const DenseMatrix& node_features() const { return *node_features_; }
    const DenseMatrix& edge_features() const { return *edge_features_; }

    /// Feature width used by downstream encoders: explicit matrix width
    /// when present, otherwise one-hot of the label alphabet.
    int node_feature_dim() const {
        return node_features_ ? node_features_->cols : vocab_.num_node_labels;
    }
    int edge_feature_dim() const {
        return edge_features_ ? edge_features_->cols : vocab_.num_edge_labels;
    }

    /// Copies node v's feature row (or its one-hot) into `out`.
    void node_feature_into(int v, std::vector<double>& out) const;
    void edge_feature_into(int e, std::vector<double>& out) const;

    bool operator==(const LabeledDigraph&) const = default;

    friend LabeledDigraph build_graph(std::vector<int>, std::vector<EdgeRecord>,
                                      LabelVocab, std::optional<DenseMatrix>,
                                      std::optional<DenseMatrix>);

private:
    std::vector<int> node_labels_;
    std::vector<EdgeRecord> edges_;
    std::vector<std::vector<int>> in_index_;
    std::vector<int> out_degree_;
    LabelVocab vocab_;
    std::optional<DenseMatrix> node_features_;
    std::optional<DenseMatrix> edge_features_;
};

/// Validates and assembles a graph. Node v gets label node_labels[v].
/// Throws StructureError on dangling endpoints, VocabError on labels
/// outside the vocabulary, ShapeError on feature dimension mismatch.
LabeledDigraph build_graph(std::vector<int> node_labels,
                           std::vector<EdgeRecord> edges, LabelVocab vocab,
                           std::optional<DenseMatrix> node_features = std::nullopt,
                           std::optional<DenseMatrix> edge_features = std::nullopt);

/// Expands each undirected edge {u,v} into the directed pair <u,v>, <v,u>
/// with equal labels.
LabeledDigraph undirected_to_directed(std::vector<int> node_labels,
                                      const std::vector<EdgeRecord>& undirected_edges,
                                      LabelVocab vocab);

/// Edges feeding edge_id = <u,v>: all edges incident on u. With
/// exclude_backtrack, edges <v,u> are dropped (for a self-loop that
/// removes the edge itself).
std::vector<int> preceding_edges(const LabeledDigraph& g, int edge_id,
                                 bool exclude_backtrack = false);

/// Serialization. Round-trips are exact including feature values.
std::string to_json(const LabeledDigraph& g);
LabeledDigraph from_json(const std::string& text);

/// A (query, input graph, ground-truth count) record. Both count
/// conventions are kept so either can be trained on.
struct Triple {
    LabeledDigraph query;
    LabeledDigraph graph;
    std::int64_t subgraphs = 0;
    std::int64_t embeddings = 0;
    std::int64_t automorphisms = 1;

    std::int64_t target(bool use_embeddings = false) const {
        return use_embeddings ? embeddings : subgraphs;
    }
};

/// JSON-lines triple files. `base_dir` resolves graph path references.
std::vector<Triple> load_triples(const std::string& path);
void save_triples(const std::vector<Triple>& triples, const std::string& path);

} // namespace countgnn

#endif
