#ifndef COUNTGNN_MODEL_HPP
#define COUNTGNN_MODEL_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "countgnn/graph.hpp"
#include "countgnn/tensor.hpp"

namespace countgnn::model {

/// Model variants. NoModulation drops the query-conditioned FiLM stage
/// and pools input-graph edges directly; NodeCentric swaps the
/// edge-centric encoder for a node-state GNN with a depth-2 MLP update.
enum class Ablation { Full, NoModulation, NodeCentric };

std::string ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct ModelConfig {
    int layers = 3;       // stacked message-passing layers
    int hidden_dim = 64;  // d, shared by all layers past the first
    int match_dim = 64;   // width of the match vector
    double leaky_slope = 0.01;
    bool residual = false;
    bool exclude_backtrack = false;
    bool input_projection = false; // optional linear lift of raw messages
    Ablation ablation = Ablation::Full;
    LabelVocab vocab;
    int node_feature_dim = 0; // 0: one-hot of node labels
    int edge_feature_dim = 0; // 0: one-hot of edge labels

    int node_dim() const {
        return node_feature_dim > 0 ? node_feature_dim : vocab.num_node_labels;
    }
    int edge_dim() const {
        return edge_feature_dim > 0 ? edge_feature_dim : vocab.num_edge_labels;
    }
    /// Initial edge message width: x_u || x_e || x_v.
    int message_dim() const { return 2 * node_dim() + edge_dim(); }
};

struct EdgeLayerParams {
    ad::Tensor self_weight;  // W
    ad::Tensor agg_weight;   // U, applied to the preceding-edge mean
    ad::Tensor bias;
};

struct NodeLayerParams {
    ad::Tensor lift_weight; // first MLP layer over state || mean_in || mean_out
    ad::Tensor lift_bias;
    ad::Tensor out_weight;  // second MLP layer
    ad::Tensor out_bias;
};

struct FilmParams {
    ad::Tensor scale_from_edge;  // W_gamma
    ad::Tensor scale_from_query; // U_gamma
    ad::Tensor scale_bias;       // b_gamma
    ad::Tensor shift_from_edge;  // W_beta
    ad::Tensor shift_from_query; // U_beta
    ad::Tensor shift_bias;       // b_beta
};

/// All learnable tensors. Query-side and graph-side layers are disjoint
/// parameter sets.
struct ModelParams {
    ModelConfig config;
    std::vector<EdgeLayerParams> query_layers;
    std::vector<EdgeLayerParams> graph_layers;
    std::vector<NodeLayerParams> query_node_layers; // NodeCentric only
    std::vector<NodeLayerParams> graph_node_layers;
    ad::Tensor query_proj_weight, query_proj_bias; // input_projection only
    ad::Tensor graph_proj_weight, graph_proj_bias;
    ad::Tensor query_pool;   // Q
    ad::Tensor graph_pool;   // G
    FilmParams film;         // Full and NodeCentric
    ad::Tensor match_weight; // d_m x 4d
    ad::Tensor match_bias;
    ad::Tensor head_weight;  // d_m
    ad::Tensor head_bias;    // scalar

    /// Canonical flat view, stable across runs.
    std::vector<ad::Tensor> all() const;
    std::vector<std::pair<std::string, ad::Tensor>> named() const;

    void zero_grads() const;
    ModelParams clone() const;
};

/// Uniform(-a, a) init with a = sqrt(6/(fan_in+fan_out)); biases zero.
ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

/// NoModulation twin of a full model: shared tensors are deep-copied,
/// FiLM parameters are dropped.
ModelParams strip_modulation(const ModelParams& params);

/// Per-edge (or per-node, for the node-centric variant) message vectors
/// at one layer.
struct StateTable {
    std::vector<ad::Tensor> states;
    int layer = 0;
};

enum class Side { Query, Graph };

/// Records quantities a caller may need beyond the prediction itself.
struct ForwardCapture {
    /// FiLM factors per input-graph edge, in edge-id order.
    std::vector<std::pair<ad::Tensor, ad::Tensor>> film_factors;
    /// Smallest |preactivation| seen at any activation; a small value
    /// means a finite-difference probe would straddle a kink.
    double min_activation_margin = 1e300;
};

StateTable init_edge_messages(const LabeledDigraph& g, const ModelConfig& cfg);

StateTable edge_layer(ad::Tape& tape, const LabeledDigraph& g,
                      const StateTable& states, const EdgeLayerParams& layer,
                      const ModelConfig& cfg, ForwardCapture* capture = nullptr);

/// Full encoder stack for one side: initial messages, optional projection,
/// then `layers` message-passing layers.
StateTable encode(ad::Tape& tape, const LabeledDigraph& g, Side side,
                  const ModelParams& params, ForwardCapture* capture = nullptr);

/// Whole-query vector: activation(Q * sum of edge states). Throws
/// StructureError for a query with no edges.
ad::Tensor query_readout(ad::Tape& tape, const StateTable& states,
                         const ModelParams& params,
                         ForwardCapture* capture = nullptr);

std::pair<ad::Tensor, ad::Tensor> film_factors(ad::Tape& tape,
                                               const ad::Tensor& edge_state,
                                               const ad::Tensor& query_state,
                                               const ModelParams& params,
                                               ForwardCapture* capture = nullptr);

/// (gamma + 1) * h + beta.
ad::Tensor modulate(ad::Tape& tape, const ad::Tensor& edge_state,
                    const ad::Tensor& gamma, const ad::Tensor& beta);

/// Query-conditioned input-graph vector: activation(G * sum of modulated
/// states). An empty state list pools to the zero vector.
ad::Tensor graph_readout(ad::Tape& tape, const std::vector<ad::Tensor>& states,
                         const ModelParams& params,
                         ForwardCapture* capture = nullptr);

/// Match head input x || y || x-y || x*y through one fully connected layer.
ad::Tensor match(ad::Tape& tape, const ad::Tensor& query_vec,
                 const ad::Tensor& graph_vec, const ModelParams& params,
                 ForwardCapture* capture = nullptr);

/// Differentiable prediction, >= 0 by the final ReLU.
ad::Tensor predict_count_t(ad::Tape& tape, const LabeledDigraph& q,
                           const LabeledDigraph& g, const ModelParams& params,
                           ForwardCapture* capture = nullptr);

/// Inference-only convenience.
double predict_count(const LabeledDigraph& q, const LabeledDigraph& g,
                     const ModelParams& params);

/// Query-independent whole-graph vector (graph-side encoder, plain sum
/// pooling through G). Used to probe encoder distinguishing power.
ad::Tensor graph_embedding(ad::Tape& tape, const LabeledDigraph& g,
                           const ModelParams& params);

/// Checkpoint serialization; exact float64 round-trip, stable key order.
std::string checkpoint_to_json(const ModelParams& params);
ModelParams checkpoint_from_json(const std::string& text);
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

} // namespace countgnn::model

#endif
