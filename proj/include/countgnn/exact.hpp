#ifndef COUNTGNN_EXACT_HPP
#define COUNTGNN_EXACT_HPP

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "countgnn/graph.hpp"
#include "countgnn/rng.hpp"

namespace countgnn::exact {

inline constexpr std::uint64_t kDefaultBudget = 100'000'000;

/// An injective node map realizing one embedding of the query.
struct Embedding {
    std::vector<int> query_to_graph;
};

struct CountResult {
    std::int64_t embeddings = 0;
    std::int64_t subgraphs = 0;
    std::int64_t automorphisms = 1;
    std::chrono::duration<double> elapsed{0};
};

/// Number of embeddings of q into g: injective label-preserving node maps
/// combined with injective assignments of query edges onto distinct graph
/// edges of equal label (parallel edges count with multiplicity).
/// Throws BudgetError when the step budget runs out.
std::int64_t count_embeddings(const LabeledDigraph& q, const LabeledDigraph& g,
                              std::uint64_t budget = kDefaultBudget);

/// count_embeddings(q, q).
std::int64_t count_automorphisms(const LabeledDigraph& q,
                                 std::uint64_t budget = kDefaultBudget);

/// Embeddings, automorphisms and the derived subgraph count
/// (embeddings / automorphisms, always an exact division).
CountResult count_subgraphs(const LabeledDigraph& q, const LabeledDigraph& g,
                            std::uint64_t budget = kDefaultBudget);

/// Node maps admitting at least one complete edge assignment, in
/// lexicographic order, up to max_results.
std::vector<Embedding> enumerate_embeddings(const LabeledDigraph& q,
                                            const LabeledDigraph& g,
                                            std::size_t max_results = 1000);

/// Independent oracle: enumerates every injective node map and, per map,
/// every injective edge assignment, sharing no pruning or indexing with
/// the backtracking counter. Requires |V_g| <= 10.
CountResult brute_force_count(const LabeledDigraph& q, const LabeledDigraph& g);

enum class WlMode {
    NodeCentric, ///< colors on nodes; in/out neighbor color multisets
    EdgeCentric, ///< colors on directed edges; preceding-edge color multisets
};

/// Stable 64-bit color -> multiplicity after `rounds` refinement steps.
/// Colors are canonical across graphs, so two graphs refined for the same
/// number of rounds have comparable histograms; isomorphic graphs always
/// match. rounds = 0 gives initial colors.
std::map<std::uint64_t, int> wl_refinement_histogram(const LabeledDigraph& g,
                                                     WlMode mode, int rounds);

/// Rounds sufficient for both graphs' partitions to stabilize.
int wl_rounds_for_pair(const LabeledDigraph& a, const LabeledDigraph& b,
                       WlMode mode);

/// True when the stable histograms of a and b differ in the given mode.
bool wl_distinguishes(const LabeledDigraph& a, const LabeledDigraph& b,
                      WlMode mode);

/// A non-isomorphic pair with equal node-centric histograms and different
/// edge-centric histograms, found by randomized search over labeled
/// digraphs with at most max_nodes nodes.
std::optional<std::pair<LabeledDigraph, LabeledDigraph>>
find_wl_witness(int max_nodes, std::uint64_t seed, int max_trials = 200'000);

} // namespace countgnn::exact

#endif
