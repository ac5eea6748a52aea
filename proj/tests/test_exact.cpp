#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "countgnn/exact.hpp"
#include "util.hpp"

#include <set>

using namespace countgnn;
using namespace countgnn::exact;

namespace {

LabeledDigraph single_edge_query() {
    // labels a=0, b=1 on nodes, edge label x=0
    return build_graph({0, 1}, {{0, 1, 0}}, {2, 1});
}

LabeledDigraph three_disjoint_edges() {
    return build_graph({0, 1, 0, 1, 0, 1},
                       {{0, 1, 0}, {2, 3, 0}, {4, 5, 0}}, {2, 1});
}

LabeledDigraph triangle_bidirected() {
    return undirected_to_directed({0, 0, 0}, {{0, 1, 0}, {1, 2, 0}, {0, 2, 0}},
                                  {1, 1});
}

} // namespace

TEST_CASE("single-edge query counts matching edges") {
    auto r = count_subgraphs(single_edge_query(), three_disjoint_edges());
    CHECK(r.embeddings == 3);
    CHECK(r.subgraphs == 3);
    CHECK(r.automorphisms == 1);
}

TEST_CASE("a graph embeds into itself at least once") {
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        auto g = testutil::random_graph(rng, 1, 6, 1.5, {2, 2});
        auto n = count_embeddings(g, g);
        CHECK(n >= 1);
        CHECK(n == count_automorphisms(g));
    }
}

TEST_CASE("triangle in K4, all labels uniform") {
    auto oracle = brute_force_count(triangle_bidirected(), testutil::complete_bidirected(4));
    // frozen values, recomputed by the naive enumerator every run
    CHECK(oracle.embeddings == 24);
    CHECK(oracle.automorphisms == 6);
    CHECK(oracle.subgraphs == 4);

    auto fast = count_subgraphs(triangle_bidirected(), testutil::complete_bidirected(4));
    CHECK(fast.embeddings == oracle.embeddings);
    CHECK(fast.subgraphs == oracle.subgraphs);
    CHECK(fast.automorphisms == oracle.automorphisms);
}

TEST_CASE("automorphism fixtures") {
    CHECK(count_automorphisms(triangle_bidirected()) == 6);

    auto cycle3 = build_graph({0, 0, 0}, {{0, 1, 0}, {1, 2, 0}, {2, 0, 0}}, {1, 1});
    CHECK(count_automorphisms(cycle3) == 3);

    auto pinned = build_graph({0, 1}, {{0, 1, 0}}, {2, 1});
    CHECK(count_automorphisms(pinned) == 1);
}

TEST_CASE("query with an absent label counts zero") {
    auto q = build_graph({1, 1}, {{0, 1, 0}}, {2, 1});
    auto g = build_graph({0, 0, 0}, {{0, 1, 0}, {1, 2, 0}}, {2, 1});
    CHECK(count_subgraphs(q, g).subgraphs == 0);
}

TEST_CASE("parallel edges count with multiplicity") {
    auto q = build_graph({0, 1}, {{0, 1, 0}, {0, 1, 0}}, {2, 1});
    auto g = build_graph({0, 1}, {{0, 1, 0}, {0, 1, 0}, {0, 1, 0}}, {2, 1});
    auto oracle = brute_force_count(q, g);
    CHECK(oracle.embeddings == 6); // 3 * 2 ordered choices
    CHECK(oracle.automorphisms == 2);
    CHECK(oracle.subgraphs == 3); // one per unordered pair
    auto fast = count_subgraphs(q, g);
    CHECK(fast.embeddings == oracle.embeddings);
    CHECK(fast.subgraphs == oracle.subgraphs);
}

TEST_CASE("self-loops match only self-loops") {
    auto q = build_graph({0}, {{0, 0, 0}}, {1, 1});
    auto g = build_graph({0, 0, 0},
                         {{0, 0, 0}, {1, 2, 0}, {2, 2, 0}}, {1, 1});
    auto r = count_subgraphs(q, g);
    CHECK(r.subgraphs == 2);
    CHECK(brute_force_count(q, g).subgraphs == 2);
}

TEST_CASE("brute force bound is enforced") {
    auto q = single_edge_query();
    Rng rng(1);
    auto g = testutil::random_graph(rng, 11, 11, 1.0, {2, 1});
    CHECK_THROWS_AS(brute_force_count(q, g), Error);
}

TEST_CASE("budget exhaustion raises, result never reported") {
    auto q = triangle_bidirected();
    auto g = testutil::complete_bidirected(9);
    CHECK_THROWS_AS(count_embeddings(q, g, 5), BudgetError);
    try {
        count_embeddings(q, g, 5);
    } catch (const BudgetError& e) {
        CHECK(e.steps_used >= 5);
    }
}

TEST_CASE("backtracking counter equals the naive oracle on random pairs") {
    Rng rng(101);
    int nonzero = 0;
    for (int t = 0; t < 220; ++t) {
        auto q = testutil::random_connected_graph(rng, 2, 4, 1.3, {2, 2});
        auto g = testutil::random_graph(rng, 4, 10, 3.0, {2, 2}, true);
        auto fast = count_subgraphs(q, g);
        auto oracle = brute_force_count(q, g);
        REQUIRE(fast.embeddings == oracle.embeddings);
        REQUIRE(fast.subgraphs == oracle.subgraphs);
        REQUIRE(fast.automorphisms == oracle.automorphisms);
        CHECK(fast.embeddings == fast.subgraphs * fast.automorphisms);
        if (fast.embeddings > 0) ++nonzero;
    }
    CHECK(nonzero > 20); // the suite exercises non-trivial matches
}

TEST_CASE("counts are invariant under node relabeling") {
    Rng rng(102);
    for (int t = 0; t < 40; ++t) {
        auto q = testutil::random_connected_graph(rng, 2, 4, 1.3, {2, 2});
        auto g = testutil::random_graph(rng, 4, 9, 2.5, {2, 2});
        auto r1 = count_subgraphs(q, g);
        auto r2 = count_subgraphs(testutil::permute_graph(q, rng),
                                  testutil::permute_graph(g, rng));
        CHECK(r1.embeddings == r2.embeddings);
        CHECK(r1.subgraphs == r2.subgraphs);
    }
}

TEST_CASE("adding a graph edge never lowers the embedding count") {
    Rng rng(103);
    for (int t = 0; t < 40; ++t) {
        auto q = testutil::random_connected_graph(rng, 2, 4, 1.2, {2, 2});
        auto g = testutil::random_graph(rng, 4, 9, 1.5, {2, 2});
        auto before = count_embeddings(q, g);

        auto edges = g.edges();
        edges.push_back({static_cast<int>(rng.uniform(g.num_nodes())),
                         static_cast<int>(rng.uniform(g.num_nodes())),
                         static_cast<int>(rng.uniform(2))});
        auto g2 = build_graph(g.node_labels(), edges, g.vocab());
        CHECK(count_embeddings(q, g2) >= before);
    }
}

TEST_CASE("enumerated embeddings are injective and label preserving") {
    Rng rng(104);
    for (int t = 0; t < 20; ++t) {
        auto q = testutil::random_connected_graph(rng, 2, 3, 1.2, {2, 2});
        auto g = testutil::random_graph(rng, 3, 7, 2.0, {2, 2});
        auto maps = enumerate_embeddings(q, g);
        for (const auto& m : maps) {
            std::set<int> image(m.query_to_graph.begin(), m.query_to_graph.end());
            CHECK(image.size() == m.query_to_graph.size());
            for (int v = 0; v < q.num_nodes(); ++v)
                CHECK(q.node_label(v) == g.node_label(m.query_to_graph[v]));
            for (const auto& e : q.edges()) {
                bool found = false;
                for (const auto& ge : g.edges())
                    if (ge.src == m.query_to_graph[e.src] &&
                        ge.dst == m.query_to_graph[e.dst] && ge.label == e.label) {
                        found = true;
                        break;
                    }
                CHECK(found);
            }
        }
        // without parallel edges a node map fixes the edge map
        CHECK(static_cast<std::int64_t>(maps.size()) == count_embeddings(q, g));
    }
}

// ---------------------------------------------------------------------
// Color refinement
// ---------------------------------------------------------------------

TEST_CASE("isomorphic graphs share histograms in both modes") {
    Rng rng(105);
    for (int t = 0; t < 30; ++t) {
        auto g = testutil::random_graph(rng, 2, 8, 1.8, {2, 2}, true);
        auto h = testutil::permute_graph(g, rng);
        for (auto mode : {WlMode::NodeCentric, WlMode::EdgeCentric}) {
            const int rounds = wl_rounds_for_pair(g, h, mode);
            CHECK(wl_refinement_histogram(g, mode, rounds) ==
                  wl_refinement_histogram(h, mode, rounds));
        }
    }
}

TEST_CASE("zero rounds gives initial colors") {
    auto g = build_graph({0, 1, 0}, {{0, 1, 0}, {1, 2, 1}, {0, 2, 0}}, {2, 2});
    auto nh = wl_refinement_histogram(g, WlMode::NodeCentric, 0);
    int n_total = 0;
    for (auto& [c, k] : nh) n_total += k;
    CHECK(n_total == 3);
    CHECK(nh.size() == 2); // two distinct node labels

    auto eh = wl_refinement_histogram(g, WlMode::EdgeCentric, 0);
    int e_total = 0;
    for (auto& [c, k] : eh) e_total += k;
    CHECK(e_total == 3);
    CHECK(eh.size() == 3); // three distinct (src label, edge label, dst label)
}

TEST_CASE("edge refinement separates a path from a collider") {
    auto path = build_graph({0, 0, 0}, {{0, 1, 0}, {1, 2, 0}}, {1, 1});
    auto collider = build_graph({0, 0, 0}, {{0, 1, 0}, {2, 1, 0}}, {1, 1});
    CHECK(wl_distinguishes(path, collider, WlMode::EdgeCentric));
}

TEST_CASE("witness search finds a pair splitting the two modes") {
    auto found = find_wl_witness(8, 2024, 50000);
    REQUIRE(found.has_value());
    const auto& [a, b] = *found;
    CHECK(a.num_nodes() <= 8);
    CHECK(b.num_nodes() <= 8);
    CHECK_FALSE(wl_distinguishes(a, b, WlMode::NodeCentric));
    CHECK(wl_distinguishes(a, b, WlMode::EdgeCentric));
    // differing edge histograms prove non-isomorphism; cross-check with
    // the exact counter when sizes allow a direct test
    if (a.num_nodes() == b.num_nodes() && a.num_edges() == b.num_edges())
        CHECK(count_embeddings(a, b) == 0);
}

TEST_CASE("node-refined pairs stay separated under edge refinement") {
    // random weakly connected pairs; whenever node-centric refinement
    // splits a pair, edge-centric refinement must split it too
    Rng rng(106);
    int node_split = 0, violations = 0;
    for (int t = 0; t < 200; ++t) {
        auto a = testutil::random_connected_graph(rng, 4, 8, 1.7, {2, 2});
        auto b = testutil::random_connected_graph(rng, 4, 8, 1.7, {2, 2});
        if (wl_distinguishes(a, b, WlMode::NodeCentric)) {
            ++node_split;
            if (!wl_distinguishes(a, b, WlMode::EdgeCentric)) ++violations;
        }
    }
    CHECK(node_split > 100);
    CHECK(violations == 0);
}
