#include "countgnn/exact.hpp"

#include <algorithm>
#include <functional>
#include <numeric>
#include <tuple>
#include <unordered_map>

namespace countgnn::exact {

namespace {

// ---------------------------------------------------------------------
// Backtracking counter
// ---------------------------------------------------------------------

// Query edges grouped by (src, dst, label); an embedding must cover a
// group of multiplicity k by k distinct graph edges, contributing a
// falling factorial m*(m-1)*...*(m-k+1) given m parallel graph edges.
struct EdgeGroup {
    int src, dst, label;
    int multiplicity;
};

struct QueryPlan {
    std::vector<int> order;                    // query nodes, match order
    std::vector<std::vector<int>> groups_at;   // order position -> group ids
    std::vector<EdgeGroup> groups;
    std::vector<int> in_deg, out_deg;
};

// Connectivity-first BFS from the highest-degree node; ties by id.
std::vector<int> match_order(const LabeledDigraph& q) {
    const int n = q.num_nodes();
    std::vector<int> deg(n, 0);
    for (const auto& e : q.edges()) {
        ++deg[e.src];
        ++deg[e.dst];
    }
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : q.edges()) {
        adj[e.src].push_back(e.dst);
        adj[e.dst].push_back(e.src);
    }
    std::vector<int> order;
    std::vector<char> seen(n, 0);
    auto best_unseen = [&](bool require_adjacent) {
        int best = -1;
        for (int v = 0; v < n; ++v) {
            if (seen[v]) continue;
            if (require_adjacent) {
                bool adj_to_seen = false;
                for (int u : adj[v])
                    if (seen[u]) { adj_to_seen = true; break; }
                if (!adj_to_seen) continue;
            }
            if (best == -1 || deg[v] > deg[best]) best = v;
        }
        return best;
    };
    while (static_cast<int>(order.size()) < n) {
        int v = best_unseen(true);
        if (v == -1) v = best_unseen(false); // next component
        seen[v] = 1;
        order.push_back(v);
    }
    return order;
}

QueryPlan make_plan(const LabeledDigraph& q) {
    QueryPlan plan;
    plan.order = match_order(q);
    const int n = q.num_nodes();
    plan.in_deg.assign(n, 0);
    plan.out_deg.assign(n, 0);
    for (const auto& e : q.edges()) {
        ++plan.out_deg[e.src];
        ++plan.in_deg[e.dst];
    }

    std::map<std::tuple<int, int, int>, int> group_of;
    for (const auto& e : q.edges()) {
        auto key = std::make_tuple(e.src, e.dst, e.label);
        auto it = group_of.find(key);
        if (it == group_of.end()) {
            group_of.emplace(key, static_cast<int>(plan.groups.size()));
            plan.groups.push_back({e.src, e.dst, e.label, 1});
        } else {
            ++plan.groups[it->second].multiplicity;
        }
    }

    // A group is checked when the later of its endpoints is placed.
    std::vector<int> pos(n, -1);
    for (int i = 0; i < n; ++i) pos[plan.order[i]] = i;
    plan.groups_at.assign(n, {});
    for (int gi = 0; gi < static_cast<int>(plan.groups.size()); ++gi) {
        const auto& gr = plan.groups[gi];
        plan.groups_at[std::max(pos[gr.src], pos[gr.dst])].push_back(gi);
    }
    return plan;
}

struct GraphIndex {
    // (src, dst, label) -> parallel edge count
    std::unordered_map<std::uint64_t, int> multiplicity;
    int num_nodes;
    int num_edge_labels;

    explicit GraphIndex(const LabeledDigraph& g)
        : num_nodes(g.num_nodes()), num_edge_labels(g.vocab().num_edge_labels) {
        for (const auto& e : g.edges()) ++multiplicity[key(e.src, e.dst, e.label)];
    }

    std::uint64_t key(int s, int d, int c) const {
        return (static_cast<std::uint64_t>(s) * num_nodes + d) *
                   static_cast<std::uint64_t>(num_edge_labels) +
               c;
    }

    int count(int s, int d, int c) const {
        auto it = multiplicity.find(key(s, d, c));
        return it == multiplicity.end() ? 0 : it->second;
    }
};

std::int64_t falling_factorial(int m, int k) {
    std::int64_t r = 1;
    for (int t = 0; t < k; ++t) r *= (m - t);
    return r;
}

class Backtracker {
public:
    Backtracker(const LabeledDigraph& q, const LabeledDigraph& g,
                std::uint64_t budget)
        : q_(q), g_(g), plan_(make_plan(q)), index_(g), budget_(budget),
          assignment_(q.num_nodes(), -1), used_(g.num_nodes(), 0) {}

    std::int64_t run() {
        if (q_.num_nodes() == 0) return q_.num_edges() == 0 ? 1 : 0;
        if (q_.num_nodes() > g_.num_nodes()) return 0;
        total_ = 0;
        extend(0, 1);
        return total_;
    }

private:
    void extend(int depth, std::int64_t factor) {
        if (depth == q_.num_nodes()) {
            total_ += factor;
            return;
        }
        const int u = plan_.order[depth];
        for (int w = 0; w < g_.num_nodes(); ++w) {
            if (used_[w]) continue;
            if (++steps_ > budget_)
                throw BudgetError("backtracking budget exhausted", steps_);
            if (g_.node_label(w) != q_.node_label(u)) continue;
            if (g_.in_degree(w) < plan_.in_deg[u]) continue;
            if (g_.out_degree(w) < plan_.out_deg[u]) continue;

            std::int64_t f = factor;
            assignment_[u] = w;
            bool ok = true;
            for (int gi : plan_.groups_at[depth]) {
                const auto& gr = plan_.groups[gi];
                const int m = index_.count(assignment_[gr.src],
                                           assignment_[gr.dst], gr.label);
                if (m < gr.multiplicity) { ok = false; break; }
                f *= falling_factorial(m, gr.multiplicity);
            }
            if (ok) {
                used_[w] = 1;
                extend(depth + 1, f);
                used_[w] = 0;
            }
            assignment_[u] = -1;
        }
    }

    const LabeledDigraph& q_;
    const LabeledDigraph& g_;
    QueryPlan plan_;
    GraphIndex index_;
    std::uint64_t budget_;
    std::uint64_t steps_ = 0;
    std::int64_t total_ = 0;
    std::vector<int> assignment_;
    std::vector<char> used_;
};

} // namespace

std::int64_t count_embeddings(const LabeledDigraph& q, const LabeledDigraph& g,
                              std::uint64_t budget) {
    return Backtracker(q, g, budget).run();
}

std::int64_t count_automorphisms(const LabeledDigraph& q, std::uint64_t budget) {
    return count_embeddings(q, q, budget);
}

CountResult count_subgraphs(const LabeledDigraph& q, const LabeledDigraph& g,
                            std::uint64_t budget) {
    const auto t0 = std::chrono::steady_clock::now();
    CountResult r;
    r.automorphisms = count_automorphisms(q, budget);
    r.embeddings = count_embeddings(q, g, budget);
    if (r.automorphisms <= 0 || r.embeddings % r.automorphisms != 0)
        throw std::logic_error(
            "internal error: embedding count not divisible by automorphisms");
    r.subgraphs = r.embeddings / r.automorphisms;
    r.elapsed = std::chrono::steady_clock::now() - t0;
    return r;
}

std::vector<Embedding> enumerate_embeddings(const LabeledDigraph& q,
                                            const LabeledDigraph& g,
                                            std::size_t max_results) {
    std::vector<Embedding> out;
    const int nq = q.num_nodes();
    std::vector<int> map(nq, -1);
    std::vector<char> used(g.num_nodes(), 0);

    std::function<void(int)> rec = [&](int depth) {
        if (out.size() >= max_results) return;
        if (depth == nq) {
            // accept iff some injective edge assignment exists
            std::vector<char> eused(g.num_edges(), 0);
            std::function<bool(int)> assign = [&](int j) {
                if (j == q.num_edges()) return true;
                const auto& qe = q.edge(j);
                for (int ge = 0; ge < g.num_edges(); ++ge) {
                    if (eused[ge]) continue;
                    const auto& e = g.edge(ge);
                    if (e.src == map[qe.src] && e.dst == map[qe.dst] &&
                        e.label == qe.label) {
                        eused[ge] = 1;
                        if (assign(j + 1)) { eused[ge] = 0; return true; }
                        eused[ge] = 0;
                    }
                }
                return false;
            };
            if (assign(0)) out.push_back(Embedding{map});
            return;
        }
        for (int w = 0; w < g.num_nodes(); ++w) {
            if (used[w] || g.node_label(w) != q.node_label(depth)) continue;
            map[depth] = w;
            used[w] = 1;
            rec(depth + 1);
            used[w] = 0;
            map[depth] = -1;
        }
    };
    rec(0);
    return out;
}

namespace {

// Counts injective assignments of all query edges under a fixed node map.
std::int64_t naive_edge_assignments(const LabeledDigraph& q,
                                    const LabeledDigraph& g,
                                    const std::vector<int>& map,
                                    std::vector<char>& edge_used, int j) {
    if (j == q.num_edges()) return 1;
    const auto& qe = q.edge(j);
    std::int64_t total = 0;
    for (int ge = 0; ge < g.num_edges(); ++ge) {
        if (edge_used[ge]) continue;
        const auto& e = g.edge(ge);
        if (e.src == map[qe.src] && e.dst == map[qe.dst] && e.label == qe.label) {
            edge_used[ge] = 1;
            total += naive_edge_assignments(q, g, map, edge_used, j + 1);
            edge_used[ge] = 0;
        }
    }
    return total;
}

std::int64_t naive_embeddings(const LabeledDigraph& q, const LabeledDigraph& g) {
    const int nq = q.num_nodes(), ng = g.num_nodes();
    if (nq > ng) return 0;
    std::vector<int> map(nq, -1);
    std::vector<char> used(ng, 0);
    std::vector<char> edge_used(g.num_edges(), 0);
    std::int64_t total = 0;
    std::function<void(int)> rec = [&](int depth) {
        if (depth == nq) {
            for (int v = 0; v < nq; ++v)
                if (q.node_label(v) != g.node_label(map[v])) return;
            total += naive_edge_assignments(q, g, map, edge_used, 0);
            return;
        }
        for (int w = 0; w < ng; ++w) {
            if (used[w]) continue;
            map[depth] = w;
            used[w] = 1;
            rec(depth + 1);
            used[w] = 0;
        }
    };
    rec(0);
    return total;
}

} // namespace

CountResult brute_force_count(const LabeledDigraph& q, const LabeledDigraph& g) {
    if (g.num_nodes() > 10)
        throw Error("brute_force_count requires |V_g| <= 10, got " +
                    std::to_string(g.num_nodes()));
    const auto t0 = std::chrono::steady_clock::now();
    CountResult r;
    r.embeddings = naive_embeddings(q, g);
    r.automorphisms = naive_embeddings(q, q);
    if (r.automorphisms <= 0 || r.embeddings % r.automorphisms != 0)
        throw std::logic_error(
            "internal error: brute-force embeddings not divisible by automorphisms");
    r.subgraphs = r.embeddings / r.automorphisms;
    r.elapsed = std::chrono::steady_clock::now() - t0;
    return r;
}

// ---------------------------------------------------------------------
// Color refinement
// ---------------------------------------------------------------------

namespace {

std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t combine(std::uint64_t h, std::uint64_t x) {
    return splitmix(h * 0x100000001b3ULL ^ splitmix(x));
}

std::uint64_t hash_signature(std::uint64_t own,
                             const std::vector<std::uint64_t>& parts) {
    std::uint64_t h = combine(0x5b7e9c11d3a8f642ULL, own);
    for (std::uint64_t p : parts) h = combine(h, p);
    return h;
}

std::vector<std::uint64_t> node_refinement(const LabeledDigraph& g, int rounds) {
    const int n = g.num_nodes();
    std::vector<std::vector<int>> out_nbrs(n);
    for (const auto& e : g.edges()) out_nbrs[e.src].push_back(e.dst);
    std::vector<std::uint64_t> color(n);
    for (int v = 0; v < n; ++v)
        color[v] = combine(0x11, static_cast<std::uint64_t>(g.node_label(v)));
    // signature pairs each neighbor color with the edge direction only;
    // this mirrors what a node-feature GNN over the directed structure sees
    for (int r = 0; r < rounds; ++r) {
        std::vector<std::uint64_t> next(n);
        for (int v = 0; v < n; ++v) {
            std::vector<std::uint64_t> ins, outs;
            for (int e : g.in_index(v)) ins.push_back(color[g.edge(e).src]);
            for (int w : out_nbrs[v]) outs.push_back(color[w]);
            std::sort(ins.begin(), ins.end());
            std::sort(outs.begin(), outs.end());
            std::uint64_t h = hash_signature(color[v], ins);
            next[v] = hash_signature(h, outs);
        }
        color = std::move(next);
    }
    return color;
}

std::vector<std::uint64_t> edge_refinement(const LabeledDigraph& g, int rounds) {
    const int m = g.num_edges();
    std::vector<std::uint64_t> color(m);
    for (int e = 0; e < m; ++e) {
        const auto& er = g.edge(e);
        std::uint64_t h = combine(0x22, static_cast<std::uint64_t>(g.node_label(er.src)));
        h = combine(h, static_cast<std::uint64_t>(er.label));
        color[e] = combine(h, static_cast<std::uint64_t>(g.node_label(er.dst)));
    }
    for (int r = 0; r < rounds; ++r) {
        std::vector<std::uint64_t> next(m);
        for (int e = 0; e < m; ++e) {
            std::vector<std::uint64_t> preds;
            for (int f : g.in_index(g.edge(e).src)) preds.push_back(color[f]);
            std::sort(preds.begin(), preds.end());
            next[e] = hash_signature(color[e], preds);
        }
        color = std::move(next);
    }
    return color;
}

} // namespace

std::map<std::uint64_t, int> wl_refinement_histogram(const LabeledDigraph& g,
                                                     WlMode mode, int rounds) {
    if (rounds < 0) throw Error("rounds must be >= 0");
    std::vector<std::uint64_t> colors = mode == WlMode::NodeCentric
                                            ? node_refinement(g, rounds)
                                            : edge_refinement(g, rounds);
    std::map<std::uint64_t, int> hist;
    for (std::uint64_t c : colors) ++hist[c];
    return hist;
}

int wl_rounds_for_pair(const LabeledDigraph& a, const LabeledDigraph& b,
                       WlMode mode) {
    // partitions stabilize within |domain| refinement steps
    int da = mode == WlMode::NodeCentric ? a.num_nodes() : a.num_edges();
    int db = mode == WlMode::NodeCentric ? b.num_nodes() : b.num_edges();
    return std::max(da, db) + 1;
}

bool wl_distinguishes(const LabeledDigraph& a, const LabeledDigraph& b,
                      WlMode mode) {
    const int rounds = wl_rounds_for_pair(a, b, mode);
    return wl_refinement_histogram(a, mode, rounds) !=
           wl_refinement_histogram(b, mode, rounds);
}

// ---------------------------------------------------------------------
// Witness search
// ---------------------------------------------------------------------

namespace {

LabeledDigraph random_candidate(Rng& rng, int max_nodes, const LabelVocab& vocab) {
    const int n = static_cast<int>(rng.uniform_int(3, max_nodes));
    std::vector<int> labels(n);
    std::vector<EdgeRecord> edges;
    if (rng.bernoulli(0.5)) {
        // uniform digraph, distinct (src, dst, label) triples, no self-loops
        for (auto& l : labels) l = static_cast<int>(rng.uniform(vocab.num_node_labels));
        const int m = static_cast<int>(rng.uniform_int(n, 2 * n));
        std::vector<EdgeRecord> cand;
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v)
                if (u != v)
                    for (int c = 0; c < vocab.num_edge_labels; ++c)
                        cand.push_back({u, v, c});
        rng.shuffle(cand);
        edges.assign(cand.begin(),
                     cand.begin() + std::min<std::size_t>(m, cand.size()));
        std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
            return std::tie(a.src, a.dst, a.label) < std::tie(b.src, b.dst, b.label);
        });
    } else {
        // directed cycle with random edge labels; node refinement cannot
        // split a cycle, which concentrates the search where it pays off
        std::fill(labels.begin(), labels.end(), 0);
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(perm);
        for (int i = 0; i < n; ++i)
            edges.push_back({perm[i], perm[(i + 1) % n],
                             static_cast<int>(rng.uniform(vocab.num_edge_labels))});
        std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
            return std::tie(a.src, a.dst, a.label) < std::tie(b.src, b.dst, b.label);
        });
    }
    return build_graph(std::move(labels), std::move(edges), vocab);
}

} // namespace

std::optional<std::pair<LabeledDigraph, LabeledDigraph>>
find_wl_witness(int max_nodes, std::uint64_t seed, int max_trials) {
    Rng rng(seed);
    const LabelVocab vocab{2, 2};
    const int node_rounds = max_nodes + 2;
    const int edge_rounds = 2 * max_nodes + 2;

    using Hist = std::map<std::uint64_t, int>;
    // bucket by stable node histogram plus round-0 edge histogram, so a
    // hit separates through refinement alone, not through raw label counts
    std::map<std::pair<Hist, Hist>, std::vector<std::pair<LabeledDigraph, Hist>>>
        buckets;

    for (int t = 0; t < max_trials; ++t) {
        LabeledDigraph g = random_candidate(rng, max_nodes, vocab);
        Hist nh = wl_refinement_histogram(g, WlMode::NodeCentric, node_rounds);
        Hist eh0 = wl_refinement_histogram(g, WlMode::EdgeCentric, 0);
        Hist eh = wl_refinement_histogram(g, WlMode::EdgeCentric, edge_rounds);
        auto& bucket = buckets[{std::move(nh), std::move(eh0)}];
        for (const auto& [other, other_eh] : bucket) {
            if (other_eh != eh)
                return std::make_pair(other, g);
        }
        if (bucket.size() < 32) bucket.emplace_back(std::move(g), std::move(eh));
    }
    return std::nullopt;
}

} // namespace countgnn::exact
