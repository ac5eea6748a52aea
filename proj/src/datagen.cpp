#include "countgnn/datagen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>
#include <tuple>

#include <nlohmann/json.hpp>

namespace countgnn::datagen {

namespace {

bool weakly_connected(int n, const std::vector<EdgeRecord>& edges) {
    if (n == 0) return true;
    std::vector<std::vector<int>> adj(n);
    for (const auto& e : edges) {
        adj[e.src].push_back(e.dst);
        adj[e.dst].push_back(e.src);
    }
    std::vector<char> seen(n, 0);
    std::vector<int> stack{0};
    seen[0] = 1;
    int count = 1;
    while (!stack.empty()) {
        int v = stack.back();
        stack.pop_back();
        for (int w : adj[v]) {
            if (!seen[w]) {
                seen[w] = 1;
                ++count;
                stack.push_back(w);
            }
        }
    }
    return count == n;
}

int sample_edge_count(Rng& rng, double edge_factor, int n) {
    const double target = edge_factor * n;
    const double fl = std::floor(target);
    int m = static_cast<int>(fl);
    if (rng.bernoulli(target - fl)) ++m;
    return m;
}

std::vector<EdgeRecord> sample_edges(const GenSpec& spec, Rng& rng, int n,
                                     int m) {
    std::vector<EdgeRecord> edges;
    if (spec.allow_parallel) {
        for (int i = 0; i < m; ++i) {
            int u = static_cast<int>(rng.uniform(n));
            int v = static_cast<int>(rng.uniform(n));
            while (!spec.allow_self_loops && v == u)
                v = static_cast<int>(rng.uniform(n));
            edges.push_back({u, v, static_cast<int>(rng.uniform(spec.num_edge_labels))});
        }
    } else {
        std::vector<EdgeRecord> cand;
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v) {
                if (!spec.allow_self_loops && u == v) continue;
                for (int c = 0; c < spec.num_edge_labels; ++c)
                    cand.push_back({u, v, c});
            }
        rng.shuffle(cand);
        const int take = std::min<int>(m, static_cast<int>(cand.size()));
        edges.assign(cand.begin(), cand.begin() + take);
    }
    std::sort(edges.begin(), edges.end(), [](const auto& a, const auto& b) {
        return std::tie(a.src, a.dst, a.label) < std::tie(b.src, b.dst, b.label);
    });
    return edges;
}

std::vector<int> sample_labels(const GenSpec& spec, Rng& rng, int n) {
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.uniform(spec.num_node_labels));
    return labels;
}

} // namespace

LabeledDigraph gen_query(const GenSpec& spec, Rng& rng) {
    const int n = static_cast<int>(
        rng.uniform_int(spec.query_nodes_min, spec.query_nodes_max));
    for (int attempt = 0; attempt < 10000; ++attempt) {
        int m = sample_edge_count(rng, spec.query_edge_factor, n);
        m = std::max(m, std::max(1, n - 1)); // connectivity needs n-1 edges
        auto edges = sample_edges(spec, rng, n, m);
        if (edges.empty() || !weakly_connected(n, edges)) continue;
        return build_graph(sample_labels(spec, rng, n), std::move(edges),
                           spec.vocab());
    }
    throw Error("gen_query: could not sample a connected query");
}

LabeledDigraph gen_graph(const GenSpec& spec, Rng& rng) {
    const int n = static_cast<int>(
        rng.uniform_int(spec.graph_nodes_min, spec.graph_nodes_max));
    const int m = sample_edge_count(rng, spec.graph_edge_factor, n);
    return build_graph(sample_labels(spec, rng, n), sample_edges(spec, rng, n, m),
                       spec.vocab());
}

namespace {

std::vector<Triple> label_pairs(const std::vector<LabeledDigraph>& queries,
                                const std::vector<LabeledDigraph>& graphs,
                                const std::vector<std::pair<int, int>>& pairs,
                                std::uint64_t budget, int jobs, int* dropped,
                                std::vector<std::pair<int, int>>* kept_pairs) {
    struct Slot {
        exact::CountResult result;
        bool ok = false;
    };
    std::vector<Slot> slots(pairs.size());
    auto work = [&](std::size_t i) {
        try {
            slots[i].result =
                exact::count_subgraphs(queries[pairs[i].first],
                                       graphs[pairs[i].second], budget);
            slots[i].ok = true;
        } catch (const BudgetError&) {
            slots[i].ok = false;
        }
    };
    if (jobs <= 1 || pairs.size() < 2) {
        for (std::size_t i = 0; i < pairs.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> cursor{0};
        std::vector<std::thread> pool;
        const int n_threads = std::min<int>(jobs, static_cast<int>(pairs.size()));
        for (int t = 0; t < n_threads; ++t)
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t i = cursor.fetch_add(1);
                    if (i >= pairs.size()) return;
                    work(i);
                }
            });
        for (auto& th : pool) th.join();
    }

    std::vector<Triple> out;
    int n_dropped = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (!slots[i].ok) {
            ++n_dropped;
            continue;
        }
        Triple t;
        t.query = queries[pairs[i].first];
        t.graph = graphs[pairs[i].second];
        t.subgraphs = slots[i].result.subgraphs;
        t.embeddings = slots[i].result.embeddings;
        t.automorphisms = slots[i].result.automorphisms;
        out.push_back(std::move(t));
        if (kept_pairs) kept_pairs->push_back(pairs[i]);
    }
    if (dropped) *dropped = n_dropped;
    return out;
}

} // namespace

std::vector<Triple> make_triples(const std::vector<LabeledDigraph>& queries,
                                 const std::vector<LabeledDigraph>& graphs,
                                 std::uint64_t budget, int jobs, int* dropped) {
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(queries.size() * graphs.size());
    for (int qi = 0; qi < static_cast<int>(queries.size()); ++qi)
        for (int gi = 0; gi < static_cast<int>(graphs.size()); ++gi)
            pairs.emplace_back(qi, gi);
    return label_pairs(queries, graphs, pairs, budget, jobs, dropped, nullptr);
}

std::tuple<std::vector<Triple>, std::vector<Triple>, std::vector<Triple>>
split(const std::vector<Triple>& triples, double train_frac, double val_frac,
      double test_frac, std::uint64_t seed) {
    if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw Error("split fractions must sum to 1");
    const std::size_t n = triples.size();

    // largest-remainder apportionment so sizes are exact
    const double want[3] = {train_frac * n, val_frac * n, test_frac * n};
    std::size_t sizes[3];
    double rema[3];
    std::size_t assigned = 0;
    for (int i = 0; i < 3; ++i) {
        sizes[i] = static_cast<std::size_t>(std::floor(want[i]));
        rema[i] = want[i] - std::floor(want[i]);
        assigned += sizes[i];
    }
    while (assigned < n) {
        int best = 0;
        for (int i = 1; i < 3; ++i)
            if (rema[i] > rema[best]) best = i;
        ++sizes[best];
        rema[best] = -1.0;
        ++assigned;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);

    // one triple per distinct query goes to train first
    std::map<std::string, std::size_t> first_of_query;
    for (std::size_t oi = 0; oi < n; ++oi) {
        std::string key = to_json(triples[order[oi]].query);
        if (!first_of_query.count(key)) first_of_query[key] = order[oi];
    }
    std::vector<char> reserved(n, 0);
    std::vector<std::size_t> train_ids;
    for (const auto& [key, idx] : first_of_query) {
        if (train_ids.size() >= sizes[0]) break;
        train_ids.push_back(idx);
        reserved[idx] = 1;
    }

    std::vector<std::size_t> val_ids, test_ids;
    for (std::size_t oi = 0; oi < n; ++oi) {
        const std::size_t idx = order[oi];
        if (reserved[idx]) continue;
        if (train_ids.size() < sizes[0])
            train_ids.push_back(idx);
        else if (val_ids.size() < sizes[1])
            val_ids.push_back(idx);
        else
            test_ids.push_back(idx);
    }

    auto build = [&](const std::vector<std::size_t>& ids) {
        std::vector<Triple> out;
        out.reserve(ids.size());
        for (std::size_t i : ids) out.push_back(triples[i]);
        return out;
    };
    return {build(train_ids), build(val_ids), build(test_ids)};
}

Corpus generate_corpus(const GenSpec& spec, int jobs) {
    GenSpec effective = spec;
    for (int round = 0; round < 8; ++round) {
        Corpus corpus;
        corpus.spec = effective;
        corpus.edge_factor_retries = round;
        for (int i = 0; i < effective.n_queries; ++i) {
            Rng rng = Rng::derive(effective.seed, 0x100000ULL + i);
            corpus.queries.push_back(gen_query(effective, rng));
        }
        for (int i = 0; i < effective.n_graphs; ++i) {
            Rng rng = Rng::derive(effective.seed, 0x200000ULL + i);
            corpus.graphs.push_back(gen_graph(effective, rng));
        }

        std::vector<std::pair<int, int>> pairs;
        for (int qi = 0; qi < effective.n_queries; ++qi)
            for (int gi = 0; gi < effective.n_graphs; ++gi)
                pairs.emplace_back(qi, gi);
        if (effective.n_triples > 0 &&
            effective.n_triples < static_cast<int>(pairs.size())) {
            Rng rng = Rng::derive(effective.seed, 0x300000ULL);
            rng.shuffle(pairs);
            pairs.resize(effective.n_triples);
            std::sort(pairs.begin(), pairs.end());
        }

        corpus.triples =
            label_pairs(corpus.queries, corpus.graphs, pairs,
                        effective.max_count_budget, jobs, &corpus.dropped_pairs,
                        &corpus.pairs);

        bool has_variance = false;
        for (std::size_t i = 1; i < corpus.triples.size(); ++i)
            if (corpus.triples[i].subgraphs != corpus.triples[0].subgraphs) {
                has_variance = true;
                break;
            }
        if (!corpus.triples.empty() && has_variance) return corpus;
        // degenerate corpus: denser graphs raise the match rate
        effective.graph_edge_factor *= 1.25;
    }
    throw Error("generate_corpus: no count variance after edge factor retries");
}

namespace {

std::string item_name(const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04d.json", prefix, i);
    return buf;
}

} // namespace

void write_corpus(const Corpus& corpus, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "queries");
    fs::create_directories(fs::path(out_dir) / "graphs");

    auto write_file = [](const fs::path& p, const std::string& content) {
        std::ofstream out(p);
        if (!out) throw Error("cannot write " + p.string());
        out << content << '\n';
    };

    for (int i = 0; i < static_cast<int>(corpus.queries.size()); ++i)
        write_file(fs::path(out_dir) / "queries" / item_name("q", i),
                   to_json(corpus.queries[i]));
    for (int i = 0; i < static_cast<int>(corpus.graphs.size()); ++i)
        write_file(fs::path(out_dir) / "graphs" / item_name("g", i),
                   to_json(corpus.graphs[i]));

    std::ofstream tf(fs::path(out_dir) / "triples.jsonl");
    if (!tf) throw Error("cannot write triples.jsonl");
    for (std::size_t i = 0; i < corpus.triples.size(); ++i) {
        nlohmann::ordered_json j;
        j["query"] = "queries/" + item_name("q", corpus.pairs[i].first);
        j["graph"] = "graphs/" + item_name("g", corpus.pairs[i].second);
        j["subgraphs"] = corpus.triples[i].subgraphs;
        j["embeddings"] = corpus.triples[i].embeddings;
        j["automorphisms"] = corpus.triples[i].automorphisms;
        tf << j.dump() << '\n';
    }

    write_file(fs::path(out_dir) / "genspec.json", genspec_to_json(corpus.spec));
}

std::string genspec_to_json(const GenSpec& spec) {
    nlohmann::ordered_json j;
    j["n_queries"] = spec.n_queries;
    j["n_graphs"] = spec.n_graphs;
    j["query_nodes_min"] = spec.query_nodes_min;
    j["query_nodes_max"] = spec.query_nodes_max;
    j["query_edge_factor"] = spec.query_edge_factor;
    j["graph_nodes_min"] = spec.graph_nodes_min;
    j["graph_nodes_max"] = spec.graph_nodes_max;
    j["graph_edge_factor"] = spec.graph_edge_factor;
    j["num_node_labels"] = spec.num_node_labels;
    j["num_edge_labels"] = spec.num_edge_labels;
    j["seed"] = spec.seed;
    j["allow_self_loops"] = spec.allow_self_loops;
    j["allow_parallel"] = spec.allow_parallel;
    j["max_count_budget"] = spec.max_count_budget;
    j["n_triples"] = spec.n_triples;
    return j.dump(2);
}

GenSpec genspec_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("malformed genspec: ") + e.what());
    }
    GenSpec s;
    s.n_queries = j.value("n_queries", s.n_queries);
    s.n_graphs = j.value("n_graphs", s.n_graphs);
    s.query_nodes_min = j.value("query_nodes_min", s.query_nodes_min);
    s.query_nodes_max = j.value("query_nodes_max", s.query_nodes_max);
    s.query_edge_factor = j.value("query_edge_factor", s.query_edge_factor);
    s.graph_nodes_min = j.value("graph_nodes_min", s.graph_nodes_min);
    s.graph_nodes_max = j.value("graph_nodes_max", s.graph_nodes_max);
    s.graph_edge_factor = j.value("graph_edge_factor", s.graph_edge_factor);
    s.num_node_labels = j.value("num_node_labels", s.num_node_labels);
    s.num_edge_labels = j.value("num_edge_labels", s.num_edge_labels);
    s.seed = j.value("seed", s.seed);
    s.allow_self_loops = j.value("allow_self_loops", s.allow_self_loops);
    s.allow_parallel = j.value("allow_parallel", s.allow_parallel);
    s.max_count_budget = j.value("max_count_budget", s.max_count_budget);
    s.n_triples = j.value("n_triples", s.n_triples);
    return s;
}

} // namespace countgnn::datagen
