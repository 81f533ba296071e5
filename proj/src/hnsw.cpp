#include "mvr/hnsw.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

#include "mvr/io.hpp"
#include "mvr/kmeans.hpp"

namespace mvr {

namespace {

constexpr char kGraphMagic[8] = {'M', 'V', 'R', 'H', 'N', 'W', '0', '1'};
constexpr std::uint32_t kMaxLevelCap = 30;

// priority_queue comparators over the (score desc, id asc) total order.
struct WorseThan {  // top = best
    bool operator()(const ScoredId& a, const ScoredId& b) const { return b < a; }
};
struct BetterThan {  // top = worst
    bool operator()(const ScoredId& a, const ScoredId& b) const { return a < b; }
};

std::uint32_t degree_cap(const CentroidGraph& g, std::uint32_t layer) {
    return layer == 0 ? 2 * g.M_graph : g.M_graph;
}

bool visit(GraphSearchScratch& s, std::uint32_t id) {
    if (s.mark[id] == s.epoch) return false;
    s.mark[id] = s.epoch;
    return true;
}

void begin_search(GraphSearchScratch& s, std::uint32_t count) {
    if (s.mark.size() < count) s.mark.assign(count, 0);
    if (++s.epoch == 0) {
        std::fill(s.mark.begin(), s.mark.end(), 0);
        s.epoch = 1;
    }
}

// ef-bounded best-first search within one layer; returns the result set
// sorted best-first.
std::vector<ScoredId> search_layer(const CentroidGraph& g, const float* vectors,
                                   const float* query, std::vector<ScoredId> eps,
                                   std::uint32_t ef, std::uint32_t layer,
                                   GraphSearchScratch& scratch) {
    begin_search(scratch, g.num_nodes());
    std::priority_queue<ScoredId, std::vector<ScoredId>, WorseThan> candidates;
    std::priority_queue<ScoredId, std::vector<ScoredId>, BetterThan> results;
    for (const ScoredId& ep : eps) {
        if (!visit(scratch, ep.id)) continue;
        candidates.push(ep);
        results.push(ep);
        if (results.size() > ef) results.pop();
    }
    while (!candidates.empty()) {
        const ScoredId c = candidates.top();
        candidates.pop();
        if (results.size() >= ef && results.top() < c) break;
        for (std::uint32_t n : g.adj[c.id][layer]) {
            if (!visit(scratch, n)) continue;
            scratch.dots++;
            const ScoredId cand{dot(query, vectors + std::uint64_t(n) * g.dim, g.dim), n};
            if (results.size() < ef || cand < results.top()) {
                candidates.push(cand);
                results.push(cand);
                if (results.size() > ef) results.pop();
            }
        }
    }
    std::vector<ScoredId> out;
    out.reserve(results.size());
    while (!results.empty()) {
        out.push_back(results.top());
        results.pop();
    }
    std::sort(out.begin(), out.end());
    return out;
}

// Walks layers [from_layer, down_to] (down_to >= 1) greedily.
ScoredId greedy_descend(const CentroidGraph& g, const float* vectors, const float* query,
                        ScoredId cur, std::uint32_t from_layer, std::uint32_t down_to,
                        std::uint64_t* dots = nullptr) {
    for (std::uint32_t layer = from_layer; layer >= down_to; --layer) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::uint32_t n : g.adj[cur.id][layer]) {
                if (dots) ++*dots;
                const ScoredId cand{dot(query, vectors + std::uint64_t(n) * g.dim, g.dim),
                                    n};
                if (cand < cur) {
                    cur = cand;
                    improved = true;
                }
            }
        }
    }
    return cur;
}

// Neighbor selection heuristic: walk candidates best-first, keep one only
// if it is closer to the base point than to every already-kept neighbor.
std::vector<ScoredId> select_neighbors(const float* vectors, std::uint32_t dim,
                                       const std::vector<ScoredId>& candidates,
                                       std::uint32_t m) {
    std::vector<ScoredId> kept;
    kept.reserve(m);
    for (const ScoredId& c : candidates) {
        if (kept.size() >= m) break;
        bool ok = true;
        for (const ScoredId& r : kept) {
            const float between = dot(vectors + std::uint64_t(c.id) * dim,
                                      vectors + std::uint64_t(r.id) * dim, dim);
            if (between > c.score) {
                ok = false;
                break;
            }
        }
        if (ok) kept.push_back(c);
    }
    return kept;
}

void shrink_if_needed(CentroidGraph& g, const float* vectors, std::uint32_t node,
                      std::uint32_t layer) {
    auto& list = g.adj[node][layer];
    const std::uint32_t cap = degree_cap(g, layer);
    if (list.size() <= cap) return;
    const float* base = vectors + std::uint64_t(node) * g.dim;
    std::vector<ScoredId> cands;
    cands.reserve(list.size());
    for (std::uint32_t n : list) {
        cands.push_back({dot(base, vectors + std::uint64_t(n) * g.dim, g.dim), n});
    }
    std::sort(cands.begin(), cands.end());
    const auto kept = select_neighbors(vectors, g.dim, cands, cap);
    list.clear();
    for (const ScoredId& s : kept) list.push_back(s.id);
}

std::vector<char> reachable_at_level0(const CentroidGraph& g) {
    std::vector<char> seen(g.num_nodes(), 0);
    std::vector<std::uint32_t> stack{g.entry_point};
    seen[g.entry_point] = 1;
    while (!stack.empty()) {
        const std::uint32_t u = stack.back();
        stack.pop_back();
        for (std::uint32_t v : g.adj[u][0]) {
            if (!seen[v]) {
                seen[v] = 1;
                stack.push_back(v);
            }
        }
    }
    return seen;
}

// Re-links nodes the pruning heuristic left unreachable from the entry
// point. Prefers a reachable partner with spare layer-0 degree so the caps
// stay intact; falls back to evicting the partner's worst edge.
void repair_connectivity(CentroidGraph& g, const float* vectors) {
    const std::uint32_t count = g.num_nodes();
    for (std::uint64_t round = 0; round < std::uint64_t(count) + 64; ++round) {
        const auto seen = reachable_at_level0(g);
        std::uint32_t u = count;
        for (std::uint32_t i = 0; i < count; ++i) {
            if (!seen[i]) {
                u = i;
                break;
            }
        }
        if (u == count) return;

        const float* uv = vectors + std::uint64_t(u) * g.dim;
        const std::uint32_t cap0 = degree_cap(g, 0);
        ScoredId best_roomy{0.0f, count};
        ScoredId best_any{0.0f, count};
        for (std::uint32_t v = 0; v < count; ++v) {
            if (!seen[v]) continue;
            const ScoredId cand{dot(uv, vectors + std::uint64_t(v) * g.dim, g.dim), v};
            if (best_any.id == count || cand < best_any) best_any = cand;
            if (g.adj[v][0].size() < cap0 && (best_roomy.id == count || cand < best_roomy)) {
                best_roomy = cand;
            }
        }
        const std::uint32_t v = best_roomy.id != count ? best_roomy.id : best_any.id;
        g.adj[v][0].push_back(u);
        if (g.adj[v][0].size() > cap0) {
            auto& list = g.adj[v][0];
            const float* vv = vectors + std::uint64_t(v) * g.dim;
            std::size_t worst = list.size();
            ScoredId worst_s{0.0f, 0};
            for (std::size_t i = 0; i < list.size(); ++i) {
                if (list[i] == u) continue;
                const ScoredId s{dot(vv, vectors + std::uint64_t(list[i]) * g.dim, g.dim),
                                 list[i]};
                if (worst == list.size() || worst_s < s) {
                    worst = i;
                    worst_s = s;
                }
            }
            list.erase(list.begin() + worst);
        }
        auto& ul = g.adj[u][0];
        if (std::find(ul.begin(), ul.end(), v) == ul.end()) {
            ul.push_back(v);
            shrink_if_needed(g, vectors, u, 0);
        }
    }
    throw InternalError("graph connectivity repair did not converge");
}

}  // namespace

CentroidGraph build_graph(const float* vectors, std::uint32_t count, std::uint32_t dim,
                          std::uint32_t M_graph, std::uint32_t ef_construction,
                          std::uint64_t seed) {
    if (count == 0) throw UsageError("build_graph: empty centroid set");
    if (M_graph < 2) throw UsageError("build_graph: M_graph must be >= 2");
    CentroidGraph g;
    g.M_graph = M_graph;
    g.ef_construction = std::max(ef_construction, M_graph);
    g.dim = dim;
    g.seed = seed;
    g.levels.resize(count);

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double ml = 1.0 / std::log(double(M_graph));
    for (std::uint32_t i = 0; i < count; ++i) {
        double u = unit(rng);
        if (u < 1e-300) u = 1e-300;
        const double lvl = std::floor(-std::log(u) * ml);
        g.levels[i] = static_cast<std::uint32_t>(std::min(lvl, double(kMaxLevelCap)));
    }

    g.adj.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) g.adj[i].resize(g.levels[i] + 1);

    GraphSearchScratch scratch;
    g.entry_point = 0;
    g.max_level = g.levels[0];
    for (std::uint32_t u = 1; u < count; ++u) {
        const float* q = vectors + std::uint64_t(u) * dim;
        const std::uint32_t lu = g.levels[u];
        ScoredId cur{dot(q, vectors + std::uint64_t(g.entry_point) * dim, dim),
                     g.entry_point};
        if (g.max_level > lu) {
            cur = greedy_descend(g, vectors, q, cur, g.max_level, lu + 1);
        }
        std::vector<ScoredId> eps{cur};
        for (std::uint32_t layer = std::min(lu, g.max_level);; --layer) {
            auto w = search_layer(g, vectors, q, eps, g.ef_construction, layer, scratch);
            const auto selected = select_neighbors(vectors, dim, w, M_graph);
            for (const ScoredId& s : selected) {
                g.adj[u][layer].push_back(s.id);
                g.adj[s.id][layer].push_back(u);
                shrink_if_needed(g, vectors, s.id, layer);
            }
            eps = std::move(w);
            if (layer == 0) break;
        }
        if (lu > g.max_level) {
            g.max_level = lu;
            g.entry_point = u;
        }
    }
    repair_connectivity(g, vectors);
    return g;
}

std::vector<ScoredId> search_centroids(const CentroidGraph& g, const float* vectors,
                                       const float* query, std::uint32_t k,
                                       std::uint32_t ef_search,
                                       GraphSearchScratch* scratch) {
    GraphSearchScratch local;
    GraphSearchScratch& s = scratch ? *scratch : local;
    const std::uint32_t ef = std::max(ef_search, k);
    s.dots++;
    ScoredId cur{dot(query, vectors + std::uint64_t(g.entry_point) * g.dim, g.dim),
                 g.entry_point};
    if (g.max_level > 0) {
        cur = greedy_descend(g, vectors, query, cur, g.max_level, 1, &s.dots);
    }
    auto out = search_layer(g, vectors, query, {cur}, ef, 0, s);
    if (out.size() > k) out.resize(k);
    return out;
}

std::vector<ScoredId> exhaustive_centroids(const float* vectors, std::uint32_t count,
                                           std::uint32_t dim, const float* query,
                                           std::uint32_t k, std::uint64_t* dots) {
    if (dots) *dots += count;
    std::vector<ScoredId> all(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        all[i] = {dot(query, vectors + std::uint64_t(i) * dim, dim), i};
    }
    const std::uint32_t keep = std::min(k, count);
    std::partial_sort(all.begin(), all.begin() + keep, all.end());
    all.resize(keep);
    return all;
}

void save_graph(const CentroidGraph& g, const std::filesystem::path& path) {
    io::FileWriter w(path);
    io::write_magic(w, kGraphMagic);
    w.write_u32(g.M_graph);
    w.write_u32(g.ef_construction);
    w.write_u32(g.dim);
    w.write_u32(g.entry_point);
    w.write_u32(g.max_level);
    w.write_u64(g.seed);
    w.write_u32(g.num_nodes());
    for (std::uint32_t i = 0; i < g.num_nodes(); ++i) {
        w.write_u32(g.levels[i]);
        for (std::uint32_t layer = 0; layer <= g.levels[i]; ++layer) {
            const auto& list = g.adj[i][layer];
            w.write_u32(static_cast<std::uint32_t>(list.size()));
            w.write_span(std::span<const std::uint32_t>(list));
        }
    }
    w.close();
}

CentroidGraph load_graph(const std::filesystem::path& path) {
    io::FileReader r(path);
    io::check_magic(r, kGraphMagic, "graph file " + path.string());
    CentroidGraph g;
    g.M_graph = r.read_u32();
    g.ef_construction = r.read_u32();
    g.dim = r.read_u32();
    g.entry_point = r.read_u32();
    g.max_level = r.read_u32();
    g.seed = r.read_u64();
    const std::uint32_t count = r.read_u32();
    if (count == 0 || g.M_graph < 2 || g.entry_point >= count) {
        throw FormatError("graph file " + path.string() + ": bad header");
    }
    g.levels.resize(count);
    g.adj.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        g.levels[i] = r.read_u32();
        if (g.levels[i] > kMaxLevelCap) {
            throw DataError("graph file " + path.string() + ": level out of range");
        }
        g.adj[i].resize(g.levels[i] + 1);
        for (std::uint32_t layer = 0; layer <= g.levels[i]; ++layer) {
            const std::uint32_t deg = r.read_u32();
            if (deg > degree_cap(g, layer)) {
                throw DataError("graph file " + path.string() + ": degree above cap");
            }
            g.adj[i][layer].resize(deg);
            r.read_span(std::span<std::uint32_t>(g.adj[i][layer]));
            for (std::uint32_t n : g.adj[i][layer]) {
                if (n >= count) {
                    throw DataError("graph file " + path.string() +
                                    ": neighbor id out of range");
                }
            }
        }
    }
    if (!r.at_eof()) {
        throw SizeMismatchError("graph file " + path.string() + ": trailing bytes");
    }
    return g;
}

}  // namespace mvr
