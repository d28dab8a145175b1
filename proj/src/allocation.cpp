#include "sons/allocation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sons {

AllocationProblem build_costs(AllocationProblem p) {
    size_t ns = p.source_displacements.size();
    size_t nt = p.target_displacements.size();
    p.displacement_costs.assign(ns, std::vector<double>(nt, 0.0));
    p.cardinality_costs.assign(ns, std::vector<double>(nt, 0.0));
    for (size_t i = 0; i < ns; ++i) {
        for (size_t j = 0; j < nt; ++j) {
            p.displacement_costs[i][j] =
                distance(p.source_displacements[i], p.target_displacements[j]);
            int sc = i < p.source_cardinalities.size() ? p.source_cardinalities[i] : 1;
            int tc = j < p.target_cardinalities.size() ? p.target_cardinalities[j] : 1;
            p.cardinality_costs[i][j] = std::abs(sc - tc);
        }
    }
    return p;
}

namespace {

// Lexicographic (displacement, cardinality) edge cost.
struct Cost {
    double d = 0.0;
    double c = 0.0;

    Cost operator+(const Cost& o) const { return {d + o.d, c + o.c}; }
    Cost operator-(const Cost& o) const { return {d - o.d, c - o.c}; }
    bool operator<(const Cost& o) const {
        if (d != o.d) return d < o.d;
        return c < o.c;
    }
};

struct Edge {
    int to;
    int cap;
    Cost cost;
    int rev;
};

struct FlowGraph {
    std::vector<std::vector<Edge>> adj;

    explicit FlowGraph(int n) : adj(n) {}

    void add_edge(int from, int to, int cap, Cost cost) {
        adj[from].push_back({to, cap, cost, static_cast<int>(adj[to].size())});
        adj[to].push_back({from, 0, Cost{-cost.d, -cost.c}, static_cast<int>(adj[from].size()) - 1});
    }
};

}  // namespace

Assignment allocate(const AllocationProblem& p) {
    Assignment out;
    int ns = static_cast<int>(p.source_displacements.size());
    int nt = static_cast<int>(p.target_displacements.size());
    out.matched.assign(ns, -1);
    if (ns == 0 || nt == 0) {
        for (int j = 0; j < nt; ++j) out.unmatched_targets.push_back(j);
        for (int i = 0; i < ns; ++i) out.unmatched_sources.push_back(i);
        return out;
    }

    // Nodes: 0 = super source, 1..ns = sources, ns+1..ns+nt = targets, last = sink.
    int n = ns + nt + 2;
    int src = 0, sink = n - 1;
    FlowGraph g(n);
    for (int i = 0; i < ns; ++i) g.add_edge(src, 1 + i, 1, {});
    for (int j = 0; j < nt; ++j) g.add_edge(1 + ns + j, sink, 1, {});

    // Algorithm sorts the displacement costs and carries the cardinality
    // costs through the same transformation; insertion order fixes ties.
    struct Entry {
        double d, c;
        int i, j;
    };
    std::vector<Entry> entries;
    entries.reserve(static_cast<size_t>(ns) * nt);
    for (int i = 0; i < ns; ++i)
        for (int j = 0; j < nt; ++j)
            entries.push_back({p.displacement_costs[i][j], p.cardinality_costs[i][j], i, j});
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.c != b.c) return a.c < b.c;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    for (const auto& e : entries) g.add_edge(1 + e.i, 1 + ns + e.j, 1, {e.d, e.c});

    // Successive shortest augmenting paths (Bellman-Ford; graphs are tiny).
    const Cost kInf{std::numeric_limits<double>::max() / 4, 0.0};
    while (true) {
        std::vector<Cost> dist(n, kInf);
        std::vector<int> pre_node(n, -1), pre_edge(n, -1);
        dist[src] = {};
        bool changed = true;
        while (changed) {
            changed = false;
            for (int v = 0; v < n; ++v) {
                if (dist[v].d >= kInf.d) continue;
                for (int k = 0; k < static_cast<int>(g.adj[v].size()); ++k) {
                    const Edge& e = g.adj[v][k];
                    if (e.cap <= 0) continue;
                    Cost nd = dist[v] + e.cost;
                    if (nd < dist[e.to]) {
                        dist[e.to] = nd;
                        pre_node[e.to] = v;
                        pre_edge[e.to] = k;
                        changed = true;
                    }
                }
            }
        }
        if (dist[sink].d >= kInf.d) break;
        for (int v = sink; v != src; v = pre_node[v]) {
            Edge& e = g.adj[pre_node[v]][pre_edge[v]];
            e.cap -= 1;
            g.adj[e.to][e.rev].cap += 1;
        }
        ++out.augmentations;
    }

    for (int i = 0; i < ns; ++i) {
        for (const Edge& e : g.adj[1 + i]) {
            if (e.to != src && e.cap == 0 && e.to >= 1 + ns && e.to < 1 + ns + nt) {
                out.matched[i] = e.to - 1 - ns;
                out.total_displacement_cost += p.displacement_costs[i][out.matched[i]];
                out.total_cardinality_cost += p.cardinality_costs[i][out.matched[i]];
                break;
            }
        }
        if (out.matched[i] < 0) out.unmatched_sources.push_back(i);
    }
    std::vector<bool> used(nt, false);
    for (int i = 0; i < ns; ++i)
        if (out.matched[i] >= 0) used[out.matched[i]] = true;
    for (int j = 0; j < nt; ++j)
        if (!used[j]) out.unmatched_targets.push_back(j);
    return out;
}

bool substitution_test(const Vec3& d_child, const Vec3& d_star_child, const Vec3& d_self,
                       const Vec3& d_star_self) {
    if (d_star_child.norm() < 1e-12 || d_star_self.norm() < 1e-12) return false;
    double lhs = dot(d_child, normalized(d_star_child));
    double rhs = dot(d_self, normalized(d_star_self));
    return lhs < rhs;
}

}  // namespace sons
