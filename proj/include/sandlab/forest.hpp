#pragma once

// Rooted spanning forests of a wired box, Wilson's algorithm, the burning
// bijection between recurrent configurations and spanning trees, and the
// two-component bijection for intermediate configurations.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "sandlab/sandpile.hpp"
#include "sandlab/walks.hpp"
#include "sandlab/waves.hpp"

namespace sandlab {

/// Each non-root site stores the edge slot leading to its parent. The sink is
/// always a root; `roots` lists any additional root sites.
struct RootedForest {
    std::vector<std::int8_t> parent_slot;  ///< -1 at roots
    std::vector<Site> roots;               ///< ascending

    std::size_t edge_count() const {
        return static_cast<std::size_t>(std::count_if(parent_slot.begin(), parent_slot.end(), [](std::int8_t s) { return s >= 0; }));
    }

    friend bool operator==(const RootedForest&, const RootedForest&) = default;
};

inline Site parent_of(const WiredGraph& g, const RootedForest& f, Site x) {
    return f.parent_slot[x] < 0 ? kNoSite : g.neighbour(x, f.parent_slot[x]);
}

/// Root (a site, or g.sink()) of every site's component, plus depth to it.
/// Throws ConfigError if the parent map has a cycle or a malformed entry.
struct ForestShape {
    std::vector<Site> root_of;
    std::vector<int> depth;
};

inline ForestShape forest_shape(const WiredGraph& g, const RootedForest& f) {
    const Site n = g.size();
    require(f.parent_slot.size() == n, "forest size does not match the graph");
    ForestShape out{std::vector<Site>(n, kNoSite), std::vector<int>(n, -1)};
    std::vector<std::uint8_t> is_root(n, 0);
    for (Site r : f.roots) {
        require(r < n, "root outside the box");
        is_root[r] = 1;
    }
    std::vector<Site> chain;
    for (Site x = 0; x < n; ++x) {
        if (out.depth[x] >= 0) continue;
        chain.clear();
        Site u = x;
        Site root = kNoSite;
        int base = 0;
        while (true) {
            if (g.is_sink(u)) { root = u; base = 0; break; }
            if (out.depth[u] >= 0) { root = out.root_of[u]; base = out.depth[u]; break; }
            if (f.parent_slot[u] < 0) {
                require(is_root[u], "site without parent is not a declared root");
                out.root_of[u] = u;
                out.depth[u] = 0;
                root = u;
                base = 0;
                break;
            }
            require(f.parent_slot[u] < g.degree(), "parent slot out of range");
            require(chain.size() <= n, "parent map contains a cycle");
            chain.push_back(u);
            u = g.neighbour(u, f.parent_slot[u]);
        }
        for (std::size_t i = chain.size(); i-- > 0;) {
            out.root_of[chain[i]] = root;
            out.depth[chain[i]] = ++base;
        }
    }
    for (Site r : f.roots) require(f.parent_slot[r] < 0, "declared root has a parent");
    return out;
}

inline bool is_valid_forest(const WiredGraph& g, const RootedForest& f) {
    try {
        forest_shape(g, f);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

/// Wilson's algorithm on G_V with root set `roots` plus s: a uniform sample
/// among spanning forests in which every component contains exactly one root.
/// `order` lists start vertices; empty means row-major.
inline RootedForest wilson(const WiredGraph& g, std::span<const Site> roots, std::span<const Site> order, Stream& rng) {
    const Site n = g.size();
    RootedForest f;
    f.parent_slot.assign(n, -1);
    f.roots.assign(roots.begin(), roots.end());
    std::sort(f.roots.begin(), f.roots.end());
    f.roots.erase(std::unique(f.roots.begin(), f.roots.end()), f.roots.end());

    std::vector<std::uint8_t> in_tree(static_cast<std::size_t>(n) + 1, 0);
    in_tree[n] = 1;
    for (Site r : f.roots) {
        require(r < n, "root outside the box");
        in_tree[r] = 1;
    }
    std::vector<std::int8_t> next(n, -1);
    const auto deg = static_cast<std::uint32_t>(g.degree());
    auto grow_from = [&](Site v) {
        Site u = v;
        while (!in_tree[u]) {
            const auto slot = static_cast<std::int8_t>(rng.below(deg));
            next[u] = slot;
            u = g.neighbour(u, slot);
        }
        u = v;
        while (!in_tree[u]) {
            in_tree[u] = 1;
            f.parent_slot[u] = next[u];
            u = g.neighbour(u, next[u]);
        }
    };
    if (order.empty()) {
        for (Site v = 0; v < n; ++v) grow_from(v);
    } else {
        for (Site v : order) {
            require(v < n, "order lists a site outside the box");
            grow_from(v);
        }
        for (Site v = 0; v < n; ++v) require(in_tree[v], "order does not cover every site");
    }
    return f;
}

inline RootedForest wilson(const WiredGraph& g, std::span<const Site> roots, Stream& rng) {
    return wilson(g, roots, {}, rng);
}

/// Uniform spanning tree of G_V.
inline RootedForest uniform_spanning_tree(const WiredGraph& g, Stream& rng) { return wilson(g, {}, {}, rng); }

/// phi: recurrent configuration -> spanning tree. Each y attaches to a
/// neighbour burnt one round earlier: the i-th such edge in slot order, where
/// eta(y) = 2d - P_y + i.
inline RootedForest burning_bijection(const WiredGraph& g, const HeightConfig& cfg) {
    require(is_stable(g, cfg), "burning bijection requires a stable configuration");
    BurnResult b = burn(g, cfg);
    require(b.recurrent, "configuration is not recurrent: burning stalls");
    const int deg = g.degree();
    auto time_of = [&](Site v) { return g.is_sink(v) ? 0 : b.burn_time[v]; };
    RootedForest t;
    t.parent_slot.assign(g.size(), -1);
    for (Site y = 0; y < g.size(); ++y) {
        const int ty = b.burn_time[y];
        int p = 0;
        std::int8_t chosen = -1;
        int rank = 0;
        for (int s = 0; s < deg; ++s)
            if (time_of(g.neighbour(y, s)) < ty) ++p;
        const long long i = static_cast<long long>(cfg[y]) - deg + p;
        for (int s = 0; s < deg; ++s) {
            if (time_of(g.neighbour(y, s)) != ty - 1) continue;
            if (rank == i) chosen = static_cast<std::int8_t>(s);
            ++rank;
        }
        ensure(i >= 0 && chosen >= 0, "burning rule violated while building the tree");
        t.parent_slot[y] = chosen;
    }
    return t;
}

/// phi^{-1}: burn times are tree depths; eta(y) = 2d - P_y + rank of y's tree
/// edge among edges to depth(y) - 1.
inline HeightConfig inverse_burning(const WiredGraph& g, const RootedForest& tree) {
    require(tree.roots.empty(), "inverse burning expects a spanning tree rooted at s");
    ForestShape shape = forest_shape(g, tree);
    const int deg = g.degree();
    auto depth_of = [&](Site v) { return g.is_sink(v) ? 0 : shape.depth[v]; };
    HeightConfig cfg{std::vector<Height>(g.size(), 0)};
    for (Site y = 0; y < g.size(); ++y) {
        const int dy = shape.depth[y];
        int p = 0;
        int rank = -1;
        int seen = 0;
        for (int s = 0; s < deg; ++s) {
            const int dn = depth_of(g.neighbour(y, s));
            if (dn < dy) ++p;
            if (dn == dy - 1) {
                if (s == tree.parent_slot[y]) rank = seen;
                ++seen;
            }
        }
        ensure(rank >= 0, "tree edge does not lead one level closer to s");
        cfg[y] = static_cast<Height>(deg - p + rank);
    }
    return cfg;
}

/// phi': intermediate configuration at w -> spanning forest rooted at {w, s}.
/// First burns outward from w through the Euclidean balls B_w(0), B_w(1), ...
/// (this is exactly the wave), then completes from s with the ordinary rule.
inline RootedForest wave_bijection(const WiredGraph& g, const IntermediateConfig& eta) {
    check_intermediate(g, eta);
    const Site n = g.size();
    const int deg = g.degree();
    const Site w = eta.marked;
    const HeightConfig& h = eta.config;

    RootedForest f;
    f.parent_slot.assign(n, -1);
    f.roots = {w};

    // Phase 1: layered burning from w. stamp = (round, step); w is (0, 0).
    std::vector<int> round(n, -1), step(n, -1);
    std::vector<int> burnt_edges(n, 0);  // edges to burnt sites; s never burns here
    round[w] = 0;
    step[w] = 0;
    auto mark_burnt = [&](Site x) {
        for (int s = 0; s < deg; ++s) {
            Site y = g.neighbour(x, s);
            if (!g.is_sink(y)) ++burnt_edges[y];
        }
    };
    mark_burnt(w);
    std::vector<Site> fresh;
    for (int r = 1;; ++r) {
        const long long r2 = static_cast<long long>(r) * r;
        bool any = false;
        for (int k = 1;; ++k) {
            fresh.clear();
            for (Site x = 0; x < n; ++x) {
                if (round[x] >= 0 || g.euclidean_sq(x, w) > r2) continue;
                if (static_cast<long long>(h[x]) >= deg - burnt_edges[x]) fresh.push_back(x);
            }
            if (fresh.empty()) break;
            any = true;
            for (Site u : fresh) {
                const long long i = static_cast<long long>(h[u]) - deg + burnt_edges[u];
                int rank = 0;
                for (int s = 0; s < deg; ++s) {
                    Site y = g.neighbour(u, s);
                    if (g.is_sink(y) || round[y] < 0) continue;
                    const bool previous_layer = (k == 1) ? round[y] < r : (round[y] == r && step[y] == k - 1);
                    if (!previous_layer) continue;
                    if (rank == i) f.parent_slot[u] = static_cast<std::int8_t>(s);
                    ++rank;
                }
                ensure(i >= 0 && i < rank, "layered burning rule violated");
            }
            for (Site u : fresh) {
                round[u] = r;
                step[u] = k;
            }
            for (Site u : fresh) mark_burnt(u);
        }
        if (!any) break;
    }

    // Phase 2: burn the rest from s. Edges into the wave count as burnt, but
    // attachments go to s (step 0) or to the previous step of this phase.
    std::vector<int> tstep(n, -1);
    std::vector<int> done_edges(n, 0);
    Site remaining = 0;
    for (Site x = 0; x < n; ++x) {
        if (round[x] >= 0) continue;
        ++remaining;
        done_edges[x] = burnt_edges[x] + g.sink_edges(x);
    }
    for (int k = 1; remaining > 0; ++k) {
        fresh.clear();
        for (Site x = 0; x < n; ++x) {
            if (round[x] >= 0 || tstep[x] >= 0) continue;
            if (static_cast<long long>(h[x]) >= deg - done_edges[x]) fresh.push_back(x);
        }
        require(!fresh.empty(), "not an intermediate configuration: burning from s stalls");
        for (Site u : fresh) {
            const long long i = static_cast<long long>(h[u]) - deg + done_edges[u];
            int rank = 0;
            for (int s = 0; s < deg; ++s) {
                Site y = g.neighbour(u, s);
                const bool previous_layer = (k == 1) ? g.is_sink(y) : (!g.is_sink(y) && tstep[y] == k - 1);
                if (!previous_layer) continue;
                if (rank == i) f.parent_slot[u] = static_cast<std::int8_t>(s);
                ++rank;
            }
            ensure(i >= 0 && i < rank, "burning rule violated in the sink phase");
        }
        for (Site u : fresh) tstep[u] = k;
        for (Site u : fresh)
            for (int s = 0; s < deg; ++s) {
                Site y = g.neighbour(u, s);
                if (!g.is_sink(y)) ++done_edges[y];
            }
        remaining -= static_cast<Site>(fresh.size());
    }
    return f;
}

/// Vertex set of the component rooted at `root`.
inline std::vector<Site> component_sites(const WiredGraph& g, const RootedForest& f, Site root) {
    ForestShape shape = forest_shape(g, f);
    std::vector<Site> out;
    for (Site x = 0; x < g.size(); ++x)
        if (shape.root_of[x] == root) out.push_back(x);
    return out;
}

/// Grows only the component of o in a Wilson sample, choosing start vertices
/// adaptively next to that component. Two modes:
///  - TwoRoot: roots {o, s}; the component is T_o of mu_{L,o}.
///  - Past: roots {s}; o first joins s by a LERW, and the component collects
///    the past of o (sites whose tree path to s runs through o).
/// Scratch arrays are stamped per sample, so repeated samples cost only the
/// sites they touch.
class OriginComponentSampler {
public:
    enum class Mode { TwoRoot, Past };

    OriginComponentSampler(const WiredGraph& g, Site o, Mode mode)
        : g_(&g), o_(o), mode_(mode), stamp_(static_cast<std::size_t>(g.size()) + 1, 0),
          component_(g.size(), 0), next_(g.size(), -1), parent_(g.size(), -1) {
        require(o < g.size(), "origin outside the box");
    }

    /// Sites of the o-component, o first, in order of attachment.
    const std::vector<Site>& sample(Stream& rng) {
        ++gen_;
        sites_.clear();
        queue_.clear();
        stamp_[g_->sink()] = gen_;
        if (mode_ == Mode::Past) {
            // o's own branch to s belongs to the s-side, except o itself.
            walk_and_attach(o_, rng, /*skip_first=*/true);
        }
        visit(o_, true);
        if (mode_ == Mode::TwoRoot) parent_[o_] = -1;
        std::size_t head = 0;
        while (head < queue_.size()) {
            const Site v = queue_[head++];
            if (stamp_[v] == gen_) continue;
            walk_and_attach(v, rng, false);
        }
        return sites_;
    }

    std::int8_t parent_slot(Site x) const { return parent_[x]; }

private:
    void visit(Site x, bool o_side) {
        stamp_[x] = gen_;
        component_[x] = o_side ? 1 : 0;
        if (!o_side) return;
        sites_.push_back(x);
        for (int s = 0; s < g_->degree(); ++s) {
            Site y = g_->neighbour(x, s);
            if (!g_->is_sink(y) && stamp_[y] != gen_) queue_.push_back(y);
        }
    }

    // Wilson step from v: walk until the current forest, retrace the loop
    // erasure and attach it to whichever side the walk hit.
    void walk_and_attach(Site v, Stream& rng, bool skip_first) {
        const auto deg = static_cast<std::uint32_t>(g_->degree());
        Site u = v;
        while (stamp_[u] != gen_) {
            const auto slot = static_cast<std::int8_t>(rng.below(deg));
            next_[u] = slot;
            u = g_->neighbour(u, slot);
        }
        const bool joins_o = !g_->is_sink(u) && component_[u] == 1;
        u = v;
        bool first = true;
        while (stamp_[u] != gen_) {
            const Site nxt = g_->neighbour(u, next_[u]);
            parent_[u] = next_[u];
            if (first && skip_first) {
                // Leave o unstamped so it can be visited as the o-side root.
                first = false;
                u = nxt;
                continue;
            }
            first = false;
            visit(u, joins_o);
            u = nxt;
        }
    }

    const WiredGraph* g_;
    Site o_;
    Mode mode_;
    std::uint32_t gen_ = 0;
    std::vector<std::uint32_t> stamp_;
    std::vector<std::uint8_t> component_;
    std::vector<std::int8_t> next_;
    std::vector<std::int8_t> parent_;
    std::vector<Site> sites_;
    std::vector<Site> queue_;
};

}  // namespace sandlab
