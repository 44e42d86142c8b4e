#pragma once

// Height configurations, toppling and stabilization, addition operators, the
// sandpile Markov chain and the burning test for recurrence.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "sandlab/lattice.hpp"
#include "sandlab/rng.hpp"

namespace sandlab {

using Height = std::uint64_t;

/// eta : V -> {0, 1, 2, ...}, indexed by site. Interpretation (stable or not,
/// which graph) is supplied by the functions that take it.
struct HeightConfig {
    std::vector<Height> heights;

    static HeightConfig filled(const WiredGraph& g, Height h) { return {std::vector<Height>(g.size(), h)}; }

    Height& operator[](Site x) { return heights[x]; }
    Height operator[](Site x) const { return heights[x]; }
    std::size_t size() const { return heights.size(); }

    friend bool operator==(const HeightConfig&, const HeightConfig&) = default;
};

/// 1 where a site may topple.
using SiteMask = std::vector<std::uint8_t>;

enum class Schedule {
    Fifo,  ///< queue of unstable sites, each topples floor(h / 2d) times at once
    Lifo,  ///< stack, one toppling per visit
};

/// Per-site toppling counts of one stabilization.
struct Odometer {
    std::vector<std::uint64_t> counts;

    Odometer() = default;
    explicit Odometer(Site n) : counts(n, 0) {}

    std::uint64_t operator[](Site x) const { return counts[x]; }
    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
    /// The avalanche cluster Av.
    std::vector<Site> toppled() const {
        std::vector<Site> out;
        for (Site x = 0; x < counts.size(); ++x)
            if (counts[x] > 0) out.push_back(x);
        return out;
    }

    friend bool operator==(const Odometer&, const Odometer&) = default;
};

inline void check_config(const WiredGraph& g, const HeightConfig& cfg) {
    require(cfg.size() == g.size(), "configuration size does not match the graph");
}

inline bool is_stable(const WiredGraph& g, const HeightConfig& cfg) {
    check_config(g, cfg);
    const auto deg = static_cast<Height>(g.degree());
    return std::all_of(cfg.heights.begin(), cfg.heights.end(), [deg](Height h) { return h < deg; });
}

namespace detail {

inline void push_if_unstable(const WiredGraph& g, const HeightConfig& cfg, const SiteMask* mask, Site y,
                             std::vector<Site>& work, std::vector<std::uint8_t>& queued) {
    if (queued[y] || cfg[y] < static_cast<Height>(g.degree())) return;
    if (mask && !(*mask)[y]) return;
    queued[y] = 1;
    work.push_back(y);
}

}  // namespace detail

/// Topples unstable sites (restricted to `mask` when given) until none is
/// left, accumulating into `odo`. Only sites in `seeds` are inspected
/// initially; pass every site to stabilize an arbitrary configuration.
inline void stabilize_from(const WiredGraph& g, HeightConfig& cfg, Odometer& odo, const std::vector<Site>& seeds,
                           const SiteMask* mask = nullptr, Schedule schedule = Schedule::Fifo) {
    const auto deg = static_cast<Height>(g.degree());
    const int slots = g.degree();
    std::vector<Site> work;
    std::vector<std::uint8_t> queued(g.size(), 0);
    for (Site x : seeds) detail::push_if_unstable(g, cfg, mask, x, work, queued);

    if (schedule == Schedule::Fifo) {
        std::size_t head = 0;
        while (head < work.size()) {
            const Site x = work[head++];
            queued[x] = 0;
            const Height k = cfg[x] / deg;
            if (k > 0) {
                cfg[x] -= k * deg;
                odo.counts[x] += k;
                const Site* row = g.neighbour_row(x);
                for (int s = 0; s < slots; ++s) {
                    const Site y = row[s];
                    if (g.is_sink(y)) continue;
                    cfg[y] += k;
                    detail::push_if_unstable(g, cfg, mask, y, work, queued);
                }
            }
            if (head > 4096 && head * 2 > work.size()) {
                work.erase(work.begin(), work.begin() + static_cast<std::ptrdiff_t>(head));
                head = 0;
            }
        }
    } else {
        while (!work.empty()) {
            const Site x = work.back();
            work.pop_back();
            queued[x] = 0;
            if (cfg[x] < deg) continue;
            cfg[x] -= deg;
            odo.counts[x] += 1;
            detail::push_if_unstable(g, cfg, mask, x, work, queued);
            const Site* row = g.neighbour_row(x);
            for (int s = 0; s < slots; ++s) {
                const Site y = row[s];
                if (!g.is_sink(y)) {
                    cfg[y] += 1;
                    detail::push_if_unstable(g, cfg, mask, y, work, queued);
                }
            }
        }
    }
}

struct StabilizeResult {
    HeightConfig config;
    Odometer odometer;
};

/// Stabilization eta -> eta°, or the restricted stabilization when `mask` is given.
inline StabilizeResult stabilize(const WiredGraph& g, HeightConfig cfg, const SiteMask* mask = nullptr,
                                 Schedule schedule = Schedule::Fifo) {
    check_config(g, cfg);
    if (mask) require(mask->size() == g.size(), "mask size does not match the graph");
    std::vector<Site> all(g.size());
    for (Site x = 0; x < g.size(); ++x) all[x] = x;
    Odometer odo(g.size());
    stabilize_from(g, cfg, odo, all, mask, schedule);
    return {std::move(cfg), std::move(odo)};
}

/// Exact integer check of final = initial - sum_x n(x) Delta_V(x, .).
inline bool conserved(const WiredGraph& g, const HeightConfig& initial, const HeightConfig& final_cfg,
                      const Odometer& odo) {
    for (Site y = 0; y < g.size(); ++y) {
        __int128 expect = static_cast<__int128>(initial[y]) - static_cast<__int128>(g.degree()) * odo[y];
        for (int s = 0; s < g.degree(); ++s) {
            Site x = g.neighbour(y, s);
            if (!g.is_sink(x)) expect += odo[x];
        }
        if (expect != static_cast<__int128>(final_cfg[y])) return false;
    }
    return true;
}

/// Observables of one avalanche started at `source`.
struct AvalancheSummary {
    std::uint64_t waves = 0;         ///< N = n(source, source)
    std::uint64_t topplings = 0;     ///< S
    std::uint64_t cluster_size = 0;  ///< |Av|
    double radius = 0;               ///< R, Euclidean, from the source
    int radius_inf = 0;              ///< R_inf, l-infinity

    friend bool operator==(const AvalancheSummary&, const AvalancheSummary&) = default;
};

inline AvalancheSummary summarize(const WiredGraph& g, const Odometer& odo, Site source) {
    AvalancheSummary s;
    s.waves = odo[source];
    long long r2 = 0;
    for (Site x = 0; x < g.size(); ++x) {
        if (odo[x] == 0) continue;
        s.topplings += odo[x];
        ++s.cluster_size;
        r2 = std::max(r2, g.euclidean_sq(x, source));
        s.radius_inf = std::max(s.radius_inf, g.linf(x, source));
    }
    s.radius = std::sqrt(static_cast<double>(r2));
    return s;
}

struct Avalanche {
    HeightConfig config;
    AvalancheSummary summary;
    Odometer odometer;
};

/// The addition operator a_x : eta -> (eta + 1_x)°.
inline Avalanche add_and_stabilize(const WiredGraph& g, HeightConfig cfg, Site x) {
    check_config(g, cfg);
    require(x < g.size(), "addition site outside the box");
    cfg[x] += 1;
    Odometer odo(g.size());
    stabilize_from(g, cfg, odo, {x});
    AvalancheSummary summary = summarize(g, odo, x);
    return {std::move(cfg), summary, std::move(odo)};
}

/// One step of the sandpile Markov chain: add at a uniform site and stabilize.
inline void markov_step_in_place(const WiredGraph& g, HeightConfig& cfg, Stream& rng) {
    const Site x = rng.below(g.size());
    cfg[x] += 1;
    Odometer odo(g.size());
    stabilize_from(g, cfg, odo, {x});
}

inline HeightConfig markov_step(const WiredGraph& g, HeightConfig cfg, Stream& rng) {
    check_config(g, cfg);
    markov_step_in_place(g, cfg, rng);
    return cfg;
}

/// Result of the parallel burning test; s burns at time 0.
struct BurnResult {
    bool recurrent = false;
    std::vector<int> burn_time;  ///< -1 for sites that never burn
    int rounds = 0;
};

/// Burning test from the sink. With `primed` set, the test runs on H' where
/// that vertex carries one extra edge to s (degree 2d+1).
inline BurnResult burn(const WiredGraph& g, const HeightConfig& cfg, std::optional<Site> primed = std::nullopt) {
    check_config(g, cfg);
    const Site n = g.size();
    const int deg = g.degree();
    BurnResult out;
    out.burn_time.assign(n, -1);
    // burnt_edges[x]: edges from x to burnt vertices (s included).
    std::vector<int> burnt_edges(n);
    std::vector<Site> frontier;
    for (Site x = 0; x < n; ++x) {
        burnt_edges[x] = g.sink_edges(x) + (primed && *primed == x ? 1 : 0);
        if (burnt_edges[x] > 0) frontier.push_back(x);
    }
    auto degree_of = [&](Site x) { return deg + (primed && *primed == x ? 1 : 0); };
    Site burnt_count = 0;
    std::vector<Site> fresh;
    std::vector<std::uint8_t> candidate(n, 0);
    for (int t = 1; !frontier.empty(); ++t) {
        fresh.clear();
        for (Site x : frontier) {
            candidate[x] = 0;
            if (out.burn_time[x] >= 0) continue;
            if (static_cast<long long>(cfg[x]) >= degree_of(x) - burnt_edges[x]) fresh.push_back(x);
        }
        frontier.clear();
        if (fresh.empty()) break;
        out.rounds = t;
        for (Site x : fresh) out.burn_time[x] = t;
        burnt_count += static_cast<Site>(fresh.size());
        for (Site x : fresh) {
            for (int s = 0; s < deg; ++s) {
                Site y = g.neighbour(x, s);
                if (g.is_sink(y) || out.burn_time[y] >= 0) continue;
                ++burnt_edges[y];
                if (!candidate[y]) {
                    candidate[y] = 1;
                    frontier.push_back(y);
                }
            }
        }
    }
    out.recurrent = burnt_count == n;
    return out;
}

/// Stable and passes the burning test.
inline bool is_recurrent(const WiredGraph& g, const HeightConfig& cfg) {
    return is_stable(g, cfg) && burn(g, cfg).recurrent;
}

/// eta = 2d - 1 everywhere.
inline HeightConfig maximal_stable(const WiredGraph& g) { return HeightConfig::filled(g, g.degree() - 1); }

/// phi_R: 2d-1 on V(R), 2d-2 elsewhere, on a cube of half-side at least R+2.
inline HeightConfig maximal_config(const WiredGraph& g, int R) {
    require(R >= 0, "R must be nonnegative");
    require(g.spec().shape == Shape::Cube && g.spec().half_side >= R + 2,
            "maximal_config needs a cube of half-side at least R+2");
    HeightConfig cfg = HeightConfig::filled(g, g.degree() - 2);
    const Site o = g.origin();
    for (Site x = 0; x < g.size(); ++x)
        if (g.linf(x, o) <= R) cfg[x] = g.degree() - 1;
    return cfg;
}

}  // namespace sandlab
