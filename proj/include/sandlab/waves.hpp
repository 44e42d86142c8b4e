#pragma once

// Wave decomposition of an avalanche. A wave topples the source once and then
// every other site that can topple without the source toppling again. The
// configuration seen just before wave k is the intermediate configuration
// eta_k; it has 2d grains at the source, which makes it stable on H' (the
// graph with one extra source-sink edge) but not on H.

#include <cstdint>
#include <vector>

#include "sandlab/sandpile.hpp"

namespace sandlab {

struct WaveRecord {
    int index = 0;             ///< 1-based
    std::vector<Site> sites;   ///< W_k, each site once, ascending
    bool last_wave = false;
};

/// Heights on H together with the marked vertex w; eta*(w) = 2d.
struct IntermediateConfig {
    HeightConfig config;
    Site marked = kNoSite;

    friend bool operator==(const IntermediateConfig&, const IntermediateConfig&) = default;
};

struct WaveDecomposition {
    std::vector<WaveRecord> waves;
    std::vector<IntermediateConfig> intermediates;  ///< intermediates[k-1] precedes waves[k-1]
    HeightConfig final_config;
    Odometer odometer;  ///< sum over waves of the wave indicators
};

namespace detail {

/// Runs one wave on `cfg` in place (cfg(w) >= 2d): topple w once, then
/// stabilize everything except w. Returns the wave's odometer.
inline Odometer run_wave(const WiredGraph& g, HeightConfig& cfg, Site w, const SiteMask& without_w) {
    const auto deg = static_cast<Height>(g.degree());
    Odometer odo(g.size());
    cfg[w] -= deg;
    odo.counts[w] = 1;
    std::vector<Site> seeds;
    for (int s = 0; s < g.degree(); ++s) {
        Site y = g.neighbour(w, s);
        if (g.is_sink(y)) continue;
        cfg[y] += 1;
        seeds.push_back(y);
    }
    stabilize_from(g, cfg, odo, seeds, &without_w);
    return odo;
}

inline SiteMask mask_without(const WiredGraph& g, Site w) {
    SiteMask m(g.size(), 1);
    m[w] = 0;
    return m;
}

}  // namespace detail

inline void check_intermediate(const WiredGraph& g, const IntermediateConfig& eta) {
    check_config(g, eta.config);
    require(eta.marked < g.size(), "marked vertex outside the box");
    require(eta.config[eta.marked] == static_cast<Height>(g.degree()),
            "not an intermediate configuration: marked vertex must hold exactly 2d grains");
    for (Site x = 0; x < g.size(); ++x)
        if (x != eta.marked) require(eta.config[x] < static_cast<Height>(g.degree()), "intermediate configuration unstable off the marked vertex");
}

/// Waves and intermediate configurations of adding one grain at w to a
/// stable configuration.
inline WaveDecomposition decompose_waves(const WiredGraph& g, const HeightConfig& cfg, Site w) {
    require(is_stable(g, cfg), "decompose_waves requires a stable configuration");
    require(w < g.size(), "source outside the box");
    const auto deg = static_cast<Height>(g.degree());
    WaveDecomposition out;
    out.odometer = Odometer(g.size());
    HeightConfig cur = cfg;
    cur[w] += 1;
    const SiteMask without_w = detail::mask_without(g, w);
    while (cur[w] >= deg) {
        ensure(cur[w] == deg, "source exceeded 2d grains between waves");
        out.intermediates.push_back({cur, w});
        Odometer wave = detail::run_wave(g, cur, w, without_w);
        WaveRecord rec;
        rec.index = static_cast<int>(out.waves.size()) + 1;
        for (Site x = 0; x < g.size(); ++x) {
            if (wave[x] == 0) continue;
            ensure(wave[x] == 1, "a site toppled twice within one wave");
            rec.sites.push_back(x);
            out.odometer.counts[x] += 1;
        }
        out.waves.push_back(std::move(rec));
    }
    if (!out.waves.empty()) out.waves.back().last_wave = true;
    out.final_config = std::move(cur);
    return out;
}

/// W(eta*): sites toppled by a'_w(eta*).
inline std::vector<Site> wave_of(const WiredGraph& g, const IntermediateConfig& eta) {
    check_intermediate(g, eta);
    HeightConfig cur = eta.config;
    Odometer odo = detail::run_wave(g, cur, eta.marked, detail::mask_without(g, eta.marked));
    return odo.toppled();
}

/// True iff some neighbour of w (s included) stays out of W(eta*), i.e. the
/// wave represented by eta* is the last one.
inline bool last_wave_test(const WiredGraph& g, const IntermediateConfig& eta) {
    std::vector<Site> w_sites = wave_of(g, eta);
    std::vector<std::uint8_t> in(g.size(), 0);
    for (Site x : w_sites) in[x] = 1;
    for (int s = 0; s < g.degree(); ++s) {
        Site y = g.neighbour(eta.marked, s);
        if (g.is_sink(y) || !in[y]) return true;
    }
    return false;
}

/// n(w, .) for adding one grain at w.
inline Odometer toppling_counts(const WiredGraph& g, const HeightConfig& cfg, Site w) {
    require(is_stable(g, cfg), "toppling_counts requires a stable configuration");
    return add_and_stabilize(g, cfg, w).odometer;
}

}  // namespace sandlab
