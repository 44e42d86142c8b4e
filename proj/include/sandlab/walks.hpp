#pragma once

// Simple random walks on a wired box and their chronological loop erasures.
// A walk that takes a sink-edge slot steps into s, which always absorbs.

#include <cstdint>
#include <span>
#include <vector>

#include "sandlab/lattice.hpp"
#include "sandlab/rng.hpp"

namespace sandlab {

enum class StopReason {
    HitTarget,     ///< entered the absorbing set
    HitForbidden,  ///< entered the forbidden set
    ExitedToSink,  ///< stepped into s
    StepCap,       ///< exceeded the step cap
};

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::HitTarget: return "hit-target";
        case StopReason::HitForbidden: return "hit-forbidden";
        case StopReason::ExitedToSink: return "exited";
        case StopReason::StepCap: return "step-cap";
    }
    return "?";
}

inline constexpr std::uint64_t kDefaultStepCap = 10'000'000'000ULL;

/// Site sequence of a walk; the last entry may be the sink.
struct WalkPath {
    std::vector<Site> sites;
    std::vector<std::int8_t> slots;  ///< slots[i] is the edge slot taken from sites[i]
    StopReason reason = StopReason::HitTarget;
};

struct LerwPath {
    std::vector<Site> sites;         ///< self-avoiding; last entry may be the sink
    std::vector<std::int8_t> slots;  ///< slots[i] joins sites[i] to sites[i+1]
    StopReason reason = StopReason::HitTarget;
    std::uint64_t walk_steps = 0;    ///< length of the underlying simple walk
};

namespace detail {

inline bool flagged(std::span<const std::uint8_t> set, Site x) { return !set.empty() && x < set.size() && set[x]; }

}  // namespace detail

/// Simple random walk from `start` until it enters `absorb`, enters `forbid`,
/// or steps into s.
inline WalkPath random_walk(const WiredGraph& g, Site start, std::span<const std::uint8_t> absorb,
                            std::span<const std::uint8_t> forbid, Stream& rng,
                            std::uint64_t step_cap = kDefaultStepCap) {
    require(start < g.size(), "walk start outside the box");
    WalkPath w;
    Site x = start;
    w.sites.push_back(x);
    for (std::uint64_t steps = 0;; ++steps) {
        if (detail::flagged(absorb, x)) { w.reason = StopReason::HitTarget; break; }
        if (detail::flagged(forbid, x)) { w.reason = StopReason::HitForbidden; break; }
        if (steps == step_cap) { w.reason = StopReason::StepCap; break; }
        auto slot = static_cast<int>(rng.below(static_cast<std::uint32_t>(g.degree())));
        w.slots.push_back(static_cast<std::int8_t>(slot));
        x = g.neighbour(x, slot);
        w.sites.push_back(x);
        if (g.is_sink(x)) { w.reason = StopReason::ExitedToSink; break; }
    }
    return w;
}

/// Forward chronological loop erasure of a finite path.
inline LerwPath loop_erase(const WiredGraph& g, const WalkPath& walk) {
    LerwPath out;
    out.reason = walk.reason;
    out.walk_steps = walk.slots.size();
    std::vector<std::int64_t> pos(static_cast<std::size_t>(g.size()) + 1, -1);
    for (std::size_t i = 0; i < walk.sites.size(); ++i) {
        const Site x = walk.sites[i];
        if (pos[x] >= 0) {
            auto keep = static_cast<std::size_t>(pos[x]) + 1;
            for (std::size_t j = keep; j < out.sites.size(); ++j) pos[out.sites[j]] = -1;
            out.sites.resize(keep);
            out.slots.resize(keep - 1);
        } else {
            pos[x] = static_cast<std::int64_t>(out.sites.size());
            out.sites.push_back(x);
            if (i > 0) out.slots.push_back(walk.slots[i - 1]);
        }
    }
    return out;
}

/// Reusable scratch for lerw(); holds one index per site of a fixed graph.
class LerwWorkspace {
public:
    explicit LerwWorkspace(const WiredGraph& g) : pos_(static_cast<std::size_t>(g.size()) + 1, -1) {}
    std::vector<std::int32_t>& positions() { return pos_; }

private:
    std::vector<std::int32_t> pos_;
};

/// Loop-erased random walk from `start`, erasing each loop as soon as it
/// closes so memory stays proportional to the current path. Stops on entering
/// `absorb` (or s), or `forbid`.
inline LerwPath lerw(const WiredGraph& g, Site start, std::span<const std::uint8_t> absorb,
                     std::span<const std::uint8_t> forbid, Stream& rng, LerwWorkspace& ws,
                     std::uint64_t step_cap = kDefaultStepCap) {
    require(start < g.size(), "walk start outside the box");
    auto& pos = ws.positions();
    LerwPath p;
    Site x = start;
    p.sites.push_back(x);
    pos[x] = 0;
    const auto deg = static_cast<std::uint32_t>(g.degree());
    std::uint64_t steps = 0;
    while (true) {
        if (detail::flagged(absorb, x)) { p.reason = StopReason::HitTarget; break; }
        if (detail::flagged(forbid, x)) { p.reason = StopReason::HitForbidden; break; }
        if (g.is_sink(x)) { p.reason = StopReason::ExitedToSink; break; }
        if (steps == step_cap) { p.reason = StopReason::StepCap; break; }
        const auto slot = static_cast<int>(rng.below(deg));
        ++steps;
        const Site y = g.neighbour(x, slot);
        if (pos[y] >= 0) {
            auto keep = static_cast<std::size_t>(pos[y]) + 1;
            for (std::size_t j = keep; j < p.sites.size(); ++j) pos[p.sites[j]] = -1;
            p.sites.resize(keep);
            p.slots.resize(keep - 1);
        } else {
            p.slots.push_back(static_cast<std::int8_t>(slot));
            pos[y] = static_cast<std::int32_t>(p.sites.size());
            p.sites.push_back(y);
        }
        x = y;
    }
    for (Site v : p.sites) pos[v] = -1;
    p.walk_steps = steps;
    return p;
}

}  // namespace sandlab
