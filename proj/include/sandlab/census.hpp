#pragma once

// Brute-force ground truth on tiny wired graphs: every stable configuration,
// the recurrent ones, every spanning tree, every two-component forest and
// every intermediate configuration, with the cardinality identities that tie
// them to Laplacian determinants. Also Pearson chi-square helpers.

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sandlab/forest.hpp"
#include "sandlab/laplacian.hpp"
#include "sandlab/waves.hpp"

namespace sandlab {

inline constexpr Site kCensusVertexLimit = 12;
inline constexpr std::uint64_t kCensusStateLimit = std::uint64_t{1} << 25;
inline constexpr std::size_t kCensusListLimit = 1'000'000;

/// Lexicographic integer codes: site 0 is the most significant digit.
inline std::uint64_t encode_config(const HeightConfig& cfg, std::uint64_t base) {
    std::uint64_t c = 0;
    for (Height h : cfg.heights) c = c * base + h;
    return c;
}

inline HeightConfig decode_config(std::uint64_t code, Site n, std::uint64_t base) {
    HeightConfig cfg{std::vector<Height>(n, 0)};
    for (Site i = n; i-- > 0;) {
        cfg[i] = code % base;
        code /= base;
    }
    return cfg;
}

/// Digit 2d marks a root.
inline std::uint64_t encode_forest(const WiredGraph& g, const RootedForest& f) {
    const std::uint64_t base = static_cast<std::uint64_t>(g.degree()) + 1;
    std::uint64_t c = 0;
    for (std::int8_t s : f.parent_slot) c = c * base + (s < 0 ? base - 1 : static_cast<std::uint64_t>(s));
    return c;
}

inline RootedForest decode_forest(const WiredGraph& g, std::uint64_t code) {
    const std::uint64_t base = static_cast<std::uint64_t>(g.degree()) + 1;
    RootedForest f;
    f.parent_slot.assign(g.size(), -1);
    for (Site i = g.size(); i-- > 0;) {
        const std::uint64_t digit = code % base;
        code /= base;
        if (digit == base - 1) f.roots.insert(f.roots.begin(), i);
        else f.parent_slot[i] = static_cast<std::int8_t>(digit);
    }
    return f;
}

struct ExhaustiveCensus {
    std::string instance;
    std::optional<Site> marked;

    std::uint64_t stable = 0;
    std::uint64_t recurrent = 0;
    std::uint64_t trees = 0;
    std::uint64_t intermediate = 0;      ///< |R' \ R| at the marked vertex
    std::uint64_t primed_recurrent = 0;  ///< |R'|
    std::uint64_t two_forests = 0;       ///< forests rooted at {w, s}
    std::uint64_t last_waves = 0;        ///< intermediates passing the last-wave test

    BigInt det = 0;
    BigInt det_primed = 0;
    Rational green_ww = 0;

    // Object lists as codes, ascending; empty when above kCensusListLimit.
    std::vector<std::uint64_t> recurrent_codes;     ///< base 2d
    std::vector<std::uint64_t> tree_codes;          ///< encode_forest
    std::vector<std::uint64_t> intermediate_codes;  ///< base 2d+1
    std::vector<std::uint64_t> forest_codes;        ///< encode_forest
};

namespace detail {

// Advances a little-endian odometer of digits in [0, base); false on wrap.
inline bool next_digits(std::vector<int>& digits, int base, Site skip = kNoSite) {
    for (std::size_t i = digits.size(); i-- > 0;) {
        if (i == skip) continue;
        if (++digits[i] < base) return true;
        digits[i] = 0;
    }
    return false;
}

inline bool parent_map_is_forest(const WiredGraph& g, const std::vector<int>& slots, Site root) {
    const Site n = g.size();
    std::vector<std::uint8_t> state(n, 0);  // 0 unknown, 1 on stack, 2 reaches a root
    if (root != kNoSite) state[root] = 2;
    std::vector<Site> chain;
    for (Site x = 0; x < n; ++x) {
        chain.clear();
        Site u = x;
        while (!g.is_sink(u) && state[u] == 0) {
            state[u] = 1;
            chain.push_back(u);
            u = g.neighbour(u, slots[u]);
        }
        if (!g.is_sink(u) && state[u] == 1) return false;
        for (Site v : chain) state[v] = 2;
    }
    return true;
}

}  // namespace detail

/// Exhaustive census; when `w` is given, also the primed-graph objects at w.
/// Throws ResourceError above kCensusVertexLimit sites or kCensusStateLimit
/// states, and InvariantViolation if any cardinality identity fails.
inline ExhaustiveCensus census(const WiredGraph& g, std::optional<Site> w = std::nullopt) {
    const Site n = g.size();
    const int deg = g.degree();
    if (n > kCensusVertexLimit) throw ResourceError("census: too many vertices for full enumeration");
    const double states = std::pow(static_cast<double>(deg + 1), static_cast<double>(n));
    if (states > static_cast<double>(kCensusStateLimit)) throw ResourceError("census: state space too large");
    if (w) require(*w < n, "census: marked vertex outside the box");

    ExhaustiveCensus c;
    c.instance = g.spec().describe();
    c.marked = w;
    const bool keep = std::pow(static_cast<double>(deg), static_cast<double>(n)) <= static_cast<double>(kCensusListLimit);

    // Stable and recurrent configurations, lexicographic.
    {
        std::vector<int> digits(n, 0);
        HeightConfig cfg{std::vector<Height>(n, 0)};
        do {
            for (Site i = 0; i < n; ++i) cfg[i] = static_cast<Height>(digits[i]);
            ++c.stable;
            if (burn(g, cfg).recurrent) {
                ++c.recurrent;
                if (keep) c.recurrent_codes.push_back(encode_config(cfg, deg));
            }
        } while (detail::next_digits(digits, deg));
    }
    // Spanning trees as parent-slot maps.
    {
        std::vector<int> digits(n, 0);
        do {
            if (detail::parent_map_is_forest(g, digits, kNoSite)) {
                ++c.trees;
                if (keep) {
                    RootedForest f;
                    f.parent_slot.assign(digits.begin(), digits.end());
                    c.tree_codes.push_back(encode_forest(g, f));
                }
            }
        } while (detail::next_digits(digits, deg));
    }
    c.det = spanning_tree_count(g, std::nullopt, true).exact.value();
    ensure(c.recurrent == c.det, "census: recurrent count differs from det(Laplacian)");
    ensure(c.trees == c.det, "census: spanning tree count differs from det(Laplacian)");

    if (w) {
        const Site mw = *w;
        c.det_primed = spanning_tree_count(g, mw, true).exact.value();
        c.green_ww = green_rational(g, mw, mw);
        // R' on H': height at w ranges over 0..2d.
        std::vector<int> digits(n, 0);
        HeightConfig cfg{std::vector<Height>(n, 0)};
        while (true) {
            for (Site i = 0; i < n; ++i) cfg[i] = static_cast<Height>(digits[i]);
            if (burn(g, cfg, mw).recurrent) {
                ++c.primed_recurrent;
                if (cfg[mw] == static_cast<Height>(deg)) {
                    ++c.intermediate;
                    if (keep) c.intermediate_codes.push_back(encode_config(cfg, deg + 1));
                    if (last_wave_test(g, {cfg, mw})) ++c.last_waves;
                }
            }
            // Site mw runs over deg+1 values, the rest over deg.
            std::size_t i = n;
            bool advanced = false;
            while (i-- > 0) {
                const int base = (i == mw) ? deg + 1 : deg;
                if (++digits[i] < base) { advanced = true; break; }
                digits[i] = 0;
            }
            if (!advanced) break;
        }
        // Forests rooted at {w, s}.
        std::vector<int> fd(n, 0);
        do {
            if (detail::parent_map_is_forest(g, fd, mw)) {
                ++c.two_forests;
                if (keep) {
                    RootedForest f;
                    f.parent_slot.assign(fd.begin(), fd.end());
                    f.parent_slot[mw] = -1;
                    f.roots = {mw};
                    c.forest_codes.push_back(encode_forest(g, f));
                }
            }
        } while (detail::next_digits(fd, deg, mw));

        ensure(c.primed_recurrent == c.det_primed, "census: |R'| differs from det(Laplacian')");
        ensure(c.intermediate == c.det_primed - c.det, "census: |R' \\ R| differs from det' - det");
        ensure(c.two_forests == c.intermediate, "census: two-component forest count differs from |R' \\ R|");
        ensure(c.green_ww * Rational(c.det) == Rational(c.intermediate), "census: |R' \\ R| differs from g(w,w)|R|");
        ensure(c.last_waves * static_cast<std::uint64_t>(deg) >= c.recurrent && c.last_waves <= c.recurrent,
               "census: last-wave count outside [|R|/2d, |R|]");
    }
    std::sort(c.tree_codes.begin(), c.tree_codes.end());
    std::sort(c.forest_codes.begin(), c.forest_codes.end());
    return c;
}

struct ChiSquare {
    double statistic = 0;
    int dof = 0;
    double p_value = 1;
};

/// Pearson goodness of fit. `expected` are probabilities summing to 1.
inline ChiSquare chi_square(std::span<const std::uint64_t> observed, std::span<const double> expected) {
    require(observed.size() == expected.size(), "chi_square: category count mismatch");
    require(observed.size() >= 2, "chi_square: need at least two categories");
    double total_p = 0;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        require(expected[i] >= 0, "chi_square: negative probability");
        if (expected[i] == 0) require(observed[i] == 0, "chi_square: degenerate category (zero probability, nonzero count)");
        total_p += expected[i];
        total += observed[i];
    }
    require(std::abs(total_p - 1.0) < 1e-9, "chi_square: expected probabilities must sum to 1");
    require(total >= 5 * observed.size(), "chi_square: need at least 5 observations per category");
    ChiSquare out;
    int live = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (expected[i] == 0) continue;
        ++live;
        const double e = expected[i] * static_cast<double>(total);
        const double diff = static_cast<double>(observed[i]) - e;
        out.statistic += diff * diff / e;
    }
    require(live >= 2, "chi_square: degenerate categories");
    out.dof = live - 1;
    out.p_value = boost::math::gamma_q(out.dof / 2.0, out.statistic / 2.0);
    return out;
}

/// Two-sample homogeneity test on paired category counts; categories empty
/// in both samples are dropped.
inline ChiSquare chi_square_homogeneity(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b) {
    require(a.size() == b.size(), "homogeneity: category count mismatch");
    double na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        na += static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]);
    }
    require(na > 0 && nb > 0, "homogeneity: empty sample");
    ChiSquare out;
    int live = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double col = static_cast<double>(a[i] + b[i]);
        if (col == 0) continue;
        ++live;
        const double ea = col * na / (na + nb);
        const double eb = col * nb / (na + nb);
        out.statistic += (a[i] - ea) * (a[i] - ea) / ea + (b[i] - eb) * (b[i] - eb) / eb;
    }
    require(live >= 2, "homogeneity: degenerate categories");
    out.dof = live - 1;
    out.p_value = boost::math::gamma_q(out.dof / 2.0, out.statistic / 2.0);
    return out;
}

}  // namespace sandlab
