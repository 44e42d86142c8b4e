#pragma once

// Monte Carlo estimators. Each observable has a tally (integer counts only,
// so merging is exact and order-independent) and a worker that fills the
// tally one replica at a time from Stream(seed, replica).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "sandlab/forest.hpp"
#include "sandlab/laplacian.hpp"
#include "sandlab/tail.hpp"
#include "sandlab/walks.hpp"
#include "sandlab/waves.hpp"

namespace sandlab {

using Json = nlohmann::json;

// ---------------------------------------------------------------- sampling

enum class Sampler {
    Exact,   ///< inverse burning of a Wilson spanning tree
    Markov,  ///< sandpile chain from eta = 2d-1 after a burn-in
};

inline const char* to_string(Sampler s) { return s == Sampler::Exact ? "exact" : "markov"; }

inline Sampler parse_sampler(const std::string& s) {
    if (s == "exact") return Sampler::Exact;
    if (s == "markov") return Sampler::Markov;
    throw ConfigError("unknown sampler '" + s + "' (expected exact or markov)");
}

/// One draw from nu_L. `burn_in` = 0 means 10 |V| chain steps.
inline HeightConfig sample_recurrent(const WiredGraph& g, Sampler s, std::uint64_t burn_in, Stream& rng) {
    if (s == Sampler::Exact) return inverse_burning(g, uniform_spanning_tree(g, rng));
    HeightConfig c = maximal_stable(g);
    const std::uint64_t steps = burn_in ? burn_in : 10 * static_cast<std::uint64_t>(g.size());
    for (std::uint64_t i = 0; i < steps; ++i) markov_step_in_place(g, c, rng);
    return c;
}

// ------------------------------------------------------------ json helpers

struct InvariantCounter {
    std::uint64_t checked = 0;
    std::uint64_t failed = 0;

    void record(bool ok) {
        ++checked;
        failed += !ok;
    }
    void merge(const InvariantCounter& o) {
        checked += o.checked;
        failed += o.failed;
    }
    friend bool operator==(const InvariantCounter&, const InvariantCounter&) = default;
};

inline Json to_json(const InvariantCounter& c) { return {{"checked", c.checked}, {"failed", c.failed}}; }
inline InvariantCounter counter_from_json(const Json& j) { return {j.at("checked").get<std::uint64_t>(), j.at("failed").get<std::uint64_t>()}; }

namespace detail {

inline void add_into(std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    if (a.size() < b.size()) a.resize(b.size(), 0);
    for (std::size_t i = 0; i < b.size(); ++i) a[i] += b[i];
}

inline void count_at_least(std::vector<std::uint64_t>& surv, const std::vector<double>& grid, double value) {
    for (std::size_t i = 0; i < grid.size() && value >= grid[i]; ++i) ++surv[i];
}

}  // namespace detail

inline Json to_json(const TailEstimate& t) {
    Json j;
    j["observable"] = t.observable;
    j["d"] = t.dim;
    j["L"] = t.half_side;
    j["seed"] = t.seed;
    j["thresholds"] = t.thresholds;
    j["survivors"] = t.survivors;
    j["replicas"] = t.replicas;
    j["nested"] = t.nested;
    return j;
}

// --------------------------------------------------------------- avalanches

struct AvalancheParams {
    int dim = 2;
    int half_side = 4;
    std::uint64_t seed = 0;
    Sampler sampler = Sampler::Exact;
    std::uint64_t burn_in = 0;
    bool check_invariants = true;
    std::uint64_t abelian_every = 64;  ///< schedule-independence spot check period
};

/// Counters for the per-avalanche identities. `wave_bound` is
/// n(o,o) <= R_inf + 1; the literal n(o,o) <= R_inf and the Euclidean
/// n(o,o) <= R are tracked as observations only.
struct AvalancheAssertions {
    InvariantCounter waves_equal_topplings;  ///< number of waves = n(o,o)
    InvariantCounter wave_multiset;          ///< sum_k 1{y in W_k} = n(o,y)
    InvariantCounter wave_bound;
    InvariantCounter cluster_le_size;        ///< |Av| <= S
    InvariantCounter conservation;
    InvariantCounter abelian;
    InvariantCounter source_rule;            ///< N >= 1 iff eta(o) = 2d-1
    std::uint64_t literal_bound_exceeded = 0;
    std::uint64_t euclidean_bound_exceeded = 0;

    std::uint64_t failed() const {
        return waves_equal_topplings.failed + wave_multiset.failed + wave_bound.failed + cluster_le_size.failed +
               conservation.failed + abelian.failed + source_rule.failed;
    }
    void merge(const AvalancheAssertions& o) {
        waves_equal_topplings.merge(o.waves_equal_topplings);
        wave_multiset.merge(o.wave_multiset);
        wave_bound.merge(o.wave_bound);
        cluster_le_size.merge(o.cluster_le_size);
        conservation.merge(o.conservation);
        abelian.merge(o.abelian);
        source_rule.merge(o.source_rule);
        literal_bound_exceeded += o.literal_bound_exceeded;
        euclidean_bound_exceeded += o.euclidean_bound_exceeded;
    }
    friend bool operator==(const AvalancheAssertions&, const AvalancheAssertions&) = default;
};

inline Json to_json(const AvalancheAssertions& a) {
    return {{"waves_equal_topplings", to_json(a.waves_equal_topplings)},
            {"wave_multiset_equals_odometer", to_json(a.wave_multiset)},
            {"waves_le_rinf_plus_one", to_json(a.wave_bound)},
            {"cluster_le_size", to_json(a.cluster_le_size)},
            {"conservation", to_json(a.conservation)},
            {"abelian_spot_check", to_json(a.abelian)},
            {"source_rule", to_json(a.source_rule)},
            {"observed_waves_gt_rinf", a.literal_bound_exceeded},
            {"observed_waves_gt_radius", a.euclidean_bound_exceeded}};
}

inline AvalancheAssertions assertions_from_json(const Json& j) {
    AvalancheAssertions a;
    a.waves_equal_topplings = counter_from_json(j.at("waves_equal_topplings"));
    a.wave_multiset = counter_from_json(j.at("wave_multiset_equals_odometer"));
    a.wave_bound = counter_from_json(j.at("waves_le_rinf_plus_one"));
    a.cluster_le_size = counter_from_json(j.at("cluster_le_size"));
    a.conservation = counter_from_json(j.at("conservation"));
    a.abelian = counter_from_json(j.at("abelian_spot_check"));
    a.source_rule = counter_from_json(j.at("source_rule"));
    a.literal_bound_exceeded = j.at("observed_waves_gt_rinf").get<std::uint64_t>();
    a.euclidean_bound_exceeded = j.at("observed_waves_gt_radius").get<std::uint64_t>();
    return a;
}

/// Per-sample summary written to JSON lines.
struct AvalancheRecord {
    std::uint64_t index = 0;
    std::uint64_t waves = 0;
    std::uint64_t topplings = 0;
    std::uint64_t cluster = 0;
    long long r2 = 0;
    int rinf = 0;
};

inline Json to_json(const AvalancheRecord& r) {
    return {{"seed-index", r.index}, {"N", r.waves}, {"S", r.topplings}, {"cluster", r.cluster}, {"R2", r.r2}, {"Rinf", r.rinf}};
}

struct AvalancheTally {
    std::vector<double> radius_grid;
    std::vector<double> count_grid;
    std::uint64_t replicas = 0;
    std::uint64_t source_critical = 0;
    std::vector<std::uint64_t> radius_surv, cluster_surv, size_surv;
    std::vector<std::uint64_t> wave_hist;  ///< wave_hist[k] = #{N = k}
    std::vector<std::uint64_t> hits;       ///< #{z in Av}, per site
    std::vector<std::uint64_t> odo_sum;    ///< sum of n(o, y)
    std::vector<std::uint64_t> odo_sq;     ///< sum of n(o, y)^2
    AvalancheAssertions assertions;

    static AvalancheTally empty(const WiredGraph& g) {
        AvalancheTally t;
        t.radius_grid = geometric_grid(std::sqrt(static_cast<double>(g.dim())) * (g.spec().half_side + 1));
        t.count_grid = geometric_grid(static_cast<double>(g.size()) * (g.spec().half_side + 2));
        t.radius_surv.assign(t.radius_grid.size(), 0);
        t.cluster_surv.assign(t.count_grid.size(), 0);
        t.size_surv.assign(t.count_grid.size(), 0);
        t.hits.assign(g.size(), 0);
        t.odo_sum.assign(g.size(), 0);
        t.odo_sq.assign(g.size(), 0);
        return t;
    }

    void merge(const AvalancheTally& o) {
        require(o.radius_grid == radius_grid && o.count_grid == count_grid && o.hits.size() == hits.size(),
                "cannot merge tallies from different instances");
        replicas += o.replicas;
        source_critical += o.source_critical;
        detail::add_into(radius_surv, o.radius_surv);
        detail::add_into(cluster_surv, o.cluster_surv);
        detail::add_into(size_surv, o.size_surv);
        detail::add_into(wave_hist, o.wave_hist);
        detail::add_into(hits, o.hits);
        detail::add_into(odo_sum, o.odo_sum);
        detail::add_into(odo_sq, o.odo_sq);
        assertions.merge(o.assertions);
    }

    friend bool operator==(const AvalancheTally&, const AvalancheTally&) = default;

    double mean_topplings(Site y) const { return replicas ? static_cast<double>(odo_sum[y]) / static_cast<double>(replicas) : 0.0; }

    /// Standard error of the mean of n(o, y).
    double se_topplings(Site y) const {
        if (replicas < 2) return 0.0;
        const double n = static_cast<double>(replicas);
        const double m = mean_topplings(y);
        const double var = (static_cast<double>(odo_sq[y]) - n * m * m) / (n - 1);
        return std::sqrt(std::max(var, 0.0) / n);
    }

    double wave_probability(std::size_t k) const {
        return replicas && k < wave_hist.size() ? static_cast<double>(wave_hist[k]) / static_cast<double>(replicas) : 0.0;
    }

    TailEstimate tail(const std::string& observable, const AvalancheParams& p) const {
        TailEstimate t;
        t.observable = observable;
        t.dim = p.dim;
        t.half_side = p.half_side;
        t.seed = p.seed;
        t.replicas = replicas;
        if (observable == "radius") {
            t.thresholds = radius_grid;
            t.survivors = radius_surv;
        } else if (observable == "cluster") {
            t.thresholds = count_grid;
            t.survivors = cluster_surv;
        } else if (observable == "size") {
            t.thresholds = count_grid;
            t.survivors = size_surv;
        } else if (observable == "waves") {
            // #{N >= k}, k = 1..max observed
            std::uint64_t tail = 0;
            t.survivors.assign(wave_hist.size() > 1 ? wave_hist.size() - 1 : 0, 0);
            for (std::size_t k = wave_hist.size(); k-- > 1;) {
                tail += wave_hist[k];
                t.survivors[k - 1] = tail;
            }
            for (std::size_t k = 1; k < wave_hist.size(); ++k) t.thresholds.push_back(static_cast<double>(k));
        } else {
            throw ConfigError("unknown avalanche observable '" + observable + "'");
        }
        return t;
    }
};

inline Json to_json(const AvalancheTally& t) {
    return {{"radius_grid", t.radius_grid}, {"count_grid", t.count_grid},   {"replicas", t.replicas},
            {"source_critical", t.source_critical}, {"radius_surv", t.radius_surv}, {"cluster_surv", t.cluster_surv},
            {"size_surv", t.size_surv},     {"wave_hist", t.wave_hist},     {"hits", t.hits},
            {"odo_sum", t.odo_sum},         {"odo_sq", t.odo_sq},           {"assertions", to_json(t.assertions)}};
}

inline AvalancheTally avalanche_tally_from_json(const Json& j) {
    AvalancheTally t;
    j.at("radius_grid").get_to(t.radius_grid);
    j.at("count_grid").get_to(t.count_grid);
    j.at("replicas").get_to(t.replicas);
    j.at("source_critical").get_to(t.source_critical);
    j.at("radius_surv").get_to(t.radius_surv);
    j.at("cluster_surv").get_to(t.cluster_surv);
    j.at("size_surv").get_to(t.size_surv);
    j.at("wave_hist").get_to(t.wave_hist);
    j.at("hits").get_to(t.hits);
    j.at("odo_sum").get_to(t.odo_sum);
    j.at("odo_sq").get_to(t.odo_sq);
    t.assertions = assertions_from_json(j.at("assertions"));
    return t;
}

/// One avalanche per replica: sample eta from nu_L, add a grain at o,
/// stabilize, tally, and check the per-sample identities.
class AvalancheWorker {
public:
    AvalancheWorker(const WiredGraph& g, const AvalancheParams& p) : g_(&g), p_(p) {}

    void operator()(std::uint64_t replica, AvalancheTally& t, std::vector<AvalancheRecord>* records) {
        const WiredGraph& g = *g_;
        const Site o = g.origin();
        Stream rng(p_.seed, replica);
        HeightConfig eta = sample_recurrent(g, p_.sampler, p_.burn_in, rng);
        const bool critical = eta[o] == static_cast<Height>(g.degree() - 1);
        Avalanche a = add_and_stabilize(g, eta, o);
        const AvalancheSummary& s = a.summary;

        ++t.replicas;
        t.source_critical += critical;
        detail::count_at_least(t.radius_surv, t.radius_grid, s.radius);
        detail::count_at_least(t.cluster_surv, t.count_grid, static_cast<double>(s.cluster_size));
        detail::count_at_least(t.size_surv, t.count_grid, static_cast<double>(s.topplings));
        if (t.wave_hist.size() <= s.waves) t.wave_hist.resize(s.waves + 1, 0);
        ++t.wave_hist[s.waves];
        long long r2 = 0;
        for (Site x = 0; x < g.size(); ++x) {
            const std::uint64_t n = a.odometer[x];
            if (!n) continue;
            ++t.hits[x];
            t.odo_sum[x] += n;
            t.odo_sq[x] += n * n;
            r2 = std::max(r2, g.euclidean_sq(x, o));
        }
        if (records) records->push_back({replica, s.waves, s.topplings, s.cluster_size, r2, s.radius_inf});

        if (!p_.check_invariants) return;
        auto& as = t.assertions;
        WaveDecomposition w = decompose_waves(g, eta, o);
        as.waves_equal_topplings.record(w.waves.size() == a.odometer[o]);
        as.wave_multiset.record(w.odometer == a.odometer);
        as.wave_bound.record(s.waves <= static_cast<std::uint64_t>(s.radius_inf) + 1);
        as.literal_bound_exceeded += s.waves > static_cast<std::uint64_t>(s.radius_inf);
        as.euclidean_bound_exceeded += static_cast<double>(s.waves) > s.radius;
        as.cluster_le_size.record(s.cluster_size <= s.topplings);
        as.source_rule.record((s.waves >= 1) == critical && (a.odometer[o] >= 1) == critical);
        HeightConfig start = eta;
        start[o] += 1;
        as.conservation.record(conserved(g, start, a.config, a.odometer));
        if (p_.abelian_every && replica % p_.abelian_every == 0) {
            auto lifo = stabilize(g, start, nullptr, Schedule::Lifo);
            as.abelian.record(lifo.config == a.config && lifo.odometer == a.odometer);
        }
    }

private:
    const WiredGraph* g_;
    AvalancheParams p_;
};

// ------------------------------------------------ toppling probability: trees

/// mu_{L,o}(z in T_o | e not in T_o) by Wilson's algorithm on roots {o, s},
/// started at e = -e1 and then at each z = r e1. A replica is accepted when
/// the LERW from e reaches s without hitting o; z then lies in T_o iff a walk
/// from z hits o before the LERW path or s.
struct TreeRouteParams {
    int dim = 2;
    int half_side = 16;
    std::uint64_t seed = 0;
    std::vector<int> radii;  ///< z = r e1
};

struct TreeRouteTally {
    std::uint64_t replicas = 0;
    std::uint64_t accepted = 0;
    std::vector<std::uint64_t> hits;

    void merge(const TreeRouteTally& o) {
        replicas += o.replicas;
        accepted += o.accepted;
        detail::add_into(hits, o.hits);
    }
    friend bool operator==(const TreeRouteTally&, const TreeRouteTally&) = default;

    TailEstimate tail(const TreeRouteParams& p) const {
        TailEstimate t;
        t.observable = "tree-route";
        t.dim = p.dim;
        t.half_side = p.half_side;
        t.seed = p.seed;
        for (int r : p.radii) t.thresholds.push_back(r);
        t.survivors = hits;
        t.survivors.resize(p.radii.size(), 0);
        t.replicas = accepted;
        t.nested = false;
        return t;
    }
};

inline Json to_json(const TreeRouteTally& t) { return {{"replicas", t.replicas}, {"accepted", t.accepted}, {"hits", t.hits}}; }
inline TreeRouteTally tree_route_tally_from_json(const Json& j) {
    TreeRouteTally t;
    j.at("replicas").get_to(t.replicas);
    j.at("accepted").get_to(t.accepted);
    j.at("hits").get_to(t.hits);
    return t;
}

inline void validate_radii_along_e1(const WiredGraph& g, const std::vector<int>& radii) {
    require(!radii.empty(), "z-list is empty");
    for (int r : radii) {
        require(r != 0, "z = o is not allowed in the z-list");
        require(r > 0 && r <= g.spec().half_side, "z = r e1 must lie in V(L) with r > 0");
    }
}

class TreeRouteWorker {
public:
    TreeRouteWorker(const WiredGraph& g, const TreeRouteParams& p)
        : g_(&g), p_(p), ws_(g), absorb_(g.size(), 0), on_path_(static_cast<std::size_t>(g.size()) + 1, 0) {
        validate_radii_along_e1(g, p.radii);
        absorb_[g.origin()] = 1;
        for (int r : p.radii) z_.push_back(g.along_axis(r));
    }

    void operator()(std::uint64_t replica, TreeRouteTally& t, std::vector<int>*) {
        const WiredGraph& g = *g_;
        const Site o = g.origin();
        if (t.hits.size() < z_.size()) t.hits.resize(z_.size(), 0);
        ++t.replicas;
        Stream rng(p_.seed, replica);
        const Site e = g.neighbour(o, 1);
        LerwPath pi = lerw(g, e, absorb_, {}, rng, ws_);
        if (pi.reason != StopReason::ExitedToSink) return;
        ++t.accepted;
        ++gen_;
        for (Site v : pi.sites) on_path_[v] = gen_;
        const auto deg = static_cast<std::uint32_t>(g.degree());
        for (std::size_t i = 0; i < z_.size(); ++i) {
            Site x = z_[i];
            while (x != o && on_path_[x] != gen_ && !g.is_sink(x)) x = g.neighbour(x, static_cast<int>(rng.below(deg)));
            t.hits[i] += x == o;
        }
    }

private:
    const WiredGraph* g_;
    TreeRouteParams p_;
    LerwWorkspace ws_;
    std::vector<std::uint8_t> absorb_;
    std::vector<std::uint32_t> on_path_;
    std::uint32_t gen_ = 0;
    std::vector<Site> z_;
};

// ------------------------------------------------------- escape probability

/// Es^L(n) = P(LERW(0, sigma_n] and SRW[0, sigma_n] are disjoint), both
/// from o in V(L). One LERW (to s) and one independent SRW (to the exit of
/// V(max n)) per replica serve every n: the event for n holds iff n < n*,
/// where n* is the smallest n at which an intersection falls inside both
/// stopped segments.
struct EscapeParams {
    int dim = 2;
    std::uint64_t seed = 0;
    std::vector<int> radii;
    int box_factor = 4;
    int box_half_side = 0;  ///< 0: box_factor * max radius

    int box() const {
        require(!radii.empty(), "n-list is empty");
        return box_half_side ? box_half_side : box_factor * *std::max_element(radii.begin(), radii.end());
    }
};

struct EscapeTally {
    std::uint64_t replicas = 0;
    std::vector<std::uint64_t> survivors;

    void merge(const EscapeTally& o) {
        replicas += o.replicas;
        detail::add_into(survivors, o.survivors);
    }
    friend bool operator==(const EscapeTally&, const EscapeTally&) = default;

    TailEstimate tail(const EscapeParams& p) const {
        TailEstimate t;
        t.observable = "escape";
        t.dim = p.dim;
        t.half_side = p.box();
        t.seed = p.seed;
        for (int n : p.radii) t.thresholds.push_back(n);
        t.survivors = survivors;
        t.survivors.resize(p.radii.size(), 0);
        t.replicas = replicas;
        t.nested = true;
        return t;
    }
};

inline Json to_json(const EscapeTally& t) { return {{"replicas", t.replicas}, {"survivors", t.survivors}}; }
inline EscapeTally escape_tally_from_json(const Json& j) {
    EscapeTally t;
    j.at("replicas").get_to(t.replicas);
    j.at("survivors").get_to(t.survivors);
    return t;
}

class EscapeWorker {
public:
    EscapeWorker(const WiredGraph& g, const EscapeParams& p)
        : g_(&g), p_(p), ws_(g), mark_(static_cast<std::size_t>(g.size()) + 1, 0), index_(g.size(), 0) {
        require(std::is_sorted(p.radii.begin(), p.radii.end()) && p.radii.front() >= 1, "n-list must be ascending and positive");
        require(p.radii.back() < g.spec().half_side, "box must be larger than the largest n");
        nmax_ = p.radii.back();
    }

    /// n* for one replica; escape(n) holds iff n < n*.
    int critical_radius(std::uint64_t replica) {
        const WiredGraph& g = *g_;
        const Site o = g.origin();
        Stream rng(p_.seed, replica);
        LerwPath path = lerw(g, o, {}, {}, rng, ws_);
        ++gen_;
        prefix_max_.assign(path.sites.size(), 0);
        int run = 0;
        for (std::size_t i = 0; i < path.sites.size(); ++i) {
            prefix_max_[i] = run;  // max norm over indices < i
            const Site v = path.sites[i];
            if (g.is_sink(v)) break;
            run = std::max(run, g.linf(v, o));
            if (i >= 1) {
                mark_[v] = gen_;
                index_[v] = static_cast<std::uint32_t>(i);
            }
        }
        int nstar = std::numeric_limits<int>::max();
        const auto deg = static_cast<std::uint32_t>(g.degree());
        Site x = o;
        int srw_run = 0;  // max norm over SRW times < current
        while (true) {
            x = g.neighbour(x, static_cast<int>(rng.below(deg)));
            if (mark_[x] == gen_) nstar = std::min(nstar, std::max(prefix_max_[index_[x]], srw_run));
            srw_run = std::max(srw_run, g.linf(x, o));
            if (srw_run > nmax_) break;
        }
        return nstar;
    }

    void operator()(std::uint64_t replica, EscapeTally& t, std::vector<int>*) {
        if (t.survivors.size() < p_.radii.size()) t.survivors.resize(p_.radii.size(), 0);
        const int nstar = critical_radius(replica);
        ++t.replicas;
        for (std::size_t i = 0; i < p_.radii.size() && p_.radii[i] < nstar; ++i) ++t.survivors[i];
    }

private:
    const WiredGraph* g_;
    EscapeParams p_;
    LerwWorkspace ws_;
    std::vector<std::uint32_t> mark_;
    std::vector<std::uint32_t> index_;
    std::vector<int> prefix_max_;
    std::uint32_t gen_ = 0;
    int nmax_ = 0;
};

// -------------------------------------------------------- tree observables

/// Component T_o of mu_{L,o} (roots {o, s}): diam(T_o; o) in the Euclidean
/// metric (the radius R(T_o)) and in the l1 metric, the volume |T_o|, and
/// optionally the volume of the past of o in the UST of G_L.
struct TreeObsParams {
    int dim = 2;
    int half_side = 8;
    std::uint64_t seed = 0;
    bool past = false;
};

struct TreeObsTally {
    std::vector<double> length_grid;
    std::vector<double> count_grid;
    std::uint64_t replicas = 0;
    std::vector<std::uint64_t> diameter_surv, l1_surv, volume_surv, past_surv;
    std::uint64_t volume_sum = 0;
    std::uint64_t volume_sq = 0;

    static TreeObsTally empty(const WiredGraph& g) {
        TreeObsTally t;
        t.length_grid = geometric_grid(static_cast<double>(g.dim()) * g.spec().half_side + 1);
        t.count_grid = geometric_grid(static_cast<double>(g.size()));
        t.diameter_surv.assign(t.length_grid.size(), 0);
        t.l1_surv.assign(t.length_grid.size(), 0);
        t.volume_surv.assign(t.count_grid.size(), 0);
        t.past_surv.assign(t.count_grid.size(), 0);
        return t;
    }

    void merge(const TreeObsTally& o) {
        require(o.length_grid == length_grid && o.count_grid == count_grid, "cannot merge tallies from different instances");
        replicas += o.replicas;
        detail::add_into(diameter_surv, o.diameter_surv);
        detail::add_into(l1_surv, o.l1_surv);
        detail::add_into(volume_surv, o.volume_surv);
        detail::add_into(past_surv, o.past_surv);
        volume_sum += o.volume_sum;
        volume_sq += o.volume_sq;
    }
    friend bool operator==(const TreeObsTally&, const TreeObsTally&) = default;

    double mean_volume() const { return replicas ? static_cast<double>(volume_sum) / static_cast<double>(replicas) : 0.0; }

    TailEstimate tail(const std::string& observable, const TreeObsParams& p) const {
        TailEstimate t;
        t.observable = observable;
        t.dim = p.dim;
        t.half_side = p.half_side;
        t.seed = p.seed;
        t.replicas = replicas;
        if (observable == "diameter") {
            t.thresholds = length_grid;
            t.survivors = diameter_surv;
        } else if (observable == "l1-diameter") {
            t.thresholds = length_grid;
            t.survivors = l1_surv;
        } else if (observable == "volume") {
            t.thresholds = count_grid;
            t.survivors = volume_surv;
        } else if (observable == "past") {
            t.thresholds = count_grid;
            t.survivors = past_surv;
        } else {
            throw ConfigError("unknown tree observable '" + observable + "'");
        }
        return t;
    }
};

inline Json to_json(const TreeObsTally& t) {
    return {{"length_grid", t.length_grid},     {"count_grid", t.count_grid},   {"replicas", t.replicas},
            {"diameter_surv", t.diameter_surv}, {"l1_surv", t.l1_surv}, {"volume_surv", t.volume_surv},
            {"past_surv", t.past_surv},         {"volume_sum", t.volume_sum},   {"volume_sq", t.volume_sq}};
}

inline TreeObsTally tree_obs_tally_from_json(const Json& j) {
    TreeObsTally t;
    j.at("length_grid").get_to(t.length_grid);
    j.at("count_grid").get_to(t.count_grid);
    j.at("replicas").get_to(t.replicas);
    j.at("diameter_surv").get_to(t.diameter_surv);
    j.at("l1_surv").get_to(t.l1_surv);
    j.at("volume_surv").get_to(t.volume_surv);
    j.at("past_surv").get_to(t.past_surv);
    j.at("volume_sum").get_to(t.volume_sum);
    j.at("volume_sq").get_to(t.volume_sq);
    return t;
}

struct TreeRecord {
    std::uint64_t index = 0;
    int l1 = 0;
    long long r2 = 0;
    std::uint64_t volume = 0;
    std::uint64_t past = 0;
};

inline Json to_json(const TreeRecord& r) {
    return {{"seed-index", r.index}, {"R2", r.r2}, {"l1", r.l1}, {"volume", r.volume}, {"past", r.past}};
}

class TreeObsWorker {
public:
    TreeObsWorker(const WiredGraph& g, const TreeObsParams& p)
        : g_(&g), p_(p), two_root_(g, g.origin(), OriginComponentSampler::Mode::TwoRoot),
          past_(g, g.origin(), OriginComponentSampler::Mode::Past) {}

    void operator()(std::uint64_t replica, TreeObsTally& t, std::vector<TreeRecord>* records) {
        const WiredGraph& g = *g_;
        const Site o = g.origin();
        Stream rng(p_.seed, replica);
        const auto& comp = two_root_.sample(rng);
        int diam = 0;
        long long r2 = 0;
        for (Site x : comp) {
            diam = std::max(diam, g.l1(x, o));
            r2 = std::max(r2, g.euclidean_sq(x, o));
        }
        const auto vol = static_cast<std::uint64_t>(comp.size());
        ++t.replicas;
        detail::count_at_least(t.diameter_surv, t.length_grid, std::sqrt(static_cast<double>(r2)));
        detail::count_at_least(t.l1_surv, t.length_grid, diam);
        detail::count_at_least(t.volume_surv, t.count_grid, static_cast<double>(vol));
        t.volume_sum += vol;
        t.volume_sq += vol * vol;
        std::uint64_t past = 0;
        if (p_.past) {
            past = past_.sample(rng).size();
            detail::count_at_least(t.past_surv, t.count_grid, static_cast<double>(past));
        }
        if (records) records->push_back({replica, diam, r2, vol, past});
    }

private:
    const WiredGraph* g_;
    TreeObsParams p_;
    OriginComponentSampler two_root_;
    OriginComponentSampler past_;
};

// ------------------------------------------- toppling probability: both routes

/// Sandpile route (hit frequency of z in Av) and tree route side by side.
/// The tree route draws from Stream(seed ^ kTreeRouteSalt, r) so the two
/// estimates are independent.
inline constexpr std::uint64_t kTreeRouteSalt = 0x74726565726f7574ULL;

struct ToppleTally {
    AvalancheTally sandpile;
    TreeRouteTally tree;

    void merge(const ToppleTally& o) {
        sandpile.merge(o.sandpile);
        tree.merge(o.tree);
    }
    friend bool operator==(const ToppleTally&, const ToppleTally&) = default;
};

inline Json to_json(const ToppleTally& t) { return {{"sandpile", to_json(t.sandpile)}, {"tree", to_json(t.tree)}}; }
inline ToppleTally topple_tally_from_json(const Json& j) {
    return {avalanche_tally_from_json(j.at("sandpile")), tree_route_tally_from_json(j.at("tree"))};
}

class ToppleWorker {
public:
    ToppleWorker(const WiredGraph& g, const AvalancheParams& ap, const TreeRouteParams& tp, bool sandpile, bool tree)
        : aval_(g, ap), tree_(g, with_salt(tp)), sandpile_on_(sandpile), tree_on_(tree) {}

    void operator()(std::uint64_t replica, ToppleTally& t, std::vector<int>*) {
        if (sandpile_on_) aval_(replica, t.sandpile, nullptr);
        if (tree_on_) tree_(replica, t.tree, nullptr);
    }

private:
    static TreeRouteParams with_salt(TreeRouteParams p) {
        p.seed ^= kTreeRouteSalt;
        return p;
    }
    AvalancheWorker aval_;
    TreeRouteWorker tree_;
    bool sandpile_on_, tree_on_;
};

// ----------------------------------------------------- wave-count table

struct WaveCountRow {
    int half_side = 0;
    std::uint64_t replicas = 0;
    std::vector<double> probability;  ///< nu_L(N = k), k = 0..k_max
    double mean = 0;                  ///< E[N]
    double se = 0;
    double green_oo = 0;              ///< exact g_L(o, o)
};

struct WaveCountTable {
    int dim = 2;
    std::vector<WaveCountRow> rows;
    std::vector<double> drift;  ///< max_k |nu_{L_i}(N=k) - nu_{L_{i+1}}(N=k)|
    double slope = 0;           ///< weighted regression of E[N] on g_L(o,o)
    double slope_se = 0;
    double intercept = 0;
};

/// One avalanche per box size per replica; box i uses seed ^ (i+1) * golden
/// so the rows are independent.
struct WaveTally {
    std::vector<AvalancheTally> boxes;

    void merge(const WaveTally& o) {
        require(o.boxes.size() == boxes.size(), "cannot merge wave tallies over different box lists");
        for (std::size_t i = 0; i < boxes.size(); ++i) boxes[i].merge(o.boxes[i]);
    }
    friend bool operator==(const WaveTally&, const WaveTally&) = default;
};

inline Json to_json(const WaveTally& t) {
    Json j = Json::array();
    for (const auto& b : t.boxes) j.push_back(to_json(b));
    return j;
}
inline WaveTally wave_tally_from_json(const Json& j) {
    WaveTally t;
    for (const auto& b : j) t.boxes.push_back(avalanche_tally_from_json(b));
    return t;
}

inline std::uint64_t box_seed(std::uint64_t seed, std::size_t i) { return seed ^ ((i + 1) * 0x9E3779B97F4A7C15ULL); }

class WaveWorker {
public:
    WaveWorker(const std::vector<const WiredGraph*>& graphs, AvalancheParams p) {
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            AvalancheParams q = p;
            q.half_side = graphs[i]->spec().half_side;
            q.seed = box_seed(p.seed, i);
            workers_.emplace_back(*graphs[i], q);
        }
    }
    void operator()(std::uint64_t replica, WaveTally& t, std::vector<int>*) {
        for (std::size_t i = 0; i < workers_.size(); ++i) workers_[i](replica, t.boxes[i], nullptr);
    }

private:
    std::vector<AvalancheWorker> workers_;
};

inline WaveCountRow wave_count_row(const WiredGraph& g, const AvalancheTally& t, std::size_t k_max) {
    WaveCountRow row;
    row.half_side = g.spec().half_side;
    row.replicas = t.replicas;
    for (std::size_t k = 0; k <= k_max; ++k) row.probability.push_back(t.wave_probability(k));
    const Site o = g.origin();
    row.mean = t.mean_topplings(o);
    row.se = t.se_topplings(o);
    row.green_oo = GreenSolver(g).green(o, o);
    return row;
}

/// Drift between consecutive box sizes and the E[N] versus g_L(o,o) slope
/// (weighted least squares with weights 1/se^2).
inline WaveCountTable wave_count_table(int dim, std::vector<WaveCountRow> rows) {
    WaveCountTable t;
    t.dim = dim;
    t.rows = std::move(rows);
    for (std::size_t i = 0; i + 1 < t.rows.size(); ++i) {
        double m = 0;
        const auto& a = t.rows[i].probability;
        const auto& b = t.rows[i + 1].probability;
        for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) m = std::max(m, std::abs(a[k] - b[k]));
        t.drift.push_back(m);
    }
    if (t.rows.size() >= 2) {
        double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (const auto& r : t.rows) {
            const double w = r.se > 0 ? 1.0 / (r.se * r.se) : 1.0;
            sw += w;
            sx += w * r.green_oo;
            sy += w * r.mean;
            sxx += w * r.green_oo * r.green_oo;
            sxy += w * r.green_oo * r.mean;
        }
        const double den = sw * sxx - sx * sx;
        require(den > 0, "wave-count regression needs distinct g_L(o,o) values");
        t.slope = (sw * sxy - sx * sy) / den;
        t.intercept = (sy - t.slope * sx) / sw;
        t.slope_se = std::sqrt(sw / den);
    }
    return t;
}

}  // namespace sandlab
