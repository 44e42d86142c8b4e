// sandlab: command-line front end.
//
// Exit codes: 0 ok, 2 configuration error, 3 resource guard, 4 invariant
// violation, 5 checkpoint error.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "sandlab/census.hpp"
#include "sandlab/estimators.hpp"
#include "sandlab/experiment.hpp"
#include "sandlab/io.hpp"

using namespace sandlab;
namespace fs = std::filesystem;

namespace {

// ------------------------------------------------------------- parsing

template <class T>
std::vector<T> parse_list(const std::string& s, const std::string& what) {
    std::vector<T> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            if constexpr (std::is_same_v<T, double>) out.push_back(std::stod(item, &used));
            else out.push_back(static_cast<T>(std::stoll(item, &used)));
            require(used == item.size(), "");
        } catch (const std::exception&) {
            throw ConfigError("bad " + what + " '" + s + "'");
        }
    }
    require(!out.empty(), what + " is empty");
    return out;
}

std::vector<int> parse_grid(const std::string& s) {
    std::string t = s;
    for (char& c : t)
        if (c == 'x' || c == 'X') c = ',';
    return parse_list<int>(t, "grid");
}

Point parse_point(const std::string& s, int d) {
    auto v = parse_list<int>(s, "site coordinates");
    require(static_cast<int>(v.size()) == d, "site '" + s + "' needs " + std::to_string(d) + " coordinates");
    Point p{};
    for (int i = 0; i < d; ++i) p[i] = v[i];
    return p;
}

Site site_of(const WiredGraph& g, const std::string& s) {
    Site x = g.site_at(parse_point(s, g.dim()));
    require(x != kNoSite, "site '" + s + "' is outside the box");
    return x;
}

std::pair<double, double> parse_window(const std::string& s) {
    auto c = s.find(':');
    require(c != std::string::npos, "window must look like lo:hi");
    try {
        return {std::stod(s.substr(0, c)), std::stod(s.substr(c + 1))};
    } catch (const std::exception&) {
        throw ConfigError("bad window '" + s + "'");
    }
}

// ------------------------------------------------------------- common

struct Common {
    int d = 2;
    int L = 4;
    std::uint64_t seed = 0;
    std::uint64_t replicas = 1000;
    int workers = 1;
    std::string out;
    bool records = false;
    std::string checkpoint;
    std::uint64_t checkpoint_every = 0;
    std::uint64_t stop_after = 0;
    bool resume = false;
    double max_sites = 3e7;
};

void add_box(CLI::App* app, Common& c) {
    app->add_option("--d", c.d, "dimension (2..5)");
    app->add_option("--L", c.L, "half-side of the box V(L)");
    app->add_option("--max-sites", c.max_sites, "resource guard on the number of sites");
}

void add_run(CLI::App* app, Common& c) {
    app->add_option("--seed", c.seed, "master seed");
    app->add_option("--replicas", c.replicas, "number of replicas");
    app->add_option("--workers", c.workers, "worker threads (does not change results)");
    app->add_option("--out", c.out, "output directory (default $SANDLAB_OUTPUT_DIR or .)");
    app->add_option("--checkpoint", c.checkpoint, "checkpoint file");
    app->add_option("--checkpoint-every", c.checkpoint_every, "replicas between checkpoints");
    app->add_option("--stop-after", c.stop_after, "stop once this many replicas are done (checkpoint and exit)");
    app->add_flag("--resume", c.resume, "continue from --checkpoint");
}

fs::path out_dir(const Common& c) { return c.out.empty() ? default_output_dir() : fs::path(c.out); }

nlohmann::json common_json(const Common& c, const std::string& command) {
    return {{"command", command},   {"d", c.d},
            {"L", c.L},             {"seed", c.seed},
            {"replicas", c.replicas}, {"workers", c.workers},
            {"records", c.records}, {"max-sites", c.max_sites},
            {"checkpoint", c.checkpoint}, {"checkpoint-every", c.checkpoint_every},
            {"stop-after", c.stop_after}, {"resume", c.resume},
            {"out", out_dir(c).string()}};
}

/// The fields that determine the replica streams and tallies.
nlohmann::json fingerprint(nlohmann::json cfg) {
    for (const char* k : {"replicas", "workers", "checkpoint", "checkpoint-every", "stop-after", "resume", "out"}) cfg.erase(k);
    return cfg;
}

RunControl control(const Common& c) {
    require(c.replicas >= 1, "--replicas must be at least 1");
    RunControl r;
    r.replicas = c.replicas;
    r.workers = c.workers;
    r.checkpoint = c.checkpoint;
    r.checkpoint_every = c.checkpoint_every;
    r.stop_after = c.stop_after;
    r.resume = c.resume;
    if ((r.stop_after || r.checkpoint_every) && r.checkpoint.empty()) throw ConfigError("--stop-after/--checkpoint-every need --checkpoint");
    return r;
}

WiredGraph cube(const Common& c) { return build_wired_box(BoxSpec::cube(c.d, c.L), c.max_sites); }

nlohmann::json worker_ranges(const Common& c, const RunOutcome& o) {
    nlohmann::json j = nlohmann::json::array();
    auto ranges = split_replicas(o.begin, o.done, c.workers);
    for (std::size_t w = 0; w < ranges.size(); ++w)
        j.push_back({{"worker", w}, {"seed", c.seed}, {"first-replica", ranges[w].begin}, {"end-replica", ranges[w].end}});
    return j;
}

void write_manifest(const Common& c, const std::string& command, const nlohmann::json& cfg, const RunOutcome& o,
                    const nlohmann::json& assertions, const std::vector<fs::path>& outputs) {
    nlohmann::json m;
    m["schema"] = kManifestSchema;
    m["version"] = kVersion;
    m["command"] = command;
    m["config"] = cfg;
    m["wall_seconds"] = o.wall_seconds;
    m["workers"] = c.workers;
    m["worker_ranges"] = worker_ranges(c, o);
    m["resumed_from"] = o.begin;
    m["replicas_done"] = o.done;
    m["complete"] = o.complete;
    m["assertions"] = assertions;
    m["outputs"] = nlohmann::json::array();
    for (const auto& p : outputs) m["outputs"].push_back(p.string());
    write_text(out_dir(c) / (command + "-manifest.json"), m.dump(2) + "\n");
}

void write_result(const Common& c, const std::string& command, nlohmann::json r, std::vector<fs::path>& outputs) {
    r["schema"] = kResultSchema;
    r["version"] = kVersion;
    fs::path p = out_dir(c) / (command + "-result.json");
    write_text(p, r.dump(2) + "\n");
    outputs.push_back(p);
}

fs::path write_tail(const Common& c, const std::string& name, const TailEstimate& t, std::vector<fs::path>& outputs) {
    t.check();
    fs::path p = out_dir(c) / (name + ".csv");
    write_text(p, tail_csv(t));
    outputs.push_back(p);
    return p;
}

/// Records of [0, done): the prefix kept from an interrupted run plus the
/// records produced now.
template <class Record>
fs::path write_records(const Common& c, const std::string& command, const RunOutcome& o, const std::vector<Record>& recs) {
    fs::path p = out_dir(c) / (command + "-records.jsonl");
    std::string text;
    if (o.begin > 0)
        for (const auto& line : read_lines(p, o.begin)) text += line + "\n";
    for (const auto& r : recs) {
        auto j = to_json(r);
        j["schema"] = kRecordSchema;
        text += j.dump() + "\n";
    }
    write_text(p, text);
    return p;
}

nlohmann::json fit_json(const ExponentFit& f) {
    return {{"slope", f.slope},         {"intercept", f.intercept},     {"window", {f.window_lo, f.window_hi}},
            {"points", f.points},       {"ci95", {f.ci_low, f.ci_high}}, {"resamples", f.resamples},
            {"residual_rms", f.residual_rms}, {"residual_max", f.residual_max}};
}

/// Fit over the default window; null when the curve does not support one.
nlohmann::json try_fit(const TailEstimate& t, double scale, std::size_t resamples, std::uint64_t seed,
                       std::optional<std::pair<double, double>> window = std::nullopt) {
    try {
        auto w = window ? *window : default_window(t.thresholds, scale);
        return fit_json(fit_exponent(t, w.first, w.second, resamples, seed));
    } catch (const ConfigError& e) {
        return {{"error", e.what()}};
    }
}

int stopped(const Common& c, const std::string& command, const nlohmann::json& cfg, const RunOutcome& o,
            std::vector<fs::path> outputs) {
    write_manifest(c, command, cfg, o, nullptr, outputs);
    std::cout << command << ": stopped after " << o.done << " of " << c.replicas << " replicas; continue with --resume\n";
    return 0;
}

// ----------------------------------------------------------- stabilize

struct StabilizeOpts {
    std::string grid;
    std::string heights;
    long long fill = -1;
    std::vector<std::string> add;
    bool waves = false;
};

WiredGraph box_or_grid(const Common& c, const std::string& grid) {
    return grid.empty() ? cube(c) : build_wired_box(BoxSpec::grid(parse_grid(grid)), c.max_sites);
}

nlohmann::json sites_json(const WiredGraph& g, const std::vector<Site>& sites) {
    nlohmann::json j = nlohmann::json::array();
    for (Site x : sites) {
        auto p = g.coords(x);
        j.push_back(std::vector<int>(p.begin(), p.begin() + g.dim()));
    }
    return j;
}

int cmd_stabilize(const Common& c, const StabilizeOpts& s) {
    WiredGraph g = box_or_grid(c, s.grid);
    HeightConfig cfg;
    if (!s.heights.empty()) {
        for (auto h : parse_list<long long>(s.heights, "heights")) {
            require(h >= 0, "heights must be nonnegative");
            cfg.heights.push_back(static_cast<Height>(h));
        }
        require(cfg.size() == g.size(), "expected " + std::to_string(g.size()) + " heights");
    } else {
        cfg = HeightConfig::filled(g, static_cast<Height>(s.fill >= 0 ? s.fill : g.degree() - 1));
    }
    std::vector<Site> adds;
    for (const auto& a : s.add) adds.push_back(site_of(g, a));
    if (adds.empty()) adds.push_back(g.origin());

    nlohmann::json out;
    out["schema"] = kResultSchema;
    out["instance"] = g.spec().describe();
    out["initial"] = cfg.heights;
    out["initial_recurrent"] = is_recurrent(g, cfg);
    nlohmann::json steps = nlohmann::json::array();
    for (Site x : adds) {
        nlohmann::json step;
        step["site"] = sites_json(g, {x})[0];
        if (s.waves) {
            auto w = decompose_waves(g, cfg, x);
            nlohmann::json wj = nlohmann::json::array();
            for (const auto& wave : w.waves) wj.push_back({{"index", wave.index}, {"last", wave.last_wave}, {"sites", sites_json(g, wave.sites)}});
            step["waves"] = wj;
        }
        Avalanche a = add_and_stabilize(g, cfg, x);
        HeightConfig start = cfg;
        start[x] += 1;
        ensure(conserved(g, start, a.config, a.odometer), "conservation identity failed");
        step["N"] = a.summary.waves;
        step["S"] = a.summary.topplings;
        step["cluster"] = a.summary.cluster_size;
        step["R"] = a.summary.radius;
        step["Rinf"] = a.summary.radius_inf;
        step["odometer"] = a.odometer.counts;
        step["final"] = a.config.heights;
        steps.push_back(step);
        cfg = a.config;
    }
    out["additions"] = steps;
    out["final_recurrent"] = is_recurrent(g, cfg);
    std::vector<fs::path> outputs;
    write_text(out_dir(c) / "stabilize-result.json", out.dump(2) + "\n");
    std::cout << out.dump(2) << "\n";
    return 0;
}

// -------------------------------------------------------------- sample

struct SampleOpts {
    std::string sampler = "exact";
    std::uint64_t burn_in = 0;
};

struct HeightTally {
    std::vector<std::uint64_t> hist;  ///< site-height histogram
    std::uint64_t replicas = 0;
    void merge(const HeightTally& o) {
        replicas += o.replicas;
        detail::add_into(hist, o.hist);
    }
};

struct SampleRecord {
    std::uint64_t index;
    std::vector<Height> heights;
};
nlohmann::json to_json(const SampleRecord& r) { return {{"seed-index", r.index}, {"heights", r.heights}}; }

int cmd_sample(Common c, const SampleOpts& s) {
    c.records = true;
    WiredGraph g = cube(c);
    const Sampler sampler = parse_sampler(s.sampler);
    nlohmann::json cfg = common_json(c, "sample");
    cfg["sampler"] = s.sampler;
    cfg["burn-in"] = s.burn_in;
    HeightTally tally;
    std::vector<SampleRecord> recs;
    auto o = run_checkpointed<HeightTally, SampleRecord>(
        control(c), fingerprint(cfg), [&] { return HeightTally{std::vector<std::uint64_t>(g.degree(), 0), 0}; },
        [&] {
            return [&](std::uint64_t r, HeightTally& t, std::vector<SampleRecord>* out) {
                Stream rng(c.seed, r);
                HeightConfig h = sample_recurrent(g, sampler, s.burn_in, rng);
                ensure(is_recurrent(g, h), "sampler produced a non-recurrent configuration");
                ++t.replicas;
                for (Height v : h.heights) ++t.hist[v];
                if (out) out->push_back({r, h.heights});
            };
        },
        [](const HeightTally& t) { return nlohmann::json{{"hist", t.hist}, {"replicas", t.replicas}}; },
        [](const nlohmann::json& j) { return HeightTally{j.at("hist").get<std::vector<std::uint64_t>>(), j.at("replicas").get<std::uint64_t>()}; },
        tally, &recs);
    std::vector<fs::path> outputs{write_records(c, "sample", o, recs)};
    if (!o.complete) return stopped(c, "sample", cfg, o, outputs);
    nlohmann::json r = {{"replicas", tally.replicas}, {"height_histogram", tally.hist}};
    write_result(c, "sample", r, outputs);
    write_manifest(c, "sample", cfg, o, nullptr, outputs);
    return 0;
}

// ----------------------------------------------------- avalanche-tails

struct AvalancheOpts {
    std::string sampler = "exact";
    std::uint64_t burn_in = 0;
    std::size_t resamples = 1000;
};

nlohmann::json dhar_json(const WiredGraph& g, const AvalancheTally& t, const std::vector<double>& green, Site y) {
    const double mean = t.mean_topplings(y), se = t.se_topplings(y), gv = green[y];
    return {{"site", sites_json(g, {y})[0]}, {"mean_n", mean}, {"se", se}, {"green", gv},
            {"within_4se", std::abs(mean - gv) <= 4 * se}};
}

int cmd_avalanche(const Common& c, const AvalancheOpts& a) {
    const std::string command = "avalanche-tails";
    WiredGraph g = cube(c);
    AvalancheParams p;
    p.dim = c.d;
    p.half_side = c.L;
    p.seed = c.seed;
    p.sampler = parse_sampler(a.sampler);
    p.burn_in = a.burn_in;
    nlohmann::json cfg = common_json(c, command);
    cfg["sampler"] = a.sampler;
    cfg["burn-in"] = a.burn_in;
    cfg["resamples"] = a.resamples;
    AvalancheTally tally;
    std::vector<AvalancheRecord> recs;
    auto o = run_checkpointed<AvalancheTally, AvalancheRecord>(
        control(c), fingerprint(cfg), [&] { return AvalancheTally::empty(g); },
        [&] { return AvalancheWorker(g, p); }, [](const AvalancheTally& t) { return to_json(t); },
        avalanche_tally_from_json, tally, c.records ? &recs : nullptr);
    std::vector<fs::path> outputs;
    if (c.records) outputs.push_back(write_records(c, command, o, recs));
    if (!o.complete) return stopped(c, command, cfg, o, outputs);

    GreenSolver solver(g);
    const Site org = g.origin();
    std::vector<double> green = solver.column(org);
    nlohmann::json r;
    r["replicas"] = tally.replicas;
    r["green_method"] = solver.method();
    r["green_tolerance"] = solver.tolerance();
    nlohmann::json fits;
    for (const char* obs : {"radius", "cluster", "size", "waves"}) {
        TailEstimate t = tally.tail(obs, p);
        write_tail(c, "avalanche-" + std::string(obs), t, outputs);
        const double scale = std::string(obs) == "radius" ? c.L : std::string(obs) == "waves" ? c.L + 1.0 : double(g.size());
        fits[obs] = try_fit(t, scale, a.resamples, c.seed);
    }
    r["fits"] = fits;
    const double n = static_cast<double>(tally.replicas);
    r["nu_N_ge_1"] = 1.0 - tally.wave_probability(0);
    r["nu_eta_o_critical"] = static_cast<double>(tally.source_critical) / n;
    r["wave_probabilities"] = nlohmann::json::array();
    for (std::size_t k = 0; k < tally.wave_hist.size(); ++k) r["wave_probabilities"].push_back(tally.wave_probability(k));
    nlohmann::json dhar = nlohmann::json::array();
    for (int k : {0, 1, 4})
        if (k <= c.L) dhar.push_back(dhar_json(g, tally, green, k ? g.along_axis(k) : org));
    r["dhar"] = dhar;
    r["dhar_flag"] = std::any_of(dhar.begin(), dhar.end(), [](const auto& j) { return !j["within_4se"].template get<bool>(); });
    r["assertions"] = to_json(tally.assertions);

    std::ostringstream sites;
    sites << "# schema=sandlab.sites.v1 d=" << c.d << " L=" << c.L << " seed=" << c.seed << " replicas=" << tally.replicas << "\n";
    sites << "site";
    for (int i = 0; i < c.d; ++i) sites << ",x" << i + 1;
    sites << ",hits,mean_n,se_n,green\n";
    for (Site x = 0; x < g.size(); ++x) {
        sites << x;
        for (int i = 0; i < c.d; ++i) sites << ',' << g.coord(x, i);
        sites << ',' << tally.hits[x] << ',' << format_double(tally.mean_topplings(x)) << ','
              << format_double(tally.se_topplings(x)) << ',' << format_double(green[x]) << '\n';
    }
    fs::path sp = out_dir(c) / "avalanche-sites.csv";
    write_text(sp, sites.str());
    outputs.push_back(sp);
    write_result(c, command, r, outputs);
    write_manifest(c, command, cfg, o, to_json(tally.assertions), outputs);
    std::cout << command << ": " << tally.replicas << " replicas, E[N] = " << tally.mean_topplings(org) << " +- "
              << tally.se_topplings(org) << ", g_L(o,o) = " << green[org] << "\n";
    if (tally.assertions.failed()) {
        std::cerr << "per-sample invariant failures: " << tally.assertions.failed() << "\n";
        return 4;
    }
    return 0;
}

// ------------------------------------------------------- toppling-prob

struct ToppleOpts {
    std::string z = "4,8,16,32";
    std::string route = "both";
    std::size_t resamples = 1000;
};

int cmd_topple(const Common& c, const ToppleOpts& a) {
    const std::string command = "toppling-prob";
    WiredGraph g = cube(c);
    require(a.route == "both" || a.route == "sandpile" || a.route == "tree", "--route must be sandpile, tree or both");
    const bool sand = a.route != "tree", tree = a.route != "sandpile";
    AvalancheParams ap;
    ap.dim = c.d;
    ap.half_side = c.L;
    ap.seed = c.seed;
    TreeRouteParams tp;
    tp.dim = c.d;
    tp.half_side = c.L;
    tp.seed = c.seed;
    tp.radii = parse_list<int>(a.z, "z-list");
    validate_radii_along_e1(g, tp.radii);
    nlohmann::json cfg = common_json(c, command);
    cfg["z"] = tp.radii;
    cfg["route"] = a.route;
    cfg["resamples"] = a.resamples;
    ToppleTally tally;
    auto empty = [&] { return ToppleTally{sand ? AvalancheTally::empty(g) : AvalancheTally{}, {}}; };
    auto o = run_checkpointed<ToppleTally, int>(
        control(c), fingerprint(cfg), empty, [&] { return ToppleWorker(g, ap, tp, sand, tree); },
        [](const ToppleTally& t) { return to_json(t); }, topple_tally_from_json, tally, nullptr);
    std::vector<fs::path> outputs;
    if (!o.complete) return stopped(c, command, cfg, o, outputs);

    GreenSolver solver(g);
    std::vector<double> green = solver.column(g.origin());
    TailEstimate ts;
    ts.observable = "sandpile-route";
    ts.dim = c.d;
    ts.half_side = c.L;
    ts.seed = c.seed;
    ts.nested = false;
    ts.replicas = tally.sandpile.replicas;
    TailEstimate tt = tally.tree.tail(tp);
    tt.seed = c.seed;
    nlohmann::json rows = nlohmann::json::array();
    const double deg = g.degree();
    for (std::size_t i = 0; i < tp.radii.size(); ++i) {
        const Site z = g.along_axis(tp.radii[i]);
        ts.thresholds.push_back(tp.radii[i]);
        ts.survivors.push_back(sand ? tally.sandpile.hits[z] : 0);
        nlohmann::json row = {{"r", tp.radii[i]}, {"green", green[z]}};
        if (sand) {
            row["sandpile"] = ts.survival(i);
            row["sandpile_se"] = ts.standard_error(i);
            row["mean_n"] = tally.sandpile.mean_topplings(z);
            row["markov_bound_holds"] = ts.survival(i) <= tally.sandpile.mean_topplings(z);
        }
        if (tree) {
            row["tree"] = tt.survival(i);
            row["tree_se"] = tt.standard_error(i);
            row["tree_bound"] = tt.survival(i) / deg;
        }
        if (sand && tree) {
            const double se = std::hypot(ts.standard_error(i), tt.standard_error(i) / deg);
            row["inequality_holds_3se"] = ts.survival(i) + 3 * se >= tt.survival(i) / deg;
        }
        rows.push_back(row);
    }
    nlohmann::json r = {{"rows", rows}, {"replicas", o.done}, {"tree_accepted", tally.tree.accepted}};
    const auto whole = std::make_pair(double(tp.radii.front()), double(tp.radii.back()));
    if (sand) {
        write_tail(c, "toppling-sandpile", ts, outputs);
        r["sandpile_fit"] = try_fit(ts, c.L, a.resamples, c.seed, whole);
        r["assertions"] = to_json(tally.sandpile.assertions);
    }
    if (tree) {
        write_tail(c, "toppling-tree", tt, outputs);
        r["tree_fit"] = try_fit(tt, c.L, a.resamples, c.seed, whole);
    }
    write_result(c, command, r, outputs);
    write_manifest(c, command, cfg, o, sand ? to_json(tally.sandpile.assertions) : nlohmann::json(nullptr), outputs);
    std::cout << rows.dump(2) << "\n";
    if (sand && tally.sandpile.assertions.failed()) return 4;
    return 0;
}

// -------------------------------------------------------------- escape

struct EscapeOpts {
    std::string n = "16,23,32,45,64,91,128,181,256";
    int factor = 4;
    int box = 0;
    std::string window;
    std::size_t resamples = 1000;
};

int cmd_escape(const Common& c, const EscapeOpts& a) {
    const std::string command = "escape";
    EscapeParams p;
    p.dim = c.d;
    p.seed = c.seed;
    p.radii = parse_list<int>(a.n, "n-list");
    p.box_factor = a.factor;
    p.box_half_side = a.box;
    require(a.factor >= 1, "--box-factor must be at least 1");
    WiredGraph g = build_wired_box(BoxSpec::cube(c.d, p.box()), c.max_sites);
    nlohmann::json cfg = common_json(c, command);
    cfg.erase("L");
    cfg["n"] = p.radii;
    cfg["box"] = p.box();
    cfg["resamples"] = a.resamples;
    EscapeTally tally;
    auto o = run_checkpointed<EscapeTally, int>(
        control(c), fingerprint(cfg), [] { return EscapeTally{}; }, [&] { return EscapeWorker(g, p); },
        [](const EscapeTally& t) { return to_json(t); }, escape_tally_from_json, tally, nullptr);
    std::vector<fs::path> outputs;
    if (!o.complete) return stopped(c, command, cfg, o, outputs);
    TailEstimate t = tally.tail(p);
    write_tail(c, "escape", t, outputs);
    nlohmann::json r = {{"box", p.box()}, {"replicas", tally.replicas}};
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < p.radii.size(); ++i)
        rows.push_back({{"n", p.radii[i]}, {"es", t.survival(i)}, {"se", t.standard_error(i)}});
    r["rows"] = rows;
    auto w = a.window.empty() ? std::make_pair(double(p.radii.front()), double(p.radii.back())) : parse_window(a.window);
    r["fit"] = try_fit(t, p.box(), a.resamples, c.seed, w);
    write_result(c, command, r, outputs);
    write_manifest(c, command, cfg, o, nullptr, outputs);
    std::cout << r.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------ tree-obs

struct TreeOpts {
    bool past = false;
    std::string window;
    std::size_t resamples = 1000;
};

int cmd_tree(const Common& c, const TreeOpts& a) {
    const std::string command = "tree-obs";
    WiredGraph g = cube(c);
    TreeObsParams p{c.d, c.L, c.seed, a.past};
    nlohmann::json cfg = common_json(c, command);
    cfg["past"] = a.past;
    cfg["resamples"] = a.resamples;
    TreeObsTally tally;
    std::vector<TreeRecord> recs;
    auto o = run_checkpointed<TreeObsTally, TreeRecord>(
        control(c), fingerprint(cfg), [&] { return TreeObsTally::empty(g); }, [&] { return TreeObsWorker(g, p); },
        [](const TreeObsTally& t) { return to_json(t); }, tree_obs_tally_from_json, tally, c.records ? &recs : nullptr);
    std::vector<fs::path> outputs;
    if (c.records) outputs.push_back(write_records(c, command, o, recs));
    if (!o.complete) return stopped(c, command, cfg, o, outputs);
    nlohmann::json r = {{"replicas", tally.replicas}, {"mean_volume", tally.mean_volume()}};
    std::vector<std::string> obs{"diameter", "l1-diameter", "volume"};
    if (a.past) obs.push_back("past");
    std::optional<std::pair<double, double>> window;
    if (!a.window.empty()) window = parse_window(a.window);
    for (const auto& name : obs) {
        TailEstimate t = tally.tail(name, p);
        write_tail(c, "tree-" + name, t, outputs);
        const double scale = name == "diameter" ? c.L : name == "l1-diameter" ? double(c.d) * c.L : double(g.size());
        r["fits"][name] = try_fit(t, scale, a.resamples, c.seed, name == "diameter" ? window : std::nullopt);
    }
    write_result(c, command, r, outputs);
    write_manifest(c, command, cfg, o, nullptr, outputs);
    std::cout << r.dump(2) << "\n";
    return 0;
}

// --------------------------------------------------------------- waves

struct WavesOpts {
    std::string Ls = "4,8,16,32";
    std::size_t kmax = 10;
};

int cmd_waves(const Common& c, const WavesOpts& a) {
    const std::string command = "waves";
    auto Ls = parse_list<int>(a.Ls, "L-list");
    std::vector<WiredGraph> graphs;
    for (int L : Ls) graphs.push_back(build_wired_box(BoxSpec::cube(c.d, L), c.max_sites));
    std::vector<const WiredGraph*> ptrs;
    for (const auto& g : graphs) ptrs.push_back(&g);
    AvalancheParams p;
    p.dim = c.d;
    p.seed = c.seed;
    nlohmann::json cfg = common_json(c, command);
    cfg.erase("L");
    cfg["Ls"] = Ls;
    cfg["kmax"] = a.kmax;
    WaveTally tally;
    auto empty = [&] {
        WaveTally t;
        for (const auto& g : graphs) t.boxes.push_back(AvalancheTally::empty(g));
        return t;
    };
    auto o = run_checkpointed<WaveTally, int>(
        control(c), fingerprint(cfg), empty, [&] { return WaveWorker(ptrs, p); },
        [](const WaveTally& t) { return to_json(t); }, wave_tally_from_json, tally, nullptr);
    std::vector<fs::path> outputs;
    if (!o.complete) return stopped(c, command, cfg, o, outputs);

    std::vector<WaveCountRow> rows;
    AvalancheAssertions as;
    for (std::size_t i = 0; i < graphs.size(); ++i) {
        rows.push_back(wave_count_row(graphs[i], tally.boxes[i], a.kmax));
        as.merge(tally.boxes[i].assertions);
    }
    WaveCountTable table = wave_count_table(c.d, rows);
    std::ostringstream csv;
    csv << "# schema=sandlab.waves.v1 d=" << c.d << " seed=" << c.seed << " kmax=" << a.kmax << "\n";
    csv << "L,replicas,mean_N,se_N,g_oo";
    for (std::size_t k = 0; k <= a.kmax; ++k) csv << ",p" << k;
    csv << "\n";
    nlohmann::json jr = nlohmann::json::array();
    for (const auto& row : table.rows) {
        csv << row.half_side << ',' << row.replicas << ',' << format_double(row.mean) << ',' << format_double(row.se)
            << ',' << format_double(row.green_oo);
        for (double q : row.probability) csv << ',' << format_double(q);
        csv << "\n";
        jr.push_back({{"L", row.half_side},
                      {"mean_N", row.mean},
                      {"se_N", row.se},
                      {"g_oo", row.green_oo},
                      {"probability", row.probability},
                      {"dhar_within_4se", std::abs(row.mean - row.green_oo) <= 4 * row.se}});
    }
    fs::path cp = out_dir(c) / "waves.csv";
    write_text(cp, csv.str());
    outputs.push_back(cp);
    nlohmann::json r = {{"rows", jr},
                        {"drift", table.drift},
                        {"slope", table.slope},
                        {"slope_se", table.slope_se},
                        {"intercept", table.intercept},
                        {"assertions", to_json(as)}};
    write_result(c, command, r, outputs);
    write_manifest(c, command, cfg, o, to_json(as), outputs);
    std::cout << r.dump(2) << "\n";
    return as.failed() ? 4 : 0;
}

// -------------------------------------------------------------- census

struct CensusOpts {
    std::string grid = "2x2";
    std::string w;
    std::string dump;
};

nlohmann::json census_json(const ExhaustiveCensus& k) {
    return {{"instance", k.instance},
            {"stable", k.stable},
            {"recurrent", k.recurrent},
            {"trees", k.trees},
            {"intermediate", k.intermediate},
            {"primed_recurrent", k.primed_recurrent},
            {"two_forests", k.two_forests},
            {"last_waves", k.last_waves},
            {"det", k.det.str()},
            {"det_primed", k.det_primed.str()},
            {"green_ww", k.green_ww.str()}};
}

int cmd_census(const Common& c, const CensusOpts& a) {
    WiredGraph g = box_or_grid(c, a.grid);
    const Site w = a.w.empty() ? g.origin() : site_of(g, a.w);
    ExhaustiveCensus k = census(g, w);
    nlohmann::json r = census_json(k);
    r["schema"] = kResultSchema;
    r["marked"] = sites_json(g, {w})[0];
    if (!a.dump.empty()) {
        std::string text;
        auto emit = [&](const char* kind, const std::vector<std::uint64_t>& codes) {
            for (auto code : codes) text += nlohmann::json{{"schema", kRecordSchema}, {"kind", kind}, {"code", code}}.dump() + "\n";
        };
        emit("recurrent", k.recurrent_codes);
        emit("tree", k.tree_codes);
        emit("intermediate", k.intermediate_codes);
        emit("two-forest", k.forest_codes);
        write_text(a.dump, text);
    }
    write_text(out_dir(c) / "census-result.json", r.dump(2) + "\n");
    std::cout << r.dump(2) << "\n";
    return 0;
}

// ----------------------------------------------------------------- fit

struct FitOpts {
    std::string input;
    std::string window;
    std::size_t resamples = 1000;
    std::uint64_t seed = 0;
    std::string output;
};

int cmd_fit(const FitOpts& a) {
    TailEstimate t = parse_tail_csv(read_text(a.input));
    std::pair<double, double> w;
    if (!a.window.empty()) {
        w = parse_window(a.window);
    } else {
        require(t.half_side > 0, "no --window and the CSV has no box size");
        w = default_window(t.thresholds, t.half_side);
    }
    ExponentFit f = fit_exponent(t, w.first, w.second, a.resamples, a.seed);
    nlohmann::json r = fit_json(f);
    r["schema"] = kResultSchema;
    r["observable"] = t.observable;
    r["input"] = a.input;
    if (!a.output.empty()) write_text(a.output, r.dump(2) + "\n");
    std::cout << r.dump(2) << "\n";
    return 0;
}

// ------------------------------------------------------------ selftest

int cmd_selftest(std::uint64_t seed) {
    int failures = 0;
    auto line = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "PASS " : "FAIL ") << what << "\n";
        failures += !ok;
    };
    auto guarded = [&](const std::string& what, auto fn) {
        try {
            line(fn(), what);
        } catch (const std::exception& e) {
            line(false, what + " (" + e.what() + ")");
        }
    };
    for (auto ext : std::vector<std::vector<int>>{{1, 1}, {1, 2}, {2, 2}, {1, 3}, {2, 3}, {1, 1, 1}, {1, 1, 2}, {3, 3}}) {
        WiredGraph g = build_wired_box(BoxSpec::grid(ext));
        guarded("census identities on " + g.spec().describe(), [&] {
            for (Site w = 0; w < g.size(); ++w) census(g, w);  // census() asserts the identities itself
            return true;
        });
    }
    WiredGraph sq = build_wired_box(BoxSpec::grid({2, 2}));
    ExhaustiveCensus k = census(sq, Site{0});
    guarded("2x2 counts 256/192/192/56", [&] {
        return k.stable == 256 && k.recurrent == 192 && k.trees == 192 && k.intermediate == 56;
    });
    guarded("burning bijection round trips on all recurrent configurations", [&] {
        std::vector<std::uint64_t> codes;
        for (auto code : k.recurrent_codes) {
            HeightConfig h = decode_config(code, sq.size(), sq.degree());
            RootedForest t = burning_bijection(sq, h);
            if (!(inverse_burning(sq, t) == h)) return false;
            codes.push_back(encode_forest(sq, t));
        }
        std::sort(codes.begin(), codes.end());
        return codes == k.tree_codes;
    });
    guarded("inverse burning round trips on all spanning trees", [&] {
        for (auto code : k.tree_codes) {
            RootedForest t = decode_forest(sq, code);
            if (!(burning_bijection(sq, inverse_burning(sq, t)) == t)) return false;
        }
        return true;
    });
    guarded("wave bijection is injective with V(T_o) = wave", [&] {
        std::vector<std::uint64_t> codes;
        for (auto code : k.intermediate_codes) {
            IntermediateConfig eta{decode_config(code, sq.size(), sq.degree() + 1), Site{0}};
            RootedForest f = wave_bijection(sq, eta);
            auto comp = component_sites(sq, f, Site{0});
            std::sort(comp.begin(), comp.end());
            if (comp != wave_of(sq, eta)) return false;
            codes.push_back(encode_forest(sq, f));
        }
        std::sort(codes.begin(), codes.end());
        return std::adjacent_find(codes.begin(), codes.end()) == codes.end() && codes == k.forest_codes;
    });
    guarded("Wilson uniform over 192 trees (1e5 samples, p >= 0.01)", [&] {
        std::map<std::uint64_t, std::uint64_t> counts;
        for (std::uint64_t r = 0; r < 100000; ++r) {
            Stream rng(seed, r);
            ++counts[encode_forest(sq, uniform_spanning_tree(sq, rng))];
        }
        std::vector<std::uint64_t> obs;
        for (auto code : k.tree_codes) obs.push_back(counts[code]);
        std::vector<double> expect(obs.size(), 1.0 / obs.size());
        return counts.size() == 192 && chi_square(obs, expect).p_value >= 0.01;
    });
    std::cout << (failures ? "selftest: FAILED (" + std::to_string(failures) + ")" : std::string("selftest: ok")) << "\n";
    return failures ? 4 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sandlab: Abelian sandpile simulation lab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);
    Common c;

    StabilizeOpts st;
    auto* s_stab = app.add_subcommand("stabilize", "add grains and stabilize one configuration");
    add_box(s_stab, c);
    s_stab->add_option("--grid", st.grid, "explicit grid, e.g. 2x2 (origin at the corner)");
    s_stab->add_option("--heights", st.heights, "comma-separated heights in row-major order");
    s_stab->add_option("--fill", st.fill, "constant initial height (default 2d-1)");
    s_stab->add_option("--add", st.add, "site to add a grain at, e.g. 0,0 (repeatable; default o)");
    s_stab->add_flag("--waves", st.waves, "report the wave decomposition");
    s_stab->add_option("--out", c.out, "output directory");

    SampleOpts sa;
    auto* s_sample = app.add_subcommand("sample", "draw recurrent configurations from nu_L");
    add_box(s_sample, c);
    add_run(s_sample, c);
    s_sample->add_option("--sampler", sa.sampler, "exact or markov");
    s_sample->add_option("--burn-in", sa.burn_in, "Markov burn-in steps (default 10|V|)");

    AvalancheOpts av;
    auto* s_av = app.add_subcommand("avalanche-tails", "survival curves of R, |Av|, S, N and per-site toppling statistics");
    add_box(s_av, c);
    add_run(s_av, c);
    s_av->add_option("--sampler", av.sampler, "exact or markov");
    s_av->add_option("--burn-in", av.burn_in, "Markov burn-in steps (default 10|V|)");
    s_av->add_option("--resamples", av.resamples, "bootstrap resamples for fits");
    s_av->add_flag("--records", c.records, "write per-sample JSON lines");

    ToppleOpts tp;
    auto* s_tp = app.add_subcommand("toppling-prob", "nu_L(z in Av) for z = r e1, sandpile and tree routes");
    add_box(s_tp, c);
    add_run(s_tp, c);
    s_tp->add_option("--z", tp.z, "radii r, comma-separated");
    s_tp->add_option("--route", tp.route, "sandpile, tree or both");
    s_tp->add_option("--resamples", tp.resamples, "bootstrap resamples for fits");

    EscapeOpts es;
    auto* s_es = app.add_subcommand("escape", "SRW-LERW escape probability Es(n)");
    s_es->add_option("--d", c.d, "dimension");
    s_es->add_option("--max-sites", c.max_sites, "resource guard on the number of sites");
    add_run(s_es, c);
    s_es->add_option("--n", es.n, "radii n, ascending, comma-separated");
    s_es->add_option("--box-factor", es.factor, "box half-side = factor * max n");
    s_es->add_option("--box", es.box, "explicit box half-side (overrides --box-factor)");
    s_es->add_option("--window", es.window, "fit window lo:hi (default: all n)");
    s_es->add_option("--resamples", es.resamples, "bootstrap resamples");

    TreeOpts tr;
    auto* s_tr = app.add_subcommand("tree-obs", "diameter and volume of T_o under mu_{L,o}");
    add_box(s_tr, c);
    add_run(s_tr, c);
    s_tr->add_flag("--past", tr.past, "also sample the past of o in the UST");
    s_tr->add_option("--window", tr.window, "fit window lo:hi for the diameter tail");
    s_tr->add_option("--resamples", tr.resamples, "bootstrap resamples");
    s_tr->add_flag("--records", c.records, "write per-sample JSON lines");

    WavesOpts wv;
    auto* s_wv = app.add_subcommand("waves", "wave-count distribution nu_L(N = k) over a list of box sizes");
    s_wv->add_option("--d", c.d, "dimension");
    s_wv->add_option("--max-sites", c.max_sites, "resource guard on the number of sites");
    add_run(s_wv, c);
    s_wv->add_option("--Ls", wv.Ls, "box half-sides, comma-separated");
    s_wv->add_option("--kmax", wv.kmax, "largest k reported");

    CensusOpts ce;
    auto* s_ce = app.add_subcommand("census", "exhaustive enumeration on a tiny instance");
    add_box(s_ce, c);
    s_ce->add_option("--grid", ce.grid, "explicit grid, e.g. 2x2 (use --grid '' with --d/--L for a cube)");
    s_ce->add_option("--w", ce.w, "marked vertex (default: the grid corner / box centre)");
    s_ce->add_option("--dump", ce.dump, "write all objects as JSON lines");
    s_ce->add_option("--out", c.out, "output directory");

    FitOpts fi;
    auto* s_fi = app.add_subcommand("fit", "log-log exponent fit of a survival CSV");
    s_fi->add_option("--input", fi.input, "tail CSV")->required();
    s_fi->add_option("--window", fi.window, "lo:hi (default: drop 4 smallest thresholds and the top decade below L)");
    s_fi->add_option("--resamples", fi.resamples, "bootstrap resamples");
    s_fi->add_option("--seed", fi.seed, "bootstrap seed");
    s_fi->add_option("--output", fi.output, "also write the fit JSON here");

    std::uint64_t self_seed = 0;
    auto* s_self = app.add_subcommand("selftest", "run the enumeration-oracle checks");
    s_self->add_option("--seed", self_seed, "seed for the sampling checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    try {
        if (*s_stab) return cmd_stabilize(c, st);
        if (*s_sample) return cmd_sample(c, sa);
        if (*s_av) return cmd_avalanche(c, av);
        if (*s_tp) return cmd_topple(c, tp);
        if (*s_es) return cmd_escape(c, es);
        if (*s_tr) return cmd_tree(c, tr);
        if (*s_wv) return cmd_waves(c, wv);
        if (*s_ce) return cmd_census(c, ce);
        if (*s_fi) return cmd_fit(fi);
        if (*s_self) return cmd_selftest(self_seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ResourceError& e) {
        std::cerr << "resource guard: " << e.what() << "\n";
        return 3;
    } catch (const InvariantViolation& e) {
        std::cerr << "invariant violation: " << e.what() << "\n";
        return 4;
    } catch (const CheckpointError& e) {
        std::cerr << "checkpoint error: " << e.what() << "\n";
        return 5;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
