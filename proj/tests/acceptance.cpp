// Acceptance run: one PASS/FAIL line per criterion (sub-lines where a
// criterion bundles several checks). INFO lines carry context only.
// Exit status is 1 when any line fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include "sandlab/census.hpp"
#include "sandlab/estimators.hpp"
#include "sandlab/io.hpp"
#include "sandlab/runner.hpp"

using namespace sandlab;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;
AvalancheAssertions all_assertions;  // merged over every avalanche run below

int workers() { return std::max(1u, std::thread::hardware_concurrency()); }

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << v;
    return s.str();
}

void report(const std::string& id, bool ok, const std::string& what, double seconds) {
    std::cout << (ok ? "PASS " : "FAIL ") << id << " " << what << " [" << fmt(seconds, 3) << " s]" << std::endl;
    failures += !ok;
}

void info(const std::string& id, const std::string& what) { std::cout << "INFO " << id << " " << what << std::endl; }

template <class Fn>
void guarded(const std::string& id, Fn fn) {
    const auto t0 = Clock::now();
    try {
        fn(t0);
    } catch (const std::exception& e) {
        report(id, false, std::string("threw: ") + e.what(), since(t0));
    }
}

// ---------------------------------------------------------------- 1, 2, 3

void census_identities() {
    guarded("1", [](Clock::time_point t0) {
        WiredGraph g = build_wired_box(BoxSpec::grid({2, 2}));
        ExhaustiveCensus k = census(g, g.origin());
        const double t = since(t0);
        const bool ok = k.stable == 256 && k.recurrent == 192 && k.det == 192 && k.trees == 192 &&
                        k.intermediate == 56 && k.green_ww == Rational(7) / 24 && k.primed_recurrent == 248 &&
                        k.two_forests == 56 && k.last_waves == 56 && t < 1.0;
        report("1", ok,
               "census 2x2: stable " + std::to_string(k.stable) + ", recurrent " + std::to_string(k.recurrent) +
                   ", trees " + std::to_string(k.trees) + ", intermediate " + std::to_string(k.intermediate) +
                   " (= 192 g(o,o), g(o,o) = " + k.green_ww.str() + "), |R'| " + std::to_string(k.primed_recurrent) +
                   " (= 192 (1 + g)), last-wave " + std::to_string(k.last_waves) + "; runtime < 1 s",
               t);
    });
}

void bijections() {
    guarded("2", [](Clock::time_point t0) {
        WiredGraph g = build_wired_box(BoxSpec::grid({2, 2}));
        const Site o = g.origin();
        ExhaustiveCensus k = census(g, o);
        std::size_t phi_ok = 0, inv_ok = 0, wave_ok = 0;
        std::vector<std::uint64_t> images;
        for (auto code : k.recurrent_codes) {
            HeightConfig h = decode_config(code, g.size(), g.degree());
            phi_ok += inverse_burning(g, burning_bijection(g, h)) == h;
        }
        for (auto code : k.tree_codes) {
            RootedForest t = decode_forest(g, code);
            inv_ok += burning_bijection(g, inverse_burning(g, t)) == t;
        }
        for (auto code : k.intermediate_codes) {
            IntermediateConfig eta{decode_config(code, g.size(), g.degree() + 1), o};
            RootedForest f = wave_bijection(g, eta);
            auto comp = component_sites(g, f, o);
            std::sort(comp.begin(), comp.end());
            wave_ok += comp == wave_of(g, eta);
            images.push_back(encode_forest(g, f));
        }
        std::sort(images.begin(), images.end());
        const bool injective = std::adjacent_find(images.begin(), images.end()) == images.end();
        const double t = since(t0);
        report("2", phi_ok == 192 && inv_ok == 192 && wave_ok == 56 && injective && t < 1.0,
               "bijections 2x2: phi^-1 phi = id on " + std::to_string(phi_ok) + "/192, phi phi^-1 = id on " +
                   std::to_string(inv_ok) + "/192, phi' injective " + (injective ? "yes" : "no") +
                   " with V(T_o) = wave on " + std::to_string(wave_ok) + "/56; runtime < 1 s",
               t);
    });
}

void wilson_uniformity() {
    WiredGraph g = build_wired_box(BoxSpec::grid({2, 2}));
    const Site o = g.origin();
    ExhaustiveCensus k = census(g, o);
    auto run = [&](const std::string& id, const std::vector<std::uint64_t>& support, std::span<const Site> roots,
                   std::uint64_t seed) {
        guarded(id, [&](Clock::time_point t0) {
            std::map<std::uint64_t, std::uint64_t> counts;
            for (std::uint64_t r = 0; r < 1000000; ++r) {
                Stream rng(seed, r);
                ++counts[encode_forest(g, wilson(g, roots, rng))];
            }
            std::vector<std::uint64_t> obs;
            for (auto c : support) obs.push_back(counts.count(c) ? counts[c] : 0);
            std::vector<double> expect(obs.size(), 1.0 / static_cast<double>(obs.size()));
            ChiSquare x = chi_square(obs, expect);
            const double t = since(t0);
            report(id, counts.size() == support.size() && x.p_value >= 0.01 && t < 60,
                   "Wilson " + std::string(roots.empty() ? "roots {s}" : "roots {o, s}") + " over " +
                       std::to_string(support.size()) + " objects, 1e6 samples: chi2 " + fmt(x.statistic) + " on " +
                       std::to_string(x.dof) + " dof, p = " + fmt(x.p_value) + " (reject below 0.01); distinct " +
                       std::to_string(counts.size()) + "; runtime < 60 s",
                   t);
        });
    };
    run("3a", k.tree_codes, {}, 301);
    const Site root[] = {o};
    run("3b", k.forest_codes, root, 302);
}

// -------------------------------------------------------------------- 4

AvalancheTally run_avalanches(const WiredGraph& g, const AvalancheParams& p, std::uint64_t n) {
    AvalancheTally t = AvalancheTally::empty(g);
    run_replicas<AvalancheTally, AvalancheRecord>(
        0, n, workers(), [&] { return AvalancheTally::empty(g); }, [&] { return AvalancheWorker(g, p); }, t, nullptr);
    all_assertions.merge(t.assertions);
    return t;
}

void dhar() {
    guarded("4", [](Clock::time_point t0) {
        WiredGraph g = build_wired_box(BoxSpec::cube(2, 8));
        AvalancheParams p;
        p.half_side = 8;
        p.seed = 404;
        AvalancheTally t = run_avalanches(g, p, 100000);
        GreenSolver solver(g);
        auto column = solver.column(g.origin());
        bool ok = true;
        std::string detail;
        for (int k : {0, 1, 4}) {
            const Site y = k ? g.along_axis(k) : g.origin();
            const double m = t.mean_topplings(y), se = t.se_topplings(y), gy = column[y];
            const double z = (m - gy) / se;
            ok &= std::abs(z) <= 4;
            detail += " y=" + std::to_string(k) + "e1: mean " + fmt(m, 6) + " vs g " + fmt(gy, 6) + " (" + fmt(z, 3) + " SE);";
        }
        const double s = since(t0);
        report("4", ok && s < 300, "Dhar d=2 L=8, 1e5 exact samples, |mean - g| <= 4 SE:" + detail + " runtime < 300 s", s);
    });
}

// -------------------------------------------------------------------- 5

void per_sample_identities() {
    const auto& a = all_assertions;
    auto line = [](const std::string& id, const InvariantCounter& c, const std::string& what) {
        report(id, c.failed == 0 && c.checked > 0,
               what + ": " + std::to_string(c.failed) + " failures in " + std::to_string(c.checked) + " avalanches", 0);
    };
    line("5a", a.waves_equal_topplings, "N = n(o,o)");
    line("5b", a.wave_multiset, "wave multiset = odometer");
    report("5c", a.literal_bound_exceeded == 0 && a.wave_bound.checked > 0,
           "n(o,o) <= R_inf: " + std::to_string(a.literal_bound_exceeded) + " violations in " +
               std::to_string(a.wave_bound.checked) + " avalanches",
           0);
    info("5c", "n(o,o) <= R_inf + 1: " + std::to_string(a.wave_bound.failed) + " violations in " +
                   std::to_string(a.wave_bound.checked) + " avalanches");
    line("5d", a.cluster_le_size, "|Av| <= S");
    line("5e", a.abelian, "Abelian schedule independence (LIFO vs FIFO spot checks)");
    info("5", "conservation failures " + std::to_string(a.conservation.failed) + "/" + std::to_string(a.conservation.checked) +
                  ", source rule failures " + std::to_string(a.source_rule.failed) + "/" +
                  std::to_string(a.source_rule.checked) + ", N > Euclidean R in " +
                  std::to_string(a.euclidean_bound_exceeded));
}

// -------------------------------------------------------------------- 6

void maximal_configurations() {
    guarded("6", [](Clock::time_point t0) {
        int exact = 0, plus_one = 0, total = 0;
        std::string first_bad;
        auto check = [&](int d, int R) {
            WiredGraph g = build_wired_box(BoxSpec::cube(d, R + 2));
            Avalanche a = add_and_stabilize(g, maximal_config(g, R), g.origin());
            const std::uint64_t n = a.odometer[g.origin()];
            ++total;
            exact += n == static_cast<std::uint64_t>(R);
            plus_one += n == static_cast<std::uint64_t>(R) + 1;
            if (n != static_cast<std::uint64_t>(R) && first_bad.empty())
                first_bad = " (first mismatch d=" + std::to_string(d) + " R=" + std::to_string(R) + ": n = " + std::to_string(n) + ")";
        };
        for (int R = 1; R <= 50; ++R) check(2, R);
        for (int R = 1; R <= 10; ++R) check(3, R);
        const double t = since(t0);
        report("6", exact == total && t < 60,
               "n[phi_R] = R for d=2 R=1..50 and d=3 R=1..10: " + std::to_string(exact) + "/" + std::to_string(total) +
                   " exact" + first_bad + "; runtime < 60 s",
               t);
        info("6", "n[phi_R] = R + 1 holds in " + std::to_string(plus_one) + "/" + std::to_string(total) + " cases");
    });
}

// -------------------------------------------------------------------- 7

struct GreenResiduals {
    std::vector<double> radius, residual;
    double n = 0;
};

GreenResiduals green_residuals(int n) {
    WiredGraph g = build_wired_box(BoxSpec::ball(2, n));
    auto column = GreenSolver(g).column(g.origin());
    GreenResiduals r;
    r.n = n;
    for (Site x = 0; x < g.size(); ++x) {
        const double abs_x = g.euclidean(x, g.origin());
        if (abs_x < 2 || abs_x > n / 2.0) continue;
        r.radius.push_back(abs_x);
        r.residual.push_back(g.degree() * column[x] - green_asymptotic(2, n, abs_x));  // G = 2d g
    }
    return r;
}

void green_asymptotics() {
    guarded("7", [](Clock::time_point t0) {
        // K from the two smaller balls: the smallest constant with
        // |G - asymptotic| <= K (1/|x| + 1/n) on both.
        double K = 0;
        for (int n : {16, 32}) {
            GreenResiduals r = green_residuals(n);
            for (std::size_t i = 0; i < r.radius.size(); ++i)
                K = std::max(K, std::abs(r.residual[i]) / (1 / r.radius[i] + 1 / r.n));
        }
        GreenResiduals r = green_residuals(64);
        double worst = 0, worst_at = 0, max_residual = 0;
        for (std::size_t i = 0; i < r.radius.size(); ++i) {
            const double ratio = std::abs(r.residual[i]) / (K * (1 / r.radius[i] + 1 / r.n));
            max_residual = std::max(max_residual, std::abs(r.residual[i]));
            if (ratio > worst) {
                worst = ratio;
                worst_at = r.radius[i];
            }
        }
        report("7", worst <= 1,
               "Green d=2 B(64), 2 <= |x| <= 32, G vs (2/pi)(log n - log|x|): max residual " + fmt(max_residual) +
                   ", K = " + fmt(K) + " fitted on n = 16, 32, max residual/bound " + fmt(worst) + " at |x| = " +
                   fmt(worst_at) + " (<= 1)",
               since(t0));
    });
}

// -------------------------------------------------------------------- 8

void escape_exponent() {
    guarded("8a", [](Clock::time_point t0) {
        EscapeParams p{2, 801, {16, 23, 32, 45, 64, 91, 128, 181, 256}, 2, 0};
        WiredGraph g = build_wired_box(BoxSpec::cube(2, p.box()));
        EscapeTally t;
        run_replicas<EscapeTally, int>(
            0, 100000, workers(), [] { return EscapeTally{}; }, [&] { return EscapeWorker(g, p); }, t, nullptr);
        TailEstimate tail = t.tail(p);
        ExponentFit f = fit_exponent(tail, 16, 256, 1000, 801);
        std::string curve;
        for (std::size_t i = 0; i < tail.thresholds.size(); ++i)
            curve += " " + fmt(tail.thresholds[i], 3) + ":" + fmt(tail.survival(i), 4);
        const double s = since(t0);
        report("8a", f.slope >= -0.9 && f.slope <= -0.6 && s < 1800,
               "escape d=2, n = 16..256, box L = " + std::to_string(p.box()) + ", 1e5 replicas: slope " + fmt(f.slope) +
                   " [95% CI " + fmt(f.ci_low) + ", " + fmt(f.ci_high) + "] in [-0.9, -0.6]; runtime < 1800 s",
               s);
        info("8a", "Es(n):" + curve);
    });
}

void tree_diameter_exponent() {
    guarded("8b", [](Clock::time_point t0) {
        WiredGraph g = build_wired_box(BoxSpec::cube(5, 8));
        TreeObsParams p{5, 8, 802, false};
        TreeObsTally t = TreeObsTally::empty(g);
        run_replicas<TreeObsTally, TreeRecord>(
            0, 100000, workers(), [&] { return TreeObsTally::empty(g); }, [&] { return TreeObsWorker(g, p); }, t, nullptr);
        TailEstimate tail = t.tail("diameter", p);
        auto w = default_window(tail.thresholds, p.half_side);
        ExponentFit f = fit_exponent(tail, w.first, w.second, 1000, 802);
        std::string curve;
        for (std::size_t i = 0; i < tail.thresholds.size() && tail.survivors[i] > 0; ++i)
            curve += " " + fmt(tail.thresholds[i], 3) + ":" + fmt(tail.survival(i), 4);
        const double s = since(t0);
        report("8b", f.slope >= -2.6 && f.slope <= -1.4 && s < 3600,
               "two-root tree d=5 L=8, 1e5 replicas, diam(T_o) tail over [" + fmt(w.first) + ", " + fmt(w.second) +
                   "]: slope " + fmt(f.slope) + " [95% CI " + fmt(f.ci_low) + ", " + fmt(f.ci_high) +
                   "] in [-2.6, -1.4]; runtime < 3600 s",
               s);
        info("8b", "P(diam >= r):" + curve);
    });
}

void wave_count_slope() {
    guarded("8c", [](Clock::time_point t0) {
        std::vector<WiredGraph> graphs;
        for (int L : {4, 8, 16, 32}) graphs.push_back(build_wired_box(BoxSpec::cube(2, L)));
        std::vector<const WiredGraph*> ptrs;
        for (const auto& g : graphs) ptrs.push_back(&g);
        AvalancheParams p;
        p.seed = 803;
        auto empty = [&] {
            WaveTally t;
            for (const auto& g : graphs) t.boxes.push_back(AvalancheTally::empty(g));
            return t;
        };
        WaveTally t = empty();
        run_replicas<WaveTally, int>(0, 200000, workers(), empty, [&] { return WaveWorker(ptrs, p); }, t, nullptr);
        std::vector<WaveCountRow> rows;
        for (std::size_t i = 0; i < graphs.size(); ++i) {
            rows.push_back(wave_count_row(graphs[i], t.boxes[i], 10));
            all_assertions.merge(t.boxes[i].assertions);
        }
        WaveCountTable table = wave_count_table(2, rows);
        std::string detail;
        for (const auto& r : table.rows)
            detail += " L=" + std::to_string(r.half_side) + ": E[N] " + fmt(r.mean, 5) + " +- " + fmt(r.se, 2) +
                      ", g(o,o) " + fmt(r.green_oo, 5) + ";";
        report("8c", std::abs(table.slope - 1.0) <= 0.05,
               "E[N] vs g_L(o,o) over L = 4, 8, 16, 32 (2e5 replicas each): slope " + fmt(table.slope) + " +- " +
                   fmt(table.slope_se, 2) + " within 1 +- 0.05",
               since(t0));
        info("8c", detail.substr(1));
    });
}

// -------------------------------------------------------------------- 9

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SANDLAB_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void determinism() {
    guarded("9", [](Clock::time_point t0) {
        const fs::path root = fs::temp_directory_path() / ("sandlab-acceptance-" + std::to_string(::getpid()));
        fs::remove_all(root);
        const std::vector<std::string> experiments{
            "avalanche-tails --L 8 --replicas 4000 --seed 9 --records",
            "toppling-prob --L 8 --replicas 2000 --seed 9 --z 1,2,4",
            "escape --n 4,8,16 --replicas 2000 --seed 9",
            "tree-obs --d 3 --L 6 --replicas 2000 --seed 9 --past --records",
            "waves --Ls 4,8 --replicas 2000 --seed 9",
            "sample --L 4 --replicas 500 --seed 9",
        };
        int compared = 0, differing = 0, bad_exit = 0;
        std::string first_diff;
        for (std::size_t i = 0; i < experiments.size(); ++i) {
            const fs::path a = root / std::to_string(i) / "w1", b = root / std::to_string(i) / "w3";
            bad_exit += run_cli(experiments[i] + " --workers 1 --out " + a.string()) != 0;
            bad_exit += run_cli(experiments[i] + " --workers 3 --out " + b.string()) != 0;
            if (!fs::exists(a)) continue;
            for (const auto& entry : fs::directory_iterator(a)) {
                const std::string name = entry.path().filename().string();
                if (name.find("manifest") != std::string::npos) continue;  // wall time and worker ranges
                ++compared;
                if (!fs::exists(b / name) || read_text(entry.path()) != read_text(b / name)) {
                    ++differing;
                    if (first_diff.empty()) first_diff = " (first: " + name + ")";
                }
            }
        }
        fs::remove_all(root);
        report("9", bad_exit == 0 && differing == 0 && compared > 0,
               "workers 1 vs 3, same config and seed: " + std::to_string(compared - differing) + "/" +
                   std::to_string(compared) + " output files byte-identical over " + std::to_string(experiments.size()) +
                   " experiments" + first_diff + (bad_exit ? ", nonzero exits " + std::to_string(bad_exit) : ""),
               since(t0));
    });
}

}  // namespace

int main() {
    std::cout << "sandlab acceptance, " << workers() << " worker(s)" << std::endl;
    census_identities();
    bijections();
    wilson_uniformity();
    dhar();
    maximal_configurations();
    green_asymptotics();
    escape_exponent();
    tree_diameter_exponent();
    wave_count_slope();
    per_sample_identities();
    determinism();
    std::cout << (failures ? std::to_string(failures) + " line(s) FAIL" : std::string("all PASS")) << std::endl;
    return failures ? 1 : 0;
}
