#include <gtest/gtest.h>

#include "sandlab/census.hpp"
#include "sandlab/forest.hpp"
#include "sandlab/waves.hpp"

using namespace sandlab;

namespace {

HeightConfig exact_sample(const WiredGraph& g, Stream& rng) { return inverse_burning(g, uniform_spanning_tree(g, rng)); }

}  // namespace

TEST(Waves, NoWavesWhenSourceBelowThreshold) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 3));
    HeightConfig c = maximal_stable(g);
    c[g.origin()] = 2;
    WaveDecomposition w = decompose_waves(g, c, g.origin());
    EXPECT_TRUE(w.waves.empty());
    EXPECT_TRUE(w.intermediates.empty());
    EXPECT_EQ(w.final_config[g.origin()], 3u);
}

TEST(Waves, MaximalConfigWavesAreNestedCubes) {
    const int R = 4;
    WiredGraph g = build_wired_box(BoxSpec::cube(2, R + 2));
    const Site o = g.origin();
    WaveDecomposition w = decompose_waves(g, maximal_config(g, R), o);
    ASSERT_EQ(w.waves.size(), static_cast<std::size_t>(R + 1));
    for (int k = 1; k <= R + 1; ++k) {
        const int radius = R - k + 1;
        std::vector<Site> expect;
        for (Site x = 0; x < g.size(); ++x)
            if (g.linf(x, o) <= radius) expect.push_back(x);
        EXPECT_EQ(w.waves[static_cast<std::size_t>(k - 1)].sites, expect) << "wave " << k;
    }
    EXPECT_TRUE(w.waves.back().last_wave);
}

TEST(Waves, DecompositionReconstructsOdometer) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 8));
    const Site o = g.origin();
    for (std::uint64_t r = 0; r < 200; ++r) {
        Stream rng(31, r);
        HeightConfig c = exact_sample(g, rng);
        WaveDecomposition w = decompose_waves(g, c, o);
        Avalanche a = add_and_stabilize(g, c, o);
        ASSERT_EQ(w.waves.size(), a.odometer[o]);
        ASSERT_EQ(w.odometer, a.odometer);
        ASSERT_EQ(w.final_config, a.config);
        ASSERT_EQ(toppling_counts(g, c, o), a.odometer);
        for (Site y = 0; y < g.size(); ++y) ASSERT_LE(a.odometer[y], a.odometer[o]);
        for (const auto& eta : w.intermediates) {
            ASSERT_EQ(eta.config[o], 4u);
            ASSERT_NO_THROW(check_intermediate(g, eta));
            ASSERT_TRUE(burn(g, eta.config, o).recurrent);
            ASSERT_FALSE(is_stable(g, eta.config));
        }
        if (!w.waves.empty()) {
            ASSERT_TRUE(last_wave_test(g, w.intermediates.back()));
            for (std::size_t k = 0; k + 1 < w.waves.size(); ++k) ASSERT_FALSE(last_wave_test(g, w.intermediates[k]));
            for (std::size_t k = 0; k < w.waves.size(); ++k) {
                ASSERT_EQ(wave_of(g, w.intermediates[k]), w.waves[k].sites);
                ASSERT_TRUE(std::binary_search(w.waves[k].sites.begin(), w.waves[k].sites.end(), o));
            }
        }
    }
}

TEST(Waves, LastWaveTestExamples) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 3));
    const Site o = g.origin();
    // All other heights 0: the wave is {o} alone.
    HeightConfig lone = HeightConfig::filled(g, 0);
    lone[o] = 4;
    EXPECT_EQ(wave_of(g, {lone, o}), std::vector<Site>{o});
    EXPECT_TRUE(last_wave_test(g, {lone, o}));
    // Everything at 3: the wave covers V, including every neighbour of o.
    HeightConfig full = maximal_stable(g);
    full[o] = 4;
    EXPECT_EQ(wave_of(g, {full, o}).size(), g.size());
    EXPECT_FALSE(last_wave_test(g, {full, o}));
    // A boundary source always has s as a neighbour outside the wave.
    Site corner = 0;
    HeightConfig fc = maximal_stable(g);
    fc[corner] = 4;
    EXPECT_TRUE(last_wave_test(g, {fc, corner}));
}

TEST(Waves, RejectsMalformedIntermediate) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 2));
    HeightConfig c = maximal_stable(g);
    EXPECT_THROW(wave_of(g, {c, g.origin()}), ConfigError);
    c[g.origin()] = 4;
    c[0] = 5;
    EXPECT_THROW(wave_of(g, {c, g.origin()}), ConfigError);
}

TEST(Waves, SquareLastWaveCountWithinBounds) {
    WiredGraph g = build_wired_box(BoxSpec::grid({2, 2}));
    ExhaustiveCensus c = census(g, Site{0});
    EXPECT_EQ(c.intermediate, 56u);
    EXPECT_GE(c.last_waves, 48u);
    EXPECT_LE(c.last_waves, 192u);
    // Independently: every intermediate on the square is a last wave because
    // the corner source always has s as a neighbour.
    EXPECT_EQ(c.last_waves, 56u);
}
