#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "sandlab/laplacian.hpp"
#include "sandlab/lattice.hpp"

using namespace sandlab;

namespace {

WiredGraph square() { return build_wired_box(BoxSpec::grid({2, 2})); }

}  // namespace

TEST(Lattice, CubeSiteCountAndRoundTrip) {
    for (int d = 2; d <= 5; ++d) {
        for (int L = 1; L <= (d <= 3 ? 4 : 2); ++L) {
            WiredGraph g = build_wired_box(BoxSpec::cube(d, L));
            ASSERT_EQ(g.size(), static_cast<Site>(std::pow(2 * L + 1, d)));
            for (Site x = 0; x < g.size(); ++x) ASSERT_EQ(g.site_at(g.coords(x)), x);
        }
    }
}

TEST(Lattice, RowMajorIndexing) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 1));
    // First axis slowest, coordinates shifted to [0, 2L].
    EXPECT_EQ(g.coords(0)[0], -1);
    EXPECT_EQ(g.coords(0)[1], -1);
    EXPECT_EQ(g.coords(1)[1], 0);
    EXPECT_EQ(g.coords(3)[0], 0);
    EXPECT_EQ(g.origin(), 4u);
}

TEST(Lattice, CornerAndCentreSlots) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 1));
    EXPECT_EQ(g.size(), 9u);
    Point corner{};
    corner[0] = 1;
    corner[1] = 1;
    Site c = g.site_at(corner);
    EXPECT_EQ(g.sink_edges(c), 2);
    // Slot order (+e1, -e1, +e2, -e2): +e1 and +e2 leave the box.
    EXPECT_TRUE(g.is_sink(g.neighbour(c, 0)));
    EXPECT_FALSE(g.is_sink(g.neighbour(c, 1)));
    EXPECT_TRUE(g.is_sink(g.neighbour(c, 2)));
    EXPECT_FALSE(g.is_sink(g.neighbour(c, 3)));

    WiredGraph g3 = build_wired_box(BoxSpec::cube(3, 1));
    EXPECT_EQ(g3.size(), 27u);
    EXPECT_EQ(g3.sink_edges(g3.origin()), 0);
    for (int s = 0; s < 6; ++s) EXPECT_EQ(g3.l1(g3.neighbour(g3.origin(), s), g3.origin()), 1);
}

TEST(Lattice, SinkEdgesCountExitingDirections) {
    WiredGraph g = build_wired_box(BoxSpec::cube(3, 2));
    for (Site x = 0; x < g.size(); ++x) {
        int exits = 0;
        for (int i = 0; i < 3; ++i) exits += (std::abs(g.coord(x, i)) == 2);
        ASSERT_EQ(g.sink_edges(x), exits);
        for (int s = 0; s < g.degree(); ++s) {
            Site y = g.neighbour(x, s);
            if (!g.is_sink(y)) {
                ASSERT_EQ(g.l1(x, y), 1);
            }
        }
    }
}

TEST(Lattice, SquareHasTwoInteriorAndTwoSinkEdges) {
    WiredGraph g = square();
    ASSERT_EQ(g.size(), 4u);
    for (Site x = 0; x < 4; ++x) EXPECT_EQ(g.sink_edges(x), 2);
}

TEST(Lattice, RejectsUnsupportedSizes) {
    EXPECT_THROW(build_wired_box(BoxSpec::cube(1, 3)), ConfigError);
    EXPECT_THROW(build_wired_box(BoxSpec::cube(6, 1)), ConfigError);
    EXPECT_THROW(build_wired_box(BoxSpec::cube(2, 0)), ConfigError);
    EXPECT_THROW(build_wired_box(BoxSpec::cube(5, 40)), ResourceError);
}

TEST(Lattice, BallContainsExactlyEuclideanPoints) {
    WiredGraph g = build_wired_box(BoxSpec::ball(2, 5));
    Site count = 0;
    for (int a = -5; a <= 5; ++a)
        for (int b = -5; b <= 5; ++b) count += (a * a + b * b <= 25);
    EXPECT_EQ(g.size(), count);
}

TEST(Laplacian, RowSumsEqualSinkEdges) {
    for (auto spec : {BoxSpec::cube(2, 3), BoxSpec::cube(3, 2), BoxSpec::grid({2, 3}), BoxSpec::ball(2, 4)}) {
        WiredGraph g = build_wired_box(spec);
        LaplacianView lap(g);
        for (Site x = 0; x < g.size(); ++x) ASSERT_EQ(lap.row_sum(x), g.sink_edges(x));
    }
}

TEST(Laplacian, MatchesCoordinateOracle) {
    WiredGraph g = build_wired_box(BoxSpec::grid({2, 3}));
    auto ref = oracle::laplacian(g);
    LaplacianView lap(g);
    for (Site x = 0; x < g.size(); ++x)
        for (Site y = 0; y < g.size(); ++y) ASSERT_EQ(lap.entry(x, y), ref[x][y]);
}

TEST(TreeCount, SquareDominoAndSingleVertex) {
    WiredGraph sq = square();
    EXPECT_EQ(spanning_tree_count(sq).exact.value(), 192);
    EXPECT_EQ(spanning_tree_count(sq, Site{0}).exact.value(), 248);
    EXPECT_EQ(oracle::det(oracle::laplacian(sq)), 192);
    EXPECT_EQ(oracle::det(oracle::laplacian(sq, 0)), 248);

    WiredGraph domino = build_wired_box(BoxSpec::grid({1, 2}));
    EXPECT_EQ(spanning_tree_count(domino).exact.value(), 15);
    EXPECT_EQ(oracle::det(oracle::laplacian(domino)), 15);

    WiredGraph single = build_wired_box(BoxSpec::grid({1, 1}));
    EXPECT_EQ(spanning_tree_count(single).exact.value(), 4);
    WiredGraph single3 = build_wired_box(BoxSpec::grid({1, 1, 1}));
    EXPECT_EQ(spanning_tree_count(single3).exact.value(), 6);
}

TEST(TreeCount, MatchesBruteForceEnumerationUpToSixVertices) {
    for (auto spec : {BoxSpec::grid({1, 1}), BoxSpec::grid({1, 2}), BoxSpec::grid({2, 2}), BoxSpec::grid({1, 3}),
                      BoxSpec::grid({2, 3}), BoxSpec::grid({1, 1, 2}), BoxSpec::grid({1, 2, 2})}) {
        WiredGraph g = build_wired_box(spec);
        ASSERT_LE(g.size(), 6u);
        EXPECT_EQ(spanning_tree_count(g).exact.value(), oracle::count_trees(g)) << spec.describe();
    }
}

TEST(TreeCount, LogDeterminantAboveExactLimit) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 4));  // 81 vertices
    TreeCount t = spanning_tree_count(g);
    EXPECT_FALSE(t.exact.has_value());
    EXPECT_THROW(spanning_tree_count(g, std::nullopt, true), ResourceError);
    // Compare with the exact count on the largest cube below the limit,
    // checked through the log.
    WiredGraph small = build_wired_box(BoxSpec::cube(2, 3));
    TreeCount ts = spanning_tree_count(small);
    ASSERT_TRUE(ts.exact.has_value());
    EXPECT_NEAR(ts.log_count, std::log(ts.exact->convert_to<double>()), 1e-9);
    EXPECT_GT(t.log_count, ts.log_count);
}

TEST(Green, SquareOriginIsSevenTwentyFourths) {
    WiredGraph g = square();
    EXPECT_EQ(green_rational(g, 0, 0), Rational(7, 24));
    EXPECT_EQ(oracle::inverse_entry(oracle::laplacian(g), 0, 0), oracle::cpp_rational(7, 24));
    EXPECT_NEAR(green_exact(g, 0, 0), 7.0 / 24.0, 1e-14);
    // 56 = g(w,w) * 192.
    EXPECT_EQ(green_rational(g, 0, 0) * 192, Rational(56));
}

TEST(Green, SymmetricAndCramerIntegral) {
    WiredGraph g = build_wired_box(BoxSpec::grid({2, 3}));
    BigInt det = spanning_tree_count(g).exact.value();
    auto ref = oracle::laplacian(g);
    for (Site x = 0; x < g.size(); ++x)
        for (Site y = 0; y < g.size(); ++y) {
            Rational v = green_rational(g, x, y);
            ASSERT_EQ(v, green_rational(g, y, x));
            ASSERT_EQ(v, oracle::inverse_entry(ref, x, y));
            Rational scaled = v * Rational(det);
            ASSERT_EQ(denominator(scaled), 1);
        }
}

TEST(Green, SolverMatchesExactRational) {
    WiredGraph g = build_wired_box(BoxSpec::cube(2, 3));
    GreenSolver solver(g);
    EXPECT_EQ(solver.method(), "sparse-ldlt");
    const Site o = g.origin();
    for (Site y : {o, g.along_axis(1), g.along_axis(3), Site{0}}) {
        double exact = green_rational(g, o, y).convert_to<double>();
        EXPECT_NEAR(solver.green(o, y), exact, 1e-12);
        EXPECT_NEAR(solver.green(y, o), exact, 1e-12);
    }
}

TEST(Green, ConjugateGradientAboveDirectLimit) {
    WiredGraph g = build_wired_box(BoxSpec::cube(3, 24));  // 117649 sites
    GreenSolver solver(g);
    EXPECT_EQ(solver.method(), "conjugate-gradient");
    EXPECT_DOUBLE_EQ(solver.tolerance(), 1e-10);
    const Site o = g.origin();
    std::vector<double> col = solver.column(o);
    // Residual of Delta u = 1_o at a few sites.
    LaplacianView lap(g);
    for (Site x : {o, g.along_axis(1), g.along_axis(10, 2), Site{0}}) {
        double r = lap.diagonal(x) * col[x];
        for (int s = 0; s < g.degree(); ++s) {
            Site y = g.neighbour(x, s);
            if (!g.is_sink(y)) r -= col[y];
        }
        EXPECT_NEAR(r, x == o ? 1.0 : 0.0, 1e-7);
    }
    // 6 g(o,o) is the expected number of visits to o, a bit above the
    // infinite-lattice value 1.516.
    EXPECT_GT(6 * col[o], 1.45);
    EXPECT_LT(6 * col[o], 1.52);
}

TEST(Green, AsymptoticFormula) {
    EXPECT_NEAR(green_asymptotic(2, 64, 8), 2.0 / M_PI * std::log(8.0), 1e-12);
    EXPECT_NEAR(green_asymptotic(2, 64, 8), 1.3238, 5e-4);
    EXPECT_DOUBLE_EQ(green_asymptotic(2, 32, 32), 0.0);
    EXPECT_THROW(green_asymptotic(2, 64, 0), ConfigError);
    EXPECT_THROW(green_asymptotic(2, 64, 65), ConfigError);
    EXPECT_THROW(green_asymptotic(3, 64, 4), ConfigError);  // c1 required
    EXPECT_NEAR(green_asymptotic(3, 1e12, 4, 0.3), 0.3 / 4, 1e-9);
}

TEST(Green, ThreeDimensionalConstantFit) {
    // Synthetic values exactly of the asymptotic form recover c1.
    std::vector<double> radii{2, 3, 5, 8}, values;
    for (double r : radii) values.push_back(0.25 * (1 / r - 1 / 20.0));
    EXPECT_NEAR(fit_green_constant(3, 20, radii, values), 0.25, 1e-12);
}
