#pragma once

// Dirichlet Laplacian of a wired box, exact spanning-tree counts and Green
// functions g_V = (Delta_V)^{-1}. The random-walk Green function is
// G_V = 2d * g_V.

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sandlab/lattice.hpp"

namespace sandlab {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// Exact integer arithmetic is used up to this many vertices.
inline constexpr Site kExactVertexLimit = 64;

/// Delta_H, optionally with one extra sink edge at `marked` (Delta'_H = Delta_H + 1_{w,w}).
class LaplacianView {
public:
    explicit LaplacianView(const WiredGraph& g, std::optional<Site> marked = std::nullopt)
        : graph_(&g), marked_(marked) {
        if (marked_) require(*marked_ < g.size(), "marked vertex outside the box");
    }

    const WiredGraph& graph() const { return *graph_; }
    std::optional<Site> marked() const { return marked_; }

    long long diagonal(Site x) const { return graph_->degree() + (marked_ && *marked_ == x ? 1 : 0); }

    /// Delta(x, y) for x, y in V.
    long long entry(Site x, Site y) const {
        if (x == y) return diagonal(x);
        long long a = 0;
        for (int s = 0; s < graph_->degree(); ++s)
            if (graph_->neighbour(x, s) == y) ++a;
        return -a;
    }

    /// Sum over y in V of Delta(x, y): the number of edges from x to s.
    long long row_sum(Site x) const {
        long long s = diagonal(x);
        for (int k = 0; k < graph_->degree(); ++k)
            if (!graph_->is_sink(graph_->neighbour(x, k))) --s;
        return s;
    }

    Eigen::SparseMatrix<double> sparse() const {
        const Site n = graph_->size();
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(static_cast<std::size_t>(n) * (graph_->degree() + 1));
        for (Site x = 0; x < n; ++x) {
            trip.emplace_back(x, x, static_cast<double>(diagonal(x)));
            for (int k = 0; k < graph_->degree(); ++k) {
                Site y = graph_->neighbour(x, k);
                if (!graph_->is_sink(y)) trip.emplace_back(x, y, -1.0);
            }
        }
        Eigen::SparseMatrix<double> m(n, n);
        m.setFromTriplets(trip.begin(), trip.end());
        return m;
    }

    template <class T>
    std::vector<std::vector<T>> dense() const {
        const Site n = graph_->size();
        std::vector<std::vector<T>> m(n, std::vector<T>(n, T(0)));
        for (Site x = 0; x < n; ++x) {
            m[x][x] = T(diagonal(x));
            for (int k = 0; k < graph_->degree(); ++k) {
                Site y = graph_->neighbour(x, k);
                if (!graph_->is_sink(y)) m[x][y] -= T(1);
            }
        }
        return m;
    }

private:
    const WiredGraph* graph_;
    std::optional<Site> marked_;
};

namespace detail {

// Fraction-free (Bareiss) elimination; every intermediate quotient is exact.
inline BigInt bareiss_determinant(std::vector<std::vector<BigInt>> a) {
    const std::size_t n = a.size();
    if (n == 0) return BigInt(1);
    BigInt sign = 1;
    BigInt prev = 1;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        if (a[k][k] == 0) {
            std::size_t p = k + 1;
            while (p < n && a[p][k] == 0) ++p;
            if (p == n) return BigInt(0);
            std::swap(a[k], a[p]);
            sign = -sign;
        }
        for (std::size_t i = k + 1; i < n; ++i) {
            for (std::size_t j = k + 1; j < n; ++j) {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    return sign * a[n - 1][n - 1];
}

}  // namespace detail

struct TreeCount {
    std::optional<BigInt> exact;  ///< set when |V| <= kExactVertexLimit
    double log_count = 0;         ///< natural log of det Delta
};

/// det Delta_H (= number of spanning trees = |R_H|), or det Delta'_H when
/// `extra_root` is given. Throws ResourceError if `require_exact` is set on a
/// graph too large for exact arithmetic.
inline TreeCount spanning_tree_count(const WiredGraph& g, std::optional<Site> extra_root = std::nullopt,
                                     bool require_exact = false) {
    LaplacianView lap(g, extra_root);
    TreeCount out;
    if (g.size() <= kExactVertexLimit) {
        out.exact = detail::bareiss_determinant(lap.dense<BigInt>());
        out.log_count = std::log(out.exact->convert_to<double>());
        return out;
    }
    if (require_exact)
        throw ResourceError("exact determinant requested on " + std::to_string(g.size()) + " vertices (limit " +
                            std::to_string(kExactVertexLimit) + ")");
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap.sparse());
    ensure(ldlt.info() == Eigen::Success, "Laplacian factorization failed");
    double s = 0;
    auto dvec = ldlt.vectorD();
    for (Eigen::Index i = 0; i < dvec.size(); ++i) s += std::log(dvec[i]);
    out.log_count = s;
    return out;
}

/// g_V(x, y) as an exact rational, by Gaussian elimination over Q.
inline Rational green_rational(const WiredGraph& g, Site x, Site y) {
    require(g.size() <= kExactVertexLimit, "exact Green function limited to small graphs");
    require(x < g.size() && y < g.size(), "site outside the box");
    auto a = LaplacianView(g).dense<Rational>();
    const std::size_t n = a.size();
    std::vector<Rational> b(n, Rational(0));
    b[y] = 1;
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t p = k;
        while (p < n && a[p][k] == 0) ++p;
        ensure(p < n, "singular Laplacian");
        std::swap(a[k], a[p]);
        std::swap(b[k], b[p]);
        for (std::size_t i = k + 1; i < n; ++i) {
            if (a[i][k] == 0) continue;
            Rational f = a[i][k] / a[k][k];
            for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
            b[i] -= f * b[k];
        }
    }
    std::vector<Rational> u(n);
    for (std::size_t k = n; k-- > 0;) {
        Rational s = b[k];
        for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * u[j];
        u[k] = s / a[k][k];
    }
    return u[x];
}

/// Factorizes Delta_V once and answers g_V queries. Direct sparse Cholesky up
/// to kDirectLimit sites, conjugate gradients beyond.
class GreenSolver {
public:
    static constexpr Site kDirectLimit = 100000;
    static constexpr double kCgTolerance = 1e-10;

    explicit GreenSolver(const WiredGraph& g) : graph_(&g), matrix_(LaplacianView(g).sparse()) {
        if (g.size() <= kDirectLimit) {
            direct_.compute(matrix_);
            ensure(direct_.info() == Eigen::Success, "singular Laplacian: construction bug");
        } else {
            cg_.setTolerance(kCgTolerance);
            cg_.compute(matrix_);
        }
    }

    bool direct() const { return graph_->size() <= kDirectLimit; }
    std::string method() const { return direct() ? "sparse-ldlt" : "conjugate-gradient"; }
    double tolerance() const { return direct() ? 0.0 : kCgTolerance; }

    /// The column g_V(., y).
    std::vector<double> column(Site y) const {
        require(y < graph_->size(), "site outside the box");
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(graph_->size());
        rhs[y] = 1.0;
        Eigen::VectorXd u;
        if (direct()) {
            u = direct_.solve(rhs);
        } else {
            u = cg_.solve(rhs);
            ensure(cg_.info() == Eigen::Success, "conjugate gradients did not converge");
        }
        return {u.data(), u.data() + u.size()};
    }

    double green(Site x, Site y) const {
        require(x < graph_->size(), "site outside the box");
        return column(y)[x];
    }

private:
    const WiredGraph* graph_;
    Eigen::SparseMatrix<double> matrix_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> direct_;
    Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg_;
};

/// g_V(x, y) = (Delta_V)^{-1}(x, y).
inline double green_exact(const WiredGraph& g, Site x, Site y) { return GreenSolver(g).green(x, y); }

/// Leading-order G_{B(n)}(o, x) as a function of |x|:
/// d = 2: (2/pi)(log n - log|x|); d >= 3: c1 (|x|^{2-d} - n^{2-d}).
/// The d >= 3 constant is not fixed here; pass a fitted value.
inline double green_asymptotic(int d, double n, double abs_x, double c1 = 0.0) {
    require(d >= 2, "dimension must be at least 2");
    require(abs_x > 0, "green_asymptotic is singular at x = o; use the exact solve");
    require(abs_x <= n, "green_asymptotic requires 0 < |x| <= n");
    if (d == 2) return 2.0 / boost::math::constants::pi<double>() * (std::log(n) - std::log(abs_x));
    require(c1 > 0, "d >= 3 requires a positive constant c1");
    return c1 * (std::pow(abs_x, 2.0 - d) - std::pow(n, 2.0 - d));
}

/// Least-squares c1 for G_{B(n)}(o, x) ~ c1 (|x|^{2-d} - n^{2-d}) given exact
/// values G at radii |x|.
inline double fit_green_constant(int d, double n, const std::vector<double>& radii, const std::vector<double>& values) {
    require(d >= 3, "constant fit applies to d >= 3");
    require(radii.size() == values.size() && !radii.empty(), "need matching nonempty samples");
    double num = 0, den = 0;
    for (std::size_t i = 0; i < radii.size(); ++i) {
        double f = std::pow(radii[i], 2.0 - d) - std::pow(n, 2.0 - d);
        num += f * values[i];
        den += f * f;
    }
    require(den > 0, "degenerate fit");
    return num / den;
}

}  // namespace sandlab
