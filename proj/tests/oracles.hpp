#pragma once

// Independent reference implementations used only by the tests. They share
// nothing with the library beyond the graph's neighbour table.

#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "sandlab/lattice.hpp"

namespace oracle {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;
using Matrix = std::vector<std::vector<long long>>;

/// Dense Laplacian built directly from coordinates, not from the library's view.
inline Matrix laplacian(const sandlab::WiredGraph& g, long long extra_at = -1) {
    const auto n = g.size();
    Matrix m(n, std::vector<long long>(n, 0));
    for (sandlab::Site x = 0; x < n; ++x) {
        m[x][x] = 2 * g.dim() + (static_cast<long long>(x) == extra_at ? 1 : 0);
        for (sandlab::Site y = 0; y < n; ++y)
            if (x != y && g.l1(x, y) == 1) m[x][y] = -1;
    }
    return m;
}

/// Cofactor expansion along the first row; fine for n <= 8.
inline cpp_int det(const Matrix& a) {
    const std::size_t n = a.size();
    if (n == 0) return 1;
    if (n == 1) return a[0][0];
    cpp_int total = 0;
    for (std::size_t j = 0; j < n; ++j) {
        if (a[0][j] == 0) continue;
        Matrix minor;
        for (std::size_t i = 1; i < n; ++i) {
            std::vector<long long> row;
            for (std::size_t k = 0; k < n; ++k)
                if (k != j) row.push_back(a[i][k]);
            minor.push_back(std::move(row));
        }
        cpp_int term = a[0][j] * det(minor);
        total += (j % 2 == 0) ? term : cpp_int(-term);
    }
    return total;
}

/// (Delta^{-1})(x, y) by Cramer's rule.
inline cpp_rational inverse_entry(const Matrix& a, std::size_t x, std::size_t y) {
    Matrix minor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i == y) continue;
        std::vector<long long> row;
        for (std::size_t k = 0; k < a.size(); ++k)
            if (k != x) row.push_back(a[i][k]);
        minor.push_back(std::move(row));
    }
    cpp_int c = det(minor);
    if ((x + y) % 2) c = -c;
    return cpp_rational(c, det(a));
}

/// Spanning trees of the wired graph counted by choosing |V| edges out of the
/// explicit multigraph edge list and testing acyclicity with union-find.
inline std::uint64_t count_trees(const sandlab::WiredGraph& g) {
    const auto n = g.size();
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    for (sandlab::Site x = 0; x < n; ++x)
        for (int s = 0; s < g.degree(); ++s) {
            auto y = g.neighbour(x, s);
            if (g.is_sink(y) || x < y) edges.emplace_back(x, y);
        }
    const std::size_t m = edges.size();
    std::uint64_t count = 0;
    std::vector<std::size_t> pick(n);
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t start, std::size_t depth) {
        if (depth == n) {
            std::vector<std::size_t> parent(n + 1);
            std::iota(parent.begin(), parent.end(), 0);
            std::function<std::size_t(std::size_t)> find = [&](std::size_t v) {
                return parent[v] == v ? v : parent[v] = find(parent[v]);
            };
            for (std::size_t i : pick) {
                auto a = find(edges[i].first), b = find(edges[i].second);
                if (a == b) return;
                parent[a] = b;
            }
            ++count;
            return;
        }
        for (std::size_t i = start; i < m; ++i) {
            pick[depth] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return count;
}

/// Reference stabilization: repeatedly sweep all sites, toppling the first
/// unstable one once.
inline std::pair<std::vector<std::uint64_t>, std::vector<std::uint64_t>> naive_stabilize(
    const sandlab::WiredGraph& g, std::vector<std::uint64_t> h) {
    const auto n = g.size();
    const std::uint64_t deg = 2 * static_cast<std::uint64_t>(g.dim());
    std::vector<std::uint64_t> odo(n, 0);
    bool changed = true;
    while (changed) {
        changed = false;
        for (sandlab::Site x = 0; x < n; ++x) {
            if (h[x] < deg) continue;
            h[x] -= deg;
            ++odo[x];
            for (sandlab::Site y = 0; y < n; ++y)
                if (g.l1(x, y) == 1) ++h[y];
            changed = true;
            break;
        }
    }
    return {h, odo};
}

}  // namespace oracle
