#pragma once

// Wired subgraphs of Z^d: a finite domain V whose exterior is collapsed into a
// single sink vertex s. Every site keeps all 2d lattice directions as edge
// slots; a slot whose lattice neighbour lies outside V is a sink edge, so
// parallel edges to s stay distinguishable by direction.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "sandlab/error.hpp"

namespace sandlab {

using Site = std::uint32_t;
inline constexpr Site kNoSite = std::numeric_limits<Site>::max();
inline constexpr int kMaxDim = 5;

using Point = std::array<int, kMaxDim>;

enum class Shape {
    Cube,  ///< V(L) = [-L, L]^d
    Ball,  ///< B(L) = { x : |x| <= L }, Euclidean
    Grid,  ///< [0, n_1 - 1] x ... x [0, n_d - 1], origin at the corner
};

struct BoxSpec {
    int dim = 2;
    int half_side = 1;        ///< L for Cube, radius for Ball; unused for Grid
    Shape shape = Shape::Cube;
    std::vector<int> extents; ///< Grid only

    static BoxSpec cube(int d, int L) { return {d, L, Shape::Cube, {}}; }
    static BoxSpec ball(int d, int radius) { return {d, radius, Shape::Ball, {}}; }
    static BoxSpec grid(std::vector<int> extents) {
        BoxSpec s;
        s.dim = static_cast<int>(extents.size());
        s.half_side = 0;
        s.shape = Shape::Grid;
        s.extents = std::move(extents);
        return s;
    }

    int lower(int /*axis*/) const { return shape == Shape::Grid ? 0 : -half_side; }
    int upper(int axis) const {
        return shape == Shape::Grid ? extents[static_cast<std::size_t>(axis)] - 1 : half_side;
    }

    bool contains(const Point& p) const {
        long long r2 = 0;
        for (int i = 0; i < dim; ++i) {
            if (p[i] < lower(i) || p[i] > upper(i)) return false;
            r2 += static_cast<long long>(p[i]) * p[i];
        }
        if (shape == Shape::Ball) return r2 <= static_cast<long long>(half_side) * half_side;
        return true;
    }

    /// Number of lattice points in the bounding box [lower, upper].
    double bounding_volume() const {
        double v = 1;
        for (int i = 0; i < dim; ++i) v *= upper(i) - lower(i) + 1;
        return v;
    }

    std::string describe() const {
        std::string s;
        switch (shape) {
            case Shape::Cube: s = "cube"; break;
            case Shape::Ball: s = "ball"; break;
            case Shape::Grid: s = "grid"; break;
        }
        s += " d=" + std::to_string(dim);
        if (shape == Shape::Grid) {
            s += " extents=";
            for (std::size_t i = 0; i < extents.size(); ++i)
                s += (i ? "x" : "") + std::to_string(extents[i]);
        } else {
            s += " L=" + std::to_string(half_side);
        }
        return s;
    }
};

/// Immutable after construction; safe to share read-only between threads.
class WiredGraph {
public:
    /// Site budget guard; callers may lower it.
    static constexpr double kDefaultSiteBudget = 3.0e7;

    explicit WiredGraph(BoxSpec spec, double site_budget = kDefaultSiteBudget) : spec_(std::move(spec)) {
        validate(site_budget);
        const int d = spec_.dim;
        degree_ = 2 * d;

        // Row-major over the bounding box, first axis slowest.
        std::array<long long, kMaxDim> stride{};
        long long total = 1;
        for (int i = d - 1; i >= 0; --i) {
            stride[i] = total;
            total *= spec_.upper(i) - spec_.lower(i) + 1;
        }
        index_of_offset_.assign(static_cast<std::size_t>(total), kNoSite);
        Point p{};
        for (long long off = 0; off < total; ++off) {
            long long rem = off;
            for (int i = 0; i < d; ++i) {
                p[i] = static_cast<int>(rem / stride[i]) + spec_.lower(i);
                rem %= stride[i];
            }
            if (!spec_.contains(p)) continue;
            index_of_offset_[static_cast<std::size_t>(off)] = static_cast<Site>(coords_.size() / d);
            for (int i = 0; i < d; ++i) coords_.push_back(static_cast<std::int16_t>(p[i]));
        }
        stride_ = stride;
        size_ = static_cast<Site>(coords_.size() / d);

        neighbours_.resize(static_cast<std::size_t>(size_) * degree_);
        sink_edges_.assign(size_, 0);
        for (Site x = 0; x < size_; ++x) {
            Point q = coords(x);
            for (int slot = 0; slot < degree_; ++slot) {
                Point r = q;
                r[slot / 2] += (slot % 2 == 0) ? 1 : -1;
                Site y = site_at(r);
                if (y == kNoSite) {
                    y = sink();
                    ++sink_edges_[x];
                }
                neighbours_[static_cast<std::size_t>(x) * degree_ + slot] = y;
            }
        }
        origin_ = site_at(Point{});
    }

    const BoxSpec& spec() const { return spec_; }
    int dim() const { return spec_.dim; }
    int degree() const { return degree_; }
    Site size() const { return size_; }
    Site sink() const { return size_; }
    bool is_sink(Site v) const { return v == size_; }

    /// Origin o; kNoSite if the domain does not contain the zero vector.
    Site origin() const { return origin_; }

    /// Endpoint of edge slot `slot` at x. Slot 2i is +e_{i+1}, slot 2i+1 is -e_{i+1}.
    Site neighbour(Site x, int slot) const {
        return neighbours_[static_cast<std::size_t>(x) * degree_ + slot];
    }
    const Site* neighbour_row(Site x) const { return &neighbours_[static_cast<std::size_t>(x) * degree_]; }

    int sink_edges(Site x) const { return sink_edges_[x]; }

    Point coords(Site x) const {
        Point p{};
        for (int i = 0; i < spec_.dim; ++i) p[i] = coords_[static_cast<std::size_t>(x) * spec_.dim + i];
        return p;
    }

    Site site_at(const Point& p) const {
        long long off = 0;
        for (int i = 0; i < spec_.dim; ++i) {
            if (p[i] < spec_.lower(i) || p[i] > spec_.upper(i)) return kNoSite;
            off += static_cast<long long>(p[i] - spec_.lower(i)) * stride_[i];
        }
        return index_of_offset_[static_cast<std::size_t>(off)];
    }

    /// Site at multiple k of the unit vector e_{axis+1}.
    Site along_axis(int k, int axis = 0) const {
        Point p{};
        p[axis] = k;
        return site_at(p);
    }

    long long euclidean_sq(Site x, Site centre) const {
        long long s = 0;
        for (int i = 0; i < spec_.dim; ++i) {
            long long t = coord(x, i) - coord(centre, i);
            s += t * t;
        }
        return s;
    }
    double euclidean(Site x, Site centre) const { return std::sqrt(static_cast<double>(euclidean_sq(x, centre))); }
    int linf(Site x, Site centre) const {
        int m = 0;
        for (int i = 0; i < spec_.dim; ++i) m = std::max(m, std::abs(coord(x, i) - coord(centre, i)));
        return m;
    }
    int l1(Site x, Site centre) const {
        int s = 0;
        for (int i = 0; i < spec_.dim; ++i) s += std::abs(coord(x, i) - coord(centre, i));
        return s;
    }

    int coord(Site x, int axis) const { return coords_[static_cast<std::size_t>(x) * spec_.dim + axis]; }

private:
    void validate(double site_budget) const {
        require(spec_.dim >= 2 && spec_.dim <= kMaxDim, "dimension must be in {2,...,5}");
        if (spec_.shape == Shape::Grid) {
            require(static_cast<int>(spec_.extents.size()) == spec_.dim, "grid extents must match dimension");
            for (int e : spec_.extents) require(e >= 1, "grid extents must be positive");
        } else {
            require(spec_.half_side >= 1, "half-side L must be at least 1");
            require(spec_.half_side <= 16000, "half-side L too large for 16-bit coordinates");
        }
        if (spec_.bounding_volume() > site_budget)
            throw ResourceError("box " + spec_.describe() + " exceeds the site budget");
    }

    BoxSpec spec_;
    int degree_ = 0;
    Site size_ = 0;
    Site origin_ = kNoSite;
    std::array<long long, kMaxDim> stride_{};
    std::vector<Site> index_of_offset_;
    std::vector<std::int16_t> coords_;
    std::vector<Site> neighbours_;
    std::vector<std::uint8_t> sink_edges_;
};

inline WiredGraph build_wired_box(const BoxSpec& spec, double site_budget = WiredGraph::kDefaultSiteBudget) {
    return WiredGraph(spec, site_budget);
}

}  // namespace sandlab
