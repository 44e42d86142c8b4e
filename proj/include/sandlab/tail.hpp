#pragma once

// Empirical survival curves and log-log exponent fits with bootstrap bands.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sandlab/error.hpp"
#include "sandlab/rng.hpp"

namespace sandlab {

/// t_j = 2^{j/2} for j = 0, 1, ... while t_j <= hi.
inline std::vector<double> geometric_grid(double hi) {
    std::vector<double> out;
    for (int j = 0;; ++j) {
        double t = std::ldexp(j % 2 ? std::sqrt(2.0) : 1.0, j / 2);
        if (t > hi * (1 + 1e-12)) break;
        out.push_back(t);
    }
    return out;
}

/// Survivor counts #{replicas with X >= threshold_i}, or for non-nested
/// series, independent success counts per threshold (e.g. one per site z).
struct TailEstimate {
    std::string observable;
    int dim = 0;
    int half_side = 0;
    std::uint64_t seed = 0;
    std::vector<double> thresholds;
    std::vector<std::uint64_t> survivors;
    std::uint64_t replicas = 0;
    bool nested = true;

    double survival(std::size_t i) const {
        return replicas ? static_cast<double>(survivors[i]) / static_cast<double>(replicas) : 0.0;
    }

    /// Binomial standard error sqrt(p(1-p)/n).
    double standard_error(std::size_t i) const {
        if (!replicas) return 0.0;
        const double p = survival(i);
        return std::sqrt(p * (1 - p) / static_cast<double>(replicas));
    }

    void merge(const TailEstimate& other) {
        require(other.thresholds == thresholds && other.observable == observable, "cannot merge unlike tail estimates");
        for (std::size_t i = 0; i < survivors.size(); ++i) survivors[i] += other.survivors[i];
        replicas += other.replicas;
    }

    /// Throws InvariantViolation if counts exceed replicas or a nested curve
    /// increases.
    void check() const {
        ensure(survivors.size() == thresholds.size(), "tail estimate: size mismatch");
        for (std::size_t i = 0; i < survivors.size(); ++i) {
            ensure(survivors[i] <= replicas, "tail estimate: survivors exceed replicas");
            if (nested && i > 0) ensure(survivors[i] <= survivors[i - 1], "tail estimate: survival increases");
        }
    }
};

struct ExponentFit {
    double slope = 0;
    double intercept = 0;
    double window_lo = 0;
    double window_hi = 0;
    std::size_t points = 0;
    double ci_low = 0;
    double ci_high = 0;
    std::size_t resamples = 0;  ///< bootstrap resamples actually used
    double residual_rms = 0;
    double residual_max = 0;
    std::vector<double> residuals;
};

namespace detail {

struct Ols {
    double slope, intercept;
};

inline Ols ols(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    require(sxx > 0, "fit window has no spread in the threshold");
    const double b = sxy / sxx;
    return {b, my - b * mx};
}

inline std::vector<std::size_t> window_indices(const std::vector<double>& x, double lo, double hi) {
    require(lo <= hi, "empty fit window");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] >= lo * (1 - 1e-12) && x[i] <= hi * (1 + 1e-12)) idx.push_back(i);
    return idx;
}

}  // namespace detail

/// Ordinary least squares of log y on log x over lo <= x <= hi. No
/// resampling: ci_low = ci_high = slope.
inline ExponentFit fit_power_law(const std::vector<double>& x, const std::vector<double>& y, double lo, double hi) {
    require(x.size() == y.size(), "fit: size mismatch");
    auto idx = detail::window_indices(x, lo, hi);
    require(idx.size() >= 3, "fit: fewer than 3 points in the window");
    std::vector<double> lx, ly;
    for (std::size_t i : idx) {
        require(x[i] > 0, "fit: thresholds must be positive");
        require(y[i] > 0, "fit: zero-survival point in the window");
        lx.push_back(std::log(x[i]));
        ly.push_back(std::log(y[i]));
    }
    detail::Ols f = detail::ols(lx, ly);
    ExponentFit out;
    out.slope = f.slope;
    out.intercept = f.intercept;
    out.window_lo = lo;
    out.window_hi = hi;
    out.points = idx.size();
    out.ci_low = out.ci_high = f.slope;
    double ss = 0;
    for (std::size_t k = 0; k < lx.size(); ++k) {
        double r = ly[k] - (f.intercept + f.slope * lx[k]);
        out.residuals.push_back(r);
        ss += r * r;
        out.residual_max = std::max(out.residual_max, std::abs(r));
    }
    out.residual_rms = std::sqrt(ss / static_cast<double>(lx.size()));
    return out;
}

/// Log-log fit of a survival curve with a percentile bootstrap over
/// replicas. Nested curves are resampled as one multinomial draw over the
/// bins the thresholds cut; non-nested series point by point. Resamples
/// with a zero in the window are discarded.
inline ExponentFit fit_exponent(const TailEstimate& t, double lo, double hi, std::size_t resamples = 1000,
                                std::uint64_t seed = 0) {
    t.check();
    require(t.replicas > 0, "fit: no replicas");
    std::vector<double> y(t.thresholds.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = t.survival(i);
    ExponentFit out = fit_power_law(t.thresholds, y, lo, hi);
    if (resamples == 0) return out;

    const std::size_t m = t.thresholds.size();
    const auto n = static_cast<std::int64_t>(t.replicas);
    // Nested bins: bin i holds replicas surviving threshold i but not i+1;
    // bin m holds the rest (below threshold 0).
    std::vector<double> bin_p(m + 1, 0.0);
    if (t.nested) {
        for (std::size_t i = 0; i < m; ++i)
            bin_p[i] = static_cast<double>(t.survivors[i] - (i + 1 < m ? t.survivors[i + 1] : 0)) / static_cast<double>(n);
        bin_p[m] = static_cast<double>(t.replicas - (m ? t.survivors[0] : 0)) / static_cast<double>(n);
    }
    std::vector<double> slopes;
    std::vector<double> ys(m);
    std::vector<std::int64_t> counts(m + 1);
    for (std::size_t b = 0; b < resamples; ++b) {
        Stream rng(seed, b);
        if (t.nested) {
            // Multinomial via sequential conditional binomials.
            std::int64_t left = n;
            double mass = 1.0;
            for (std::size_t i = 0; i <= m; ++i) {
                if (left == 0 || mass <= 0) {
                    counts[i] = 0;
                    continue;
                }
                const double p = std::clamp(bin_p[i] / mass, 0.0, 1.0);
                counts[i] = i == m ? left : std::binomial_distribution<std::int64_t>(left, p)(rng);
                left -= counts[i];
                mass -= bin_p[i];
            }
            std::int64_t tail = 0;
            for (std::size_t i = m; i-- > 0;) {
                tail += counts[i];
                ys[i] = static_cast<double>(tail) / static_cast<double>(n);
            }
        } else {
            for (std::size_t i = 0; i < m; ++i)
                ys[i] = static_cast<double>(std::binomial_distribution<std::int64_t>(n, t.survival(i))(rng)) /
                        static_cast<double>(n);
        }
        try {
            slopes.push_back(fit_power_law(t.thresholds, ys, lo, hi).slope);
        } catch (const ConfigError&) {
            // zero in the window for this resample
        }
    }
    out.resamples = slopes.size();
    if (!slopes.empty()) {
        std::sort(slopes.begin(), slopes.end());
        auto q = [&](double a) {
            const double pos = a * static_cast<double>(slopes.size() - 1);
            const auto k = static_cast<std::size_t>(pos);
            const double frac = pos - static_cast<double>(k);
            return k + 1 < slopes.size() ? slopes[k] * (1 - frac) + slopes[k + 1] * frac : slopes[k];
        };
        out.ci_low = q(0.025);
        out.ci_high = q(0.975);
    }
    return out;
}

/// Default window: drop the 4 smallest thresholds (lattice effects) and the
/// top decade below `scale` (boundary truncation). On boxes too small for
/// that to leave 3 points, the window runs up to `scale` itself.
inline std::pair<double, double> default_window(const std::vector<double>& thresholds, double scale) {
    require(thresholds.size() > 4, "too few thresholds for the default window");
    const double lo = thresholds[4];
    if (detail::window_indices(thresholds, lo, std::max(lo, scale / 10.0)).size() >= 3) return {lo, scale / 10.0};
    return {lo, std::max(lo, scale)};
}

}  // namespace sandlab
