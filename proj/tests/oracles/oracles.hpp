#pragma once

// Independent reference implementations used only by tests. None of these call
// into the library code paths they check.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace wsic::oracle {

/// Exhaustive Otsu: for every t in 0..255 computes the between-class variance of
/// {< t} / {>= t} from per-class means, restricted to t >= lowest occupied level;
/// smallest t among (relative 1e-12) ties.
inline int otsu_exhaustive(const std::array<std::uint64_t, 256>& h) {
    long double total = 0;
    for (auto c : h) total += static_cast<long double>(c);
    int lowest = 0;
    while (lowest < 256 && h[lowest] == 0) ++lowest;
    int best_t = lowest;
    long double best = -1.0L;
    for (int t = lowest; t < 256; ++t) {
        long double w0 = 0, w1 = 0, m0 = 0, m1 = 0;
        for (int i = 0; i < 256; ++i) {
            const long double c = static_cast<long double>(h[i]);
            if (i < t) {
                w0 += c;
                m0 += c * i;
            } else {
                w1 += c;
                m1 += c * i;
            }
        }
        long double var = 0;
        if (w0 > 0 && w1 > 0) {
            m0 /= w0;
            m1 /= w1;
            var = (w0 / total) * (w1 / total) * (m0 - m1) * (m0 - m1);
        }
        if (var > best + 1e-12L * std::fabs(best)) {
            best = var;
            best_t = t;
        }
    }
    return best_t;
}

/// Length (in nodes) of the longest simple path in an undirected graph, by
/// depth-first enumeration of every simple path from every start node.
inline int longest_simple_path_nodes(const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    int best = n > 0 ? 1 : 0;
    std::vector<char> used(n, 0);
    std::function<void(int, int)> dfs = [&](int u, int depth) {
        best = std::max(best, depth);
        for (int w : adj[u]) {
            if (!used[w]) {
                used[w] = 1;
                dfs(w, depth + 1);
                used[w] = 0;
            }
        }
    };
    for (int s = 0; s < n; ++s) {
        used[s] = 1;
        dfs(s, 1);
        used[s] = 0;
    }
    return best;
}

/// Closed-form binary entropy in bits.
inline double binary_entropy_bits(double p) {
    if (p <= 0.0 || p >= 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

/// Brute-force hard-margin direction for a 2-D separable set: scans unit
/// directions at 0.05 degree resolution, maximising the gap between the lowest
/// positive projection and the highest negative projection. Returns the angle in
/// radians, or NaN if no direction separates the set.
inline double max_margin_angle_2d(const std::vector<std::array<double, 2>>& xs, const std::vector<int>& ys) {
    constexpr double kPi = 3.14159265358979323846;
    double best_gap = -1.0, best_angle = std::nan("");
    for (int k = 0; k < 7200; ++k) {
        const double a = 2.0 * kPi * k / 7200.0;
        const double ux = std::cos(a), uy = std::sin(a);
        double min_pos = 1e300, max_neg = -1e300;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double proj = ux * xs[i][0] + uy * xs[i][1];
            if (ys[i] > 0) min_pos = std::min(min_pos, proj);
            else max_neg = std::max(max_neg, proj);
        }
        const double gap = min_pos - max_neg;
        if (gap > best_gap) {
            best_gap = gap;
            best_angle = a;
        }
    }
    return best_gap > 0.0 ? best_angle : std::nan("");
}

/// Sample Pearson correlation by the textbook two-pass formula.
inline double pearson_two_pass(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

/// F1 of (score > t) against labels, computed directly.
inline double f1_at(const std::vector<double>& scores, const std::vector<int>& labels, double t) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] > t;
        if (pred && labels[i] == 1) ++tp;
        else if (pred) ++fp;
        else if (labels[i] == 1) ++fn;
    }
    return tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn);
}

} // namespace wsic::oracle
