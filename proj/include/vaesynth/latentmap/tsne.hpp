#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vaesynth/errors.hpp"
#include "vaesynth/latentmap/projection.hpp"
#include "vaesynth/numcore/rng.hpp"

namespace vaesynth::latentmap {

struct TsneConfig {
    double perplexity = 10.0;
    std::size_t iterations = 500;
    std::uint64_t seed = 0;
    double learning_rate = 100.0;
    double exaggeration = 4.0;
    std::size_t exaggeration_iters = 100;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    std::size_t momentum_switch = 250;
    double entropy_tol = 1e-5;
    std::size_t max_bisections = 50;
    double init_stddev = 1e-4;
};

/// Row-wise conditional affinities p_{j|i}, calibrated so each row's entropy (nats)
/// equals log(perplexity). Returned row-major n x n with a zero diagonal.
inline std::vector<double> conditional_affinities(const std::vector<double>& sq_dists, std::size_t n,
                                                  const TsneConfig& cfg, std::vector<double>* entropies = nullptr) {
    const double target = std::log(cfg.perplexity);
    std::vector<double> p(n * n, 0.0);
    if (entropies) entropies->assign(n, 0.0);
    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
        double dmin = std::numeric_limits<double>::infinity(), dsum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            dmin = std::min(dmin, sq_dists[i * n + j]);
            dsum += sq_dists[i * n + j];
        }
        const double dscale = dsum > 0.0 ? dsum / static_cast<double>(n - 1) : 1.0;
        // Entropy decreases monotonically in the precision beta; bisect log2(beta * dscale).
        const auto entropy_at = [&](double log2beta) {
            const double beta = std::exp2(log2beta) / dscale;
            double z = 0.0, wsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    row[j] = 0.0;
                    continue;
                }
                const double shifted = sq_dists[i * n + j] - dmin;
                row[j] = std::exp(-beta * shifted);
                z += row[j];
                wsum += shifted * row[j];
            }
            return std::log(z) + beta * wsum / z;
        };
        double lo = -64.0, hi = 64.0, mid = 0.0, h = 0.0;
        bool ok = false;
        for (std::size_t it = 0; it < cfg.max_bisections; ++it) {
            mid = 0.5 * (lo + hi);
            h = entropy_at(mid);
            if (std::abs(h - target) <= cfg.entropy_tol) {
                ok = true;
                break;
            }
            if (h > target) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (!ok) {
            throw ValidationError("tsne: cannot calibrate row " + std::to_string(i) + " to perplexity " +
                                  std::to_string(cfg.perplexity) + " (entropy " + std::to_string(h) + ", target " +
                                  std::to_string(target) + "); too many duplicate points");
        }
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += row[j];
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = row[j] / z;
        if (entropies) (*entropies)[i] = h;
    }
    return p;
}

/// Symmetrized joint affinities (p_{j|i} + p_{i|j}) / 2n.
inline std::vector<double> joint_affinities(const PointCloud& cloud, const TsneConfig& cfg) {
    const std::size_t n = cloud.n;
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            d[i * n + j] = d[j * n + i] = sq_dist(cloud.row(i), cloud.row(j), cloud.k);
        }
    }
    const auto cond = conditional_affinities(d, n, cfg);
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n));
        }
    }
    return p;
}

/// KL(P || Q) for an embedding y (n x 2, row-major) with Student-t affinities Q.
inline double tsne_kl(const std::vector<double>& p, const std::vector<double>& y, std::size_t n) {
    double zsum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) zsum += 1.0 / (1.0 + sq_dist(&y[2 * i], &y[2 * j], 2));
        }
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double pij = p[i * n + j];
            if (i == j || pij <= 0.0) continue;
            const double q = (1.0 / (1.0 + sq_dist(&y[2 * i], &y[2 * j], 2))) / zsum;
            kl += pij * std::log(pij / std::max(q, 1e-300));
        }
    }
    return kl;
}

/// Exact O(n^2) t-SNE to two dimensions.
inline Projection2D tsne_2d(const PointCloud& cloud, const TsneConfig& cfg = {}) {
    cloud.validate();
    const std::size_t n = cloud.n;
    if (n < 5) throw ValidationError("tsne_2d needs at least 5 points");
    if (!(cfg.perplexity > 0.0) || cfg.perplexity >= static_cast<double>(n)) {
        throw ValidationError("tsne_2d: perplexity must lie in (0, n)");
    }
    const auto p = joint_affinities(cloud, cfg);

    numcore::Rng rng = numcore::Rng::stream(cfg.seed, "tsne");
    std::vector<double> y(2 * n), velocity(2 * n, 0.0), grad(2 * n), num(n * n);
    rng.fill_normal(std::span<double>(y), 0.0, cfg.init_stddev);

    Projection2D out;
    out.method = "tsne";
    out.params["perplexity"] = cfg.perplexity;
    out.params["iterations"] = static_cast<double>(cfg.iterations);
    out.params["seed"] = static_cast<double>(cfg.seed);
    out.params["learning_rate"] = cfg.learning_rate;
    out.params["kl_initial"] = tsne_kl(p, y, n);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const double exag = it < cfg.exaggeration_iters ? cfg.exaggeration : 1.0;
        const double momentum = it < cfg.momentum_switch ? cfg.momentum_initial : cfg.momentum_final;
        double zsum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double v = 1.0 / (1.0 + sq_dist(&y[2 * i], &y[2 * j], 2));
                num[i * n + j] = num[j * n + i] = v;
                zsum += 2.0 * v;
            }
        }
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double coef = 4.0 * (exag * p[i * n + j] - num[i * n + j] / zsum) * num[i * n + j];
                grad[2 * i] += coef * (y[2 * i] - y[2 * j]);
                grad[2 * i + 1] += coef * (y[2 * i + 1] - y[2 * j + 1]);
            }
        }
        for (std::size_t e = 0; e < 2 * n; ++e) {
            velocity[e] = momentum * velocity[e] - cfg.learning_rate * grad[e];
            y[e] += velocity[e];
        }
        double mx = 0.0, my = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += y[2 * i];
            my += y[2 * i + 1];
        }
        mx /= static_cast<double>(n);
        my /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[2 * i] -= mx;
            y[2 * i + 1] -= my;
        }
    }
    out.params["kl_final"] = tsne_kl(p, y, n);
    out.coords.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.coords[i] = {y[2 * i], y[2 * i + 1]};
    for (const auto& c : out.coords) {
        if (!std::isfinite(c[0]) || !std::isfinite(c[1])) throw ValidationError("tsne_2d diverged to non-finite coordinates");
    }
    return out;
}

inline Projection2D tsne_2d(const PointCloud& cloud, double perplexity, std::size_t iterations, std::uint64_t seed) {
    TsneConfig cfg;
    cfg.perplexity = perplexity;
    cfg.iterations = iterations;
    cfg.seed = seed;
    return tsne_2d(cloud, cfg);
}

}  // namespace vaesynth::latentmap
