#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "vaesynth/errors.hpp"
#include "vaesynth/numcore/rng.hpp"

namespace vaesynth::latentmap {

/// n points in k dimensions, row-major, with one class label per point.
struct PointCloud {
    std::size_t n = 0;
    std::size_t k = 0;
    std::vector<double> values;
    std::vector<std::size_t> labels;

    PointCloud() = default;
    PointCloud(std::size_t rows, std::size_t dims, std::vector<double> v, std::vector<std::size_t> l)
        : n(rows), k(dims), values(std::move(v)), labels(std::move(l)) {
        validate();
    }

    const double* row(std::size_t i) const { return values.data() + i * k; }

    void validate() const {
        if (k < 2) throw ValidationError("point cloud needs k >= 2 dimensions");
        if (values.size() != n * k) throw ShapeError("point cloud values do not match n x k");
        if (labels.size() != n) throw ShapeError("point cloud label count does not match n");
    }
};

struct Projection2D {
    std::vector<std::array<double, 2>> coords;
    std::string method;                     // "pca" or "tsne"
    std::map<std::string, double> params;   // settings used and diagnostics
    std::vector<std::vector<double>> components;  // pca only: unit loading vectors

    std::size_t size() const noexcept { return coords.size(); }
};

inline double sq_dist(const double* a, const double* b, std::size_t k) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

/// Mean intra-class pairwise distance over mean inter-class pairwise distance.
/// Labels only pick which pairs are averaged. Lower means better separated.
inline double cluster_separation(const std::vector<double>& values, std::size_t k,
                                 const std::vector<std::size_t>& labels) {
    const std::size_t n = labels.size();
    if (k == 0 || values.size() != n * k) throw ShapeError("cluster_separation: values do not match labels");
    std::map<std::size_t, std::size_t> sizes;
    for (auto l : labels) ++sizes[l];
    if (sizes.size() < 2) throw ValidationError("cluster_separation needs at least 2 classes");
    for (const auto& [label, count] : sizes) {
        if (count < 2) throw ValidationError("cluster_separation: class " + std::to_string(label) + " has fewer than 2 points");
    }
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double d = std::sqrt(sq_dist(&values[i * k], &values[j * k], k));
            if (labels[i] == labels[j]) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    }
    const double mean_inter = inter / static_cast<double>(n_inter);
    if (mean_inter == 0.0) return 1.0;  // every point coincides
    return (intra / static_cast<double>(n_intra)) / mean_inter;
}

inline double cluster_separation(const PointCloud& cloud) {
    return cluster_separation(cloud.values, cloud.k, cloud.labels);
}

inline double cluster_separation(const Projection2D& proj, const std::vector<std::size_t>& labels) {
    std::vector<double> flat;
    flat.reserve(proj.coords.size() * 2);
    for (const auto& c : proj.coords) flat.insert(flat.end(), c.begin(), c.end());
    return cluster_separation(flat, 2, labels);
}

/// Top-2 principal components by power iteration with deflation.
inline Projection2D pca_2d(const PointCloud& cloud, double tol = 1e-9, std::size_t max_iter = 10000) {
    cloud.validate();
    if (cloud.n < 3) throw ValidationError("pca_2d needs at least 3 points");
    const std::size_t n = cloud.n, k = cloud.k;
    std::vector<double> mean(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) mean[j] += cloud.row(i)[j];
    }
    for (auto& m : mean) m /= static_cast<double>(n);
    std::vector<double> centered(n * k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) centered[i * k + j] = cloud.row(i)[j] - mean[j];
    }
    std::vector<double> cov(k * k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = &centered[i * k];
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = a; b < k; ++b) cov[a * k + b] += r[a] * r[b];
        }
    }
    for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = a; b < k; ++b) {
            cov[a * k + b] /= static_cast<double>(n - 1);
            cov[b * k + a] = cov[a * k + b];
        }
    }
    double trace = 0.0;
    for (std::size_t a = 0; a < k; ++a) trace += cov[a * k + a];

    Projection2D out;
    out.method = "pca";
    out.params["tolerance"] = tol;
    out.params["max_iterations"] = static_cast<double>(max_iter);
    out.params["total_variance"] = trace;
    out.coords.assign(n, {0.0, 0.0});
    if (trace <= 0.0) {
        out.params["zero_variance"] = 1.0;
        return out;
    }

    const auto normalize = [](std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        s = std::sqrt(s);
        if (s > 0.0) {
            for (auto& x : v) x /= s;
        }
        return s;
    };
    const auto orthogonalize = [&](std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t j = 0; j < k; ++j) dot += v[j] * b[j];
            for (std::size_t j = 0; j < k; ++j) v[j] -= dot * b[j];
        }
    };

    std::vector<std::vector<double>> comps;
    std::vector<double> eigvals;
    numcore::Rng rng(0x9ca);
    std::vector<double> deflated = cov;
    std::size_t iterations_used = 0;
    for (int c = 0; c < 2; ++c) {
        std::vector<double> v(k);
        for (auto& x : v) x = rng.uniform(-1.0, 1.0);
        orthogonalize(v, comps);
        normalize(v);
        double lambda = 0.0;
        for (std::size_t it = 0; it < max_iter; ++it, ++iterations_used) {
            std::vector<double> w(k, 0.0);
            for (std::size_t a = 0; a < k; ++a) {
                for (std::size_t b = 0; b < k; ++b) w[a] += deflated[a * k + b] * v[b];
            }
            orthogonalize(w, comps);
            lambda = normalize(w);
            if (lambda <= 1e-300) {
                // Remaining variance is zero; any unit vector orthogonal to the found ones works.
                lambda = 0.0;
                break;
            }
            double diff = 0.0;
            for (std::size_t j = 0; j < k; ++j) diff = std::max(diff, std::abs(w[j] - v[j]));
            v = std::move(w);
            if (diff < tol) break;
        }
        // largest-magnitude loading positive
        std::size_t arg = 0;
        for (std::size_t j = 1; j < k; ++j) {
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        }
        if (v[arg] < 0) {
            for (auto& x : v) x = -x;
        }
        for (std::size_t a = 0; a < k; ++a) {
            for (std::size_t b = 0; b < k; ++b) deflated[a * k + b] -= lambda * v[a] * v[b];
        }
        comps.push_back(v);
        eigvals.push_back(lambda);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (int c = 0; c < 2; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < k; ++j) s += centered[i * k + j] * comps[c][j];
            out.coords[i][static_cast<std::size_t>(c)] = s;
        }
    }
    out.params["eigenvalue_1"] = eigvals[0];
    out.params["eigenvalue_2"] = eigvals[1];
    out.params["explained_variance"] = (eigvals[0] + eigvals[1]) / trace;
    out.params["power_iterations"] = static_cast<double>(iterations_used);
    out.components = std::move(comps);
    return out;
}

}  // namespace vaesynth::latentmap
